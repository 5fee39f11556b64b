#include "common.hpp"

#include "semidiff/quality.hpp"

using namespace semidiff::warehouse;
namespace F = torch::nn::functional;

namespace {

torch::Tensor checkerboard(int64_t n, int64_t cell) {
  auto idx = torch::arange(n) / cell;
  auto board = ((idx.view({-1, 1}) + idx.view({1, -1})) % 2).to(torch::kFloat32) * 1.6 - 0.8;
  return board.unsqueeze(0).repeat({3, 1, 1});
}

torch::Tensor gaussian_blur(const torch::Tensor& img, double sigma) {
  auto r = torch::arange(-3, 4, torch::kFloat32);
  auto g = torch::exp(-r.square() / (2 * sigma * sigma));
  g = g / g.sum();
  auto k = (g.view({-1, 1}) * g.view({1, -1})).expand({3, 1, 7, 7}).contiguous();
  auto padded = F::pad(img.unsqueeze(0), F::PadFuncOptions({3, 3, 3, 3}).mode(torch::kReplicate));
  return F::conv2d(padded, k, F::Conv2dFuncOptions().groups(3)).squeeze(0);
}

}  // namespace

TEST_CASE("proxy scorer on flat, blurred and streaked images") {
  ProxyScorer q;
  auto flat = torch::full({3, 32, 32}, 0.3);
  CHECK(ProxyScorer::gradient_term(flat) == 0.0);
  CHECK(q.score(flat) == 0.0);

  auto board = checkerboard(32, 4);
  const double sharp = q.score(board);
  const double mild = q.score(gaussian_blur(board, 0.8));
  const double heavy = q.score(gaussian_blur(board, 1.6));
  CHECK(sharp > mild);
  CHECK(mild > heavy);
  CHECK(q.score(board) == sharp);

  // A straight step edge survives the median; a one-pixel line does not.
  auto step = torch::full({3, 32, 32}, -0.5);
  step.narrow(2, 16, 16).fill_(0.5);
  CHECK(ProxyScorer::median_residual_term(step) == 0.0);
  auto streak = torch::full({3, 32, 32}, -0.5);
  streak.select(2, 10).fill_(0.9);
  CHECK(ProxyScorer::median_residual_term(streak) > 0.0);
  CHECK(q.score(streak) < ProxyScorer::gradient_term(streak));

  CHECK(q.score(board.unsqueeze(0)) == sharp);
}
