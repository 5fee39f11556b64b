#include "semidiff/wavelet.hpp"

#include "semidiff/errors.hpp"

namespace semidiff::wavelet {

namespace {

// Lifts [C, H, W] to [1, C, H, W]; remembers whether to squeeze on the way out.
std::pair<torch::Tensor, bool> as_batched(const torch::Tensor& x, const char* op) {
  if (x.dim() == 4) return {x, false};
  if (x.dim() == 3) return {x.unsqueeze(0), true};
  throw DimensionError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " +
                       shape_string(x.sizes().vec()));
}

}  // namespace

torch::Tensor dwt(const torch::Tensor& image) {
  auto [x, squeeze] = as_batched(image, "dwt");
  const int64_t h = x.size(2), w = x.size(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("dwt: spatial dimensions must be even, got " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  if (!torch::isfinite(x).all().item<bool>()) {
    throw ValidationError("dwt: input contains non-finite values");
  }
  using torch::indexing::None;
  using torch::indexing::Slice;
  auto a = x.index({Slice(), Slice(), Slice(0, None, 2), Slice(0, None, 2)});
  auto b = x.index({Slice(), Slice(), Slice(0, None, 2), Slice(1, None, 2)});
  auto c = x.index({Slice(), Slice(), Slice(1, None, 2), Slice(0, None, 2)});
  auto d = x.index({Slice(), Slice(), Slice(1, None, 2), Slice(1, None, 2)});

  auto ll = (a + b + c + d) * 0.5;
  auto lh = (a + b - c - d) * 0.5;
  auto hl = (a - b + c - d) * 0.5;
  auto hh = (a - b - c + d) * 0.5;

  // [N, C, 4, h/2, w/2] -> [N, 4C, h/2, w/2]
  auto out = torch::stack({ll, lh, hl, hh}, 2).flatten(1, 2);
  return squeeze ? out.squeeze(0) : out;
}

torch::Tensor idwt(const torch::Tensor& subbands) {
  auto [w, squeeze] = as_batched(subbands, "idwt");
  const int64_t channels = w.size(1);
  if (channels % 4 != 0) {
    throw DimensionError("idwt: channel count must be a multiple of 4, got " +
                         std::to_string(channels));
  }
  const int64_t n = w.size(0), h = w.size(2), wd = w.size(3);
  auto bands = w.reshape({n, channels / 4, 4, h, wd});
  auto ll = bands.select(2, 0);
  auto lh = bands.select(2, 1);
  auto hl = bands.select(2, 2);
  auto hh = bands.select(2, 3);

  auto a = (ll + lh + hl + hh) * 0.5;
  auto b = (ll + lh - hl - hh) * 0.5;
  auto c = (ll - lh + hl - hh) * 0.5;
  auto d = (ll - lh - hl + hh) * 0.5;

  // Interleave back: rows of (a b) and (c d) blocks.
  auto top = torch::stack({a, b}, -1).flatten(-2);     // [n, C, h, 2w]
  auto bottom = torch::stack({c, d}, -1).flatten(-2);  // [n, C, h, 2w]
  auto out = torch::stack({top, bottom}, -2).flatten(-3, -2);  // [n, C, 2h, 2w]
  return squeeze ? out.squeeze(0) : out;
}

}  // namespace semidiff::wavelet
