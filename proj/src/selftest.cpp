#include "semidiff/selftest.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>

#include "semidiff/backbone.hpp"
#include "semidiff/checkpoint.hpp"
#include "semidiff/diffusion.hpp"
#include "semidiff/losses.hpp"
#include "semidiff/quality.hpp"
#include "semidiff/random.hpp"
#include "semidiff/tiler.hpp"
#include "semidiff/warehouse.hpp"
#include "semidiff/wavelet.hpp"

namespace semidiff::selftest {

namespace {

bool wavelet_round_trip() {
  auto gen = make_generator(11);
  for (int i = 0; i < 50; ++i) {
    auto x = torch::rand({3, 64, 64}, gen) * 2 - 1;
    auto back = wavelet::idwt(wavelet::dwt(x));
    if ((back - x).abs().max().item<double>() > 1e-5) return false;
  }
  return true;
}

bool schedule_posterior() {
  auto s = diffusion::NoiseSchedule::make(4);
  s.validate();
  if (s.alpha_bar[0] != 1.0 || s.posterior_var[1] != 0.0) return false;
  for (int t = 2; t <= 4; ++t) {
    const double var = (1 - s.alpha_bar[t - 1]) * s.beta[t] / (1 - s.alpha_bar[t]);
    if (std::abs(var - s.posterior_var[t]) > 1e-12) return false;
  }
  return true;
}

bool ema_endpoints() {
  auto a = backbone::build_generator(backbone::GeneratorConfig::tiny());
  auto cfg = backbone::GeneratorConfig::tiny();
  cfg.seed = 5;
  auto b = backbone::build_generator(cfg);
  auto ta = backbone::take_snapshot(*a), tb = backbone::take_snapshot(*b);
  return backbone::ema_update(ta, tb, 1.0) == ta && backbone::ema_update(ta, tb, 0.0) == tb;
}

bool gate_fuzz() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> q(0, 100), l(0, 0.3);
  warehouse::ConsistencyGate gate;
  for (int i = 0; i < 1000; ++i) {
    const double qt = q(rng), qs = q(rng), qr = q(rng), l1 = l(rng);
    bool expect = false;
    if (qt > qs && qt > qr && l1 < 0.1) expect = true;
    if (warehouse::gate_accepts(qt, qs, qr, l1, gate) != expect) return false;
  }
  return true;
}

bool tiler_identity() {
  auto gen = make_generator(4);
  tiler::PatchRestorer identity = [](const torch::Tensor& p, const std::vector<uint64_t>&) {
    return p.clone();
  };
  for (int64_t h : {64, 67, 80}) {
    auto x = torch::rand({3, h, 71}, gen) * 2 - 1;
    auto out = tiler::restore_image(x, identity, {});
    if ((out - x).abs().max().item<double>() > 1e-6) return false;
  }
  return tiler::make_grid(68, 68).size() == 4 && tiler::make_grid(66, 66).rows.back() == 2;
}

bool loss_constant() {
  auto a = torch::zeros({1, 3, 8, 8});
  const double v = losses::loss_rec(a + 0.1, a).item<double>();
  return std::abs(v - 0.019) < 1e-6;
}

bool proxy_blur() {
  auto yy = torch::arange(32).view({32, 1}).expand({32, 32});
  auto xx = torch::arange(32).view({1, 32}).expand({32, 32});
  auto board = (((yy / 4 + xx / 4) % 2).to(torch::kFloat32) * 2 - 1).unsqueeze(0).repeat({3, 1, 1});
  auto k = torch::ones({3, 1, 3, 3}) / 9.0;
  namespace F = torch::nn::functional;
  auto padded = F::pad(board.unsqueeze(0), F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
  auto blurred = F::conv2d(padded, k, F::Conv2dFuncOptions().groups(3)).squeeze(0);
  warehouse::ProxyScorer s;
  return s.score(board) > s.score(blurred) && s.score(torch::zeros({3, 16, 16})) == 0.0;
}

bool checkpoint_round_trip() {
  checkpoint::Checkpoint c;
  c.config = {{"seed", 1}};
  c.config_hash = "abc";
  c.student_g = backbone::take_snapshot(*backbone::build_generator(backbone::GeneratorConfig::tiny()));
  const auto dir = std::filesystem::temp_directory_path() /
                   ("semidiff_selftest_" + std::to_string(derive_seed(std::random_device{}(), 1)));
  const auto a = dir / "a.ckpt", b = dir / "b.ckpt";
  checkpoint::save(c, a);
  checkpoint::save(checkpoint::load(a), b);
  auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool same = read(a) == read(b);
  std::filesystem::remove_all(dir);
  return same;
}

}  // namespace

int run(std::ostream& out) {
  const std::vector<std::pair<const char*, std::function<bool()>>> checks{
      {"wavelet round trip", wavelet_round_trip},
      {"schedule and posterior tables", schedule_posterior},
      {"ema endpoints", ema_endpoints},
      {"warehouse gate", gate_fuzz},
      {"tiler identity assembly", tiler_identity},
      {"loss_rec constant", loss_constant},
      {"proxy score under blur", proxy_blur},
      {"checkpoint round trip", checkpoint_round_trip},
  };
  int failed = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    std::string why;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      why = e.what();
    }
    out << (ok ? "ok    " : "FAIL  ") << name << (why.empty() ? "" : ": " + why) << "\n";
    if (!ok) ++failed;
  }
  return failed;
}

}  // namespace semidiff::selftest
