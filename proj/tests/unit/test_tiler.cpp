#include "common.hpp"

#include <random>
#include <set>

#include "semidiff/backbone.hpp"
#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/tiler.hpp"

using namespace semidiff;
using namespace semidiff::tiler;
using testutil::max_abs_diff;

namespace {

PatchRestorer identity() {
  return [](const torch::Tensor& p, const std::vector<uint64_t>&) { return p.clone(); };
}

PatchRestorer constant(double c) {
  return [c](const torch::Tensor& p, const std::vector<uint64_t>&) {
    return torch::full_like(p, c);
  };
}

// Adds per-patch noise drawn from the patch seed only.
PatchRestorer seeded_noise() {
  return [](const torch::Tensor& p, const std::vector<uint64_t>& seeds) {
    SampleNoise noise(seeds);
    return p + 0.1 * noise.normal({p.size(1), p.size(2), p.size(3)});
  };
}

}  // namespace

TEST_CASE("grid enumeration") {
  auto g64 = make_grid(64, 64);
  CHECK(g64.size() == 1);
  auto g68 = make_grid(68, 68);
  CHECK(g68.rows == std::vector<int64_t>{0, 4});
  CHECK(g68.cols == std::vector<int64_t>{0, 4});
  CHECK(g68.size() == 4);
  auto g66 = make_grid(66, 66);
  CHECK(g66.rows == std::vector<int64_t>{0, 2});
  CHECK(g66.size() == 4);

  auto g = make_grid(70, 130);
  CHECK(g.positions.front() == std::pair<int64_t, int64_t>{0, 0});
  CHECK(g.positions[1] == std::pair<int64_t, int64_t>{0, 4});
  CHECK(g.positions.back() == std::pair<int64_t, int64_t>{6, 66});

  CHECK_THROWS_AS(make_grid(63, 100), SizeError);
  CHECK_THROWS_AS(make_grid(64, 64, 64, 0), ValidationError);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t h = 64 + static_cast<int64_t>(rng() % 200);
    const int64_t w = 64 + static_cast<int64_t>(rng() % 200);
    const int64_t s = 1 + static_cast<int64_t>(rng() % 16);
    auto axis = [&](int64_t dim) {
      std::set<int64_t> pos;
      for (int64_t p = 0;; p += s) {
        pos.insert(std::min(p, dim - 64));
        if (p + 64 >= dim) break;
      }
      return pos.size();
    };
    CHECK(make_grid(h, w, 64, s).size() == static_cast<int64_t>(axis(h) * axis(w)));
  }
}

TEST_CASE("assembly") {
  torch::manual_seed(7);
  TileOptions opts;
  opts.batch_size = 3;

  SUBCASE("identity and constant restorers") {
    for (auto [h, w] : std::vector<std::pair<int64_t, int64_t>>{{64, 64}, {68, 70}, {67, 65}}) {
      auto x = torch::rand({3, h, w}) * 2 - 1;
      CHECK(max_abs_diff(restore_image(x, identity(), opts), x) < 1e-6);
      auto c = restore_image(x, constant(0.3), opts);
      CHECK(c.sizes() == x.sizes());
      CHECK(max_abs_diff(c, torch::full_like(x, 0.3)) < 1e-6);
    }
  }
  SUBCASE("coverage counts on 68x68") {
    auto grid = make_grid(68, 68);
    Accumulator acc(3, 68, 68);
    for (auto [r, c] : grid.positions) acc.add(torch::ones({3, 64, 64}), r, c);
    const auto& counts = acc.counts();
    CHECK(counts[0][0].item<int>() == 1);
    CHECK(counts[67][67].item<int>() == 1);
    CHECK(counts[34][34].item<int>() == 4);
    CHECK(counts.min().item<int>() >= 1);
    CHECK(counts.max().item<int>() == 4);
  }
  SUBCASE("uncovered pixels are an error") {
    Accumulator acc(3, 68, 68);
    acc.add(torch::ones({3, 64, 64}), 0, 0);
    CHECK_THROWS_AS(acc.result(), ValidationError);
  }
  SUBCASE("result does not depend on batch size") {
    auto x = torch::rand({3, 72, 76}) * 2 - 1;
    opts.seed = 4;
    opts.batch_size = 1;
    auto a = restore_image(x, seeded_noise(), opts);
    opts.batch_size = 7;
    CHECK(torch::equal(a, restore_image(x, seeded_noise(), opts)));
    opts.seed = 5;
    CHECK_FALSE(torch::equal(a, restore_image(x, seeded_noise(), opts)));
  }
  SUBCASE("restorer contract") {
    auto bad = [](const torch::Tensor& p, const std::vector<uint64_t>&) {
      return p.narrow(2, 0, 32);
    };
    CHECK_THROWS_AS(restore_image(torch::zeros({3, 64, 64}), bad, opts), ModelContractError);
  }
}

TEST_CASE("diffusion restorer and file output") {
  auto cfg = backbone::GeneratorConfig::tiny();
  cfg.base_width = 8;
  cfg.latent_dim = 8;
  cfg.embed_dim = 16;
  backbone::GeneratorDenoiser gen(backbone::build_generator(cfg));
  backbone::CountingDenoiser counted(gen);
  auto sched = diffusion::NoiseSchedule::make(4);
  auto restorer = diffusion_restorer(counted, sched);

  auto dir = testutil::scratch_dir("tiler");
  torch::manual_seed(8);
  image_io::write_png(dir / "in" / "a.png", torch::rand({3, 66, 69}) * 2 - 1);
  image_io::write_png(dir / "in" / "b.jpg.png", torch::rand({3, 64, 64}) * 2 - 1);

  TileOptions opts;
  opts.batch_size = 4;
  auto written = restore_files(dir / "in", dir / "out", restorer, opts);
  REQUIRE(written.size() == 2);
  auto out = image_io::read_image(dir / "out" / "a.png");
  CHECK(out.sizes() == torch::IntArrayRef({3, 66, 69}));
  CHECK(counted.calls() > 0);

  auto x = image_io::read_image(dir / "in" / "b.jpg.png");
  auto r1 = restore_image(x, restorer, opts);
  auto r2 = restore_image(x, restorer, opts);
  CHECK(torch::equal(r1, r2));
}
