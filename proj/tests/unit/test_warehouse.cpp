#include "common.hpp"

#include <deque>
#include <fstream>
#include <random>
#include <thread>

#include "json.hpp"
#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/wavelet.hpp"
#include "semidiff/warehouse.hpp"

using namespace semidiff;
using namespace semidiff::warehouse;
using testutil::max_abs_diff;

namespace {

// Returns queued scores in call order; propose_update scores the teacher first.
class QueueScorer : public QualityScorer {
 public:
  std::string name() const override { return "queue"; }
  std::pair<double, double> score_range() const override { return {-1e9, 1e9}; }
  double score(const torch::Tensor&) override {
    const double v = queue.front();
    queue.pop_front();
    return v;
  }
  std::deque<double> queue;
};

// Mean intensity: a pure function of the patch, so it survives a save/load.
class MeanScorer : public QualityScorer {
 public:
  explicit MeanScorer(std::string n = "mean") : name_(std::move(n)) {}
  std::string name() const override { return name_; }
  std::pair<double, double> score_range() const override { return {-1, 1}; }
  double score(const torch::Tensor& img) override { return img.mean().item<double>(); }

 private:
  std::string name_;
};

class ConstantDenoiser : public diffusion::ConditionalDenoiser {
 public:
  int64_t latent_dim() const override { return 4; }
  torch::Tensor predict_clean(const torch::Tensor& y_t, const torch::Tensor&,
                              const torch::Tensor&, const torch::Tensor&) override {
    return torch::full_like(y_t, 0.2);
  }
};

class NoisyDenoiser : public diffusion::ConditionalDenoiser {
 public:
  int64_t latent_dim() const override { return 4; }
  torch::Tensor predict_clean(const torch::Tensor& y_t, const torch::Tensor& x0,
                              const torch::Tensor& z, const torch::Tensor&) override {
    return 0.5 * x0 + 0.1 * y_t + 0.05 * z.mean(1).view({-1, 1, 1, 1});
  }
};

WarehouseEntry entry(const std::string& id, double score, float fill = 0.0f) {
  WarehouseEntry e;
  e.sample_id = id;
  e.patch = image_io::quantize16(torch::full({3, 8, 8}, fill));
  e.score = score;
  return e;
}

std::vector<UnlabeledSource> write_sources(const fs::path& dir, int n, int64_t size) {
  std::vector<UnlabeledSource> out;
  for (int i = 0; i < n; ++i) {
    torch::manual_seed(100 + i);
    auto p = dir / ("img" + std::to_string(i) + ".png");
    image_io::write_png(p, torch::rand({3, size, size}) * 2 - 1);
    out.push_back({"set/img" + std::to_string(i) + ".png", p});
  }
  return out;
}

}  // namespace

TEST_CASE("gate decisions") {
  ConsistencyGate gate;
  CHECK(gate_accepts(60, 55, 58, 0.05, gate));
  CHECK_FALSE(gate_accepts(60, 55, 58, 0.20, gate));
  CHECK_FALSE(gate_accepts(50, 40, 58, 0.0, gate));
  CHECK_FALSE(gate_accepts(60, 60, 58, 0.0, gate));
  CHECK_FALSE(gate_accepts(58, 55, 58, 0.0, gate));
  CHECK_FALSE(gate_accepts(60, 55, 58, 0.1, gate));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> q(0, 100), d(0, 0.3);
  for (int i = 0; i < 5000; ++i) {
    const double qt = q(rng), qs = q(rng), qr = q(rng), l1 = d(rng);
    const bool both = qt > qs && qt > qr && l1 < 0.1;
    CHECK(gate_accepts(qt, qs, qr, l1, gate) == both);
  }
  ConsistencyGate bad{-0.1};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("propose_update") {
  ConsistencyGate gate;
  QueueScorer scorer;
  auto stored = entry("a", 58.0);
  auto teacher = torch::full({3, 8, 8}, 0.30001);
  auto student = torch::full({3, 8, 8}, 0.28);

  scorer.queue = {60, 55};
  auto d = propose_update(stored, teacher, student, scorer, gate, 17);
  CHECK(d.accepted);
  CHECK(d.entry.score == 60);
  CHECK(d.entry.update_count == 1);
  CHECK(d.entry.updated_at_step == 17);
  CHECK(torch::equal(d.entry.patch, image_io::quantize16(teacher)));
  CHECK(d.l1 == doctest::Approx(0.02001).epsilon(1e-3));

  scorer.queue = {60, 55};
  auto far = propose_update(stored, teacher + 0.2, student, scorer, gate, 18);
  CHECK_FALSE(far.accepted);
  CHECK(torch::equal(far.entry.patch, stored.patch));
  CHECK(far.entry.score == 58);

  CHECK_THROWS_AS(propose_update(stored, torch::zeros({3, 4, 4}), torch::zeros({3, 4, 4}),
                                 scorer, gate, 0),
                  DimensionError);
}

TEST_CASE("stored score is the running max of accepted teacher scores") {
  ConsistencyGate gate;
  QueueScorer scorer;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    auto e = entry("x", u(rng));
    double best = e.score;
    for (int step = 0; step < 30; ++step) {
      const double qt = u(rng), qs = u(rng);
      const double gap = u(rng) * 0.2;
      scorer.queue = {qt, qs};
      auto d = propose_update(e, torch::full({3, 8, 8}, 0.5),
                              torch::full({3, 8, 8}, 0.5 - gap), scorer, gate, step);
      CHECK(d.entry.score >= e.score);
      if (d.accepted) best = std::max(best, qt);
      e = d.entry;
    }
    CHECK(e.score == best);
  }
}

TEST_CASE("warehouse store and persistence") {
  auto dir = testutil::scratch_dir("store");
  MeanScorer scorer;
  Warehouse w(scorer.name());
  for (int i = 0; i < 3; ++i) {
    auto e = entry("set/" + std::to_string(i), 0.0, 0.1f * static_cast<float>(i));
    e.score = scorer.score(e.patch);
    e.update_count = i;
    e.updated_at_step = 10 * i;
    w.put(e);
  }
  CHECK(w.size() == 3);
  CHECK(w.contains("set/1"));
  CHECK_THROWS_AS(w.get("nope"), std::out_of_range);
  w.save(dir);

  auto back = Warehouse::load(dir, scorer);
  CHECK(back.ids() == w.ids());
  for (const auto& id : w.ids()) {
    auto a = w.get(id), b = back.get(id);
    CHECK(torch::equal(a.patch, b.patch));
    CHECK(a.score == b.score);
    CHECK(a.update_count == b.update_count);
    CHECK(a.updated_at_step == b.updated_at_step);
  }
  CHECK(inspect_report(dir).find("entries") != std::string::npos);

  SUBCASE("scorer change invalidates the store") {
    MeanScorer other("other");
    CHECK_THROWS_AS(Warehouse::load(dir, other), PersistenceError);
  }
  SUBCASE("tampered score is detected") {
    auto manifest = dir / "manifest.json";
    nlohmann::json j;
    std::ifstream(manifest) >> j;
    j["entries"]["set/2"]["score"] = 0.9;
    std::ofstream(manifest) << j.dump();
    CHECK_THROWS_AS(Warehouse::load(dir, scorer), PersistenceError);
  }
  SUBCASE("missing store") {
    CHECK_THROWS_AS(Warehouse::load(dir / "absent", scorer), PersistenceError);
  }
}

TEST_CASE("concurrent readers see whole entries") {
  Warehouse w("mean");
  w.put(entry("k", 0.0, 0.0f));
  std::atomic<bool> torn{false};
  std::thread writer([&] {
    for (int i = 1; i <= 200; ++i) w.put(entry("k", i, static_cast<float>(i) / 256));
  });
  std::thread reader([&] {
    for (int i = 0; i < 200; ++i) {
      auto e = w.get("k");
      if (std::abs(e.patch[0][0][0].item<double>() * 256 - e.score) > 0.01) torn = true;
    }
  });
  writer.join();
  reader.join();
  CHECK_FALSE(torn.load());
}

TEST_CASE("initialize") {
  auto dir = testutil::scratch_dir("init");
  auto sched = diffusion::NoiseSchedule::make(4);
  MeanScorer scorer;

  SUBCASE("empty") {
    ConstantDenoiser gen;
    CHECK(initialize({}, gen, sched, scorer, 1, 32).size() == 0);
  }
  SUBCASE("constant generator stores idwt(constant)") {
    ConstantDenoiser gen;
    auto sources = write_sources(dir, 1, 40);
    auto w = initialize(sources, gen, sched, scorer, 1, 32);
    REQUIRE(w.size() == 1);
    auto e = w.get(sources[0].id);
    auto expected = image_io::quantize16(wavelet::idwt(torch::full({12, 16, 16}, 0.2)));
    CHECK(torch::equal(e.patch, expected));
    CHECK(e.score == scorer.score(e.patch));
    CHECK(e.update_count == 0);
  }
  SUBCASE("deterministic and independent of batching") {
    NoisyDenoiser gen;
    auto sources = write_sources(dir, 3, 36);
    auto a = initialize(sources, gen, sched, scorer, 5, 32, 3);
    auto b = initialize(sources, gen, sched, scorer, 5, 32, 1);
    std::vector<UnlabeledSource> reversed(sources.rbegin(), sources.rend());
    auto c = initialize(reversed, gen, sched, scorer, 5, 32, 2);
    for (const auto& s : sources) {
      CHECK(torch::equal(a.get(s.id).patch, b.get(s.id).patch));
      CHECK(torch::equal(a.get(s.id).patch, c.get(s.id).patch));
    }
    auto d = initialize(sources, gen, sched, scorer, 6, 32, 3);
    CHECK_FALSE(torch::equal(a.get(sources[0].id).patch, d.get(sources[0].id).patch));
  }
  SUBCASE("errors") {
    ConstantDenoiser gen;
    auto sources = write_sources(dir, 1, 40);
    auto dup = sources;
    dup.push_back(sources[0]);
    CHECK_THROWS_AS(initialize(dup, gen, sched, scorer, 1, 32), ValidationError);
    CHECK_THROWS_AS(initialize({{"set/missing", dir / "missing.png"}}, gen, sched, scorer, 1, 32),
                    IngestionError);
  }
}
