#include "common.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <iterator>

#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/trainer.hpp"

using namespace semidiff;
using namespace semidiff::trainer;

namespace {

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

data::Corpus micro_corpus(const fs::path& dir) {
  data::SyntheticCorpusOptions o;
  o.count = 8;
  o.test_count = 0;
  o.size = 32;
  o.seed = 4;
  write_synthetic_corpus(dir, o);
  return data::load_manifest(data::read_dataset_specs(dir / "datasets.json"));
}

// Odd calls (the teacher's candidate) score high, even calls (the student) low.
class TeacherFirst : public warehouse::QualityScorer {
 public:
  std::string name() const override { return "teacher-first"; }
  std::pair<double, double> score_range() const override { return {0, 1e9}; }
  double score(const torch::Tensor&) override { return (calls++ % 2 == 0) ? 100.0 + calls : 0.0; }
  int calls = 0;
};

LossSetup identity_losses(losses::FeatureExtractor& p, losses::FeatureExtractor& c) {
  LossSetup ls;
  ls.perceptual = &p;
  ls.contrastive = &c;
  ls.weights = testutil::micro_config().losses;
  return ls;
}

warehouse::Warehouse seeded_store(const std::vector<std::string>& ids, int64_t crop) {
  warehouse::Warehouse w("teacher-first");
  for (const auto& id : ids) {
    warehouse::WarehouseEntry e;
    e.sample_id = id;
    e.patch = image_io::quantize16(torch::zeros({3, crop, crop}));
    e.score = 0.0;
    w.put(e);
  }
  return w;
}

}  // namespace

TEST_CASE("lambda ramp") {
  config::LambdaSchedule s;
  CHECK(lambda_at(0, s) == 0.0);
  CHECK(lambda_at(15, s) == doctest::Approx(0.5));
  CHECK(lambda_at(30, s) == 1.0);
  CHECK(lambda_at(500, s) == 1.0);
  CHECK(lambda_at(20, s, 1) == 0.0);
  s.lambda_max = 2.0;
  s.ramp_epochs = 0;
  CHECK(lambda_at(0, s) == 2.0);
}

TEST_CASE("learning-rate schedule") {
  auto cfg = config::TrainConfig::paper();
  CHECK(lr_at(1e-3, 0, 100, cfg) == doctest::Approx(1e-3));
  CHECK(lr_at(1e-3, 50, 100, cfg) == doctest::Approx((1e-3 + cfg.lr_min) / 2));
  CHECK(lr_at(1e-3, 99, 100, cfg) > cfg.lr_min);
  double prev = 1.0;
  for (int e = 0; e < 100; ++e) {
    const double lr = lr_at(1e-3, e, 100, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
  cfg.lr_schedule = "constant";
  CHECK(lr_at(1e-3, 80, 100, cfg) == 1e-3);
}

TEST_CASE("step sampler is uniform over 1..T") {
  std::mt19937_64 rng(13);
  const int n = 40000, T = 4;
  auto t = sample_steps(n, T, rng);
  CHECK(t.min().item<int64_t>() == 1);
  CHECK(t.max().item<int64_t>() == T);
  const double p = 1.0 / T, se = std::sqrt(n * p * (1 - p));
  for (int k = 1; k <= T; ++k) {
    const double count = (t == k).sum().item<double>();
    CHECK(std::abs(count - n * p) < 4 * se);
  }
}

TEST_CASE("labeled step") {
  auto cfg = testutil::micro_config();
  auto nets = Nets::build(cfg);
  auto sched = diffusion::NoiseSchedule::make(cfg.T);
  losses::IdentityExtractor p(3), c(5);
  auto ls = identity_losses(p, c);

  torch::manual_seed(3);
  auto y = torch::rand({2, 3, 32, 32}) * 1.6 - 0.8;
  auto x = (y + 0.3 * torch::randn_like(y)).clamp(-1, 1);
  const auto g0 = backbone::take_snapshot(*nets.g);
  const auto d0 = backbone::take_snapshot(*nets.d);
  const auto teacher0 = backbone::take_snapshot(*nets.teacher);
  auto r = labeled_step(nets, x, y, sched, ls, 21);
  CHECK(std::isfinite(r.loss_g));
  CHECK(std::isfinite(r.loss_d));
  CHECK(r.t.size(0) == 2);
  CHECK(backbone::take_snapshot(*nets.g).distance(g0) > 0.0);
  CHECK(backbone::take_snapshot(*nets.d).distance(d0) > 0.0);
  CHECK(backbone::take_snapshot(*nets.teacher) == teacher0);

  // Same seed and weights, same step.
  auto again = Nets::build(cfg);
  auto r2 = labeled_step(again, x, y, sched, ls, 21);
  CHECK(r2.loss_g == r.loss_g);
  CHECK(backbone::take_snapshot(*again.g) == backbone::take_snapshot(*nets.g));
}

TEST_CASE("unlabeled step") {
  auto cfg = testutil::micro_config();
  auto sched = diffusion::NoiseSchedule::make(cfg.T);
  losses::IdentityExtractor p(3), c(5);
  auto ls = identity_losses(p, c);
  torch::manual_seed(5);
  auto x = torch::rand({4, 3, 32, 32}) * 2 - 1;
  const std::vector<std::string> ids{"u/0", "u/1", "u/2", "u/3"};

  SUBCASE("lambda = 0 leaves the student alone; EMA still runs") {
    auto nets = Nets::build(cfg);
    auto store = seeded_store(ids, 32);
    warehouse::ProxyScorer scorer;
    UnlabeledContext ctx{&store, &scorer, {}, 0.0, 0.9};
    // Give the teacher different weights so the EMA has something to do.
    backbone::load_snapshot(*nets.teacher, backbone::take_snapshot(*backbone::build_generator([&] {
      auto g = cfg.generator;
      g.seed = 77;
      return g;
    }())));
    const auto g0 = backbone::take_snapshot(*nets.g);
    const auto d0 = backbone::take_snapshot(*nets.d);
    const auto expected = backbone::ema_update(backbone::take_snapshot(*nets.teacher), g0, 0.9);
    unlabeled_step(nets, x, ids, sched, ls, ctx, 8);
    CHECK(backbone::take_snapshot(*nets.g) == g0);
    CHECK(backbone::take_snapshot(*nets.d) == d0);
    CHECK(backbone::take_snapshot(*nets.teacher) == expected);
  }
  SUBCASE("twin networks: every entry is replaced when the teacher scores higher") {
    auto nets = Nets::build(cfg);
    backbone::load_snapshot(*nets.teacher, backbone::take_snapshot(*nets.g));
    auto store = seeded_store(ids, 32);
    TeacherFirst scorer;
    UnlabeledContext ctx{&store, &scorer, {}, 0.5, 0.99};
    ctx.global_step = 3;
    auto r = unlabeled_step(nets, x, ids, sched, ls, ctx, 9);
    CHECK(r.updates == 4);
    for (const auto& id : ids) {
      auto e = store.get(id);
      CHECK(e.update_count == 1);
      CHECK(e.updated_at_step == 3);
      CHECK(e.score > 100.0);
    }
    CHECK(std::isfinite(r.loss_g));
  }
  SUBCASE("a student update moves the teacher by (1 - eta) of the gap") {
    auto nets = Nets::build(cfg);
    auto store = seeded_store(ids, 32);
    warehouse::ProxyScorer scorer;
    UnlabeledContext ctx{&store, &scorer, {}, 1.0, 0.5};
    const auto teacher0 = backbone::take_snapshot(*nets.teacher);
    unlabeled_step(nets, x, ids, sched, ls, ctx, 10);
    const auto student1 = backbone::take_snapshot(*nets.g);
    CHECK(student1.distance(teacher0) > 0.0);
    CHECK(backbone::take_snapshot(*nets.teacher) == backbone::ema_update(teacher0, student1, 0.5));
  }
}

TEST_CASE("trainer runs") {
  auto root = testutil::scratch_dir("trainer");
  auto corpus = micro_corpus(root / "data");
  auto cfg = testutil::micro_config();
  cfg.seed = 3;

  SUBCASE("zero epochs returns the initial state") {
    auto zero = cfg;
    zero.phase1_epochs = 0;
    Trainer t(zero, root / "zero", corpus);
    const auto initial = t.snapshot(1, 0);
    auto ck = t.run_phase1();
    CHECK(ck.student_g == initial.student_g);
    CHECK(ck.student_d == initial.student_d);
    CHECK(ck.global_step == 0);
  }

  SUBCASE("resume is exact in both phases and the run directory describes itself") {
    Trainer a(cfg, root / "a", corpus);
    a.run_phase1();
    auto final_a = a.run_phase2(checkpoint::load(checkpoint::checkpoint_path(root / "a", 2)));

    Trainer b(cfg, root / "b", corpus);
    RunOptions half;
    half.stop_after_epoch = 1;
    b.run_phase1({}, half);
    Trainer b2(cfg, root / "b", corpus);
    b2.run_phase1(checkpoint::load(checkpoint::checkpoint_path(root / "b", 1)));
    Trainer b3(cfg, root / "b", corpus);
    b3.run_phase2(checkpoint::load(checkpoint::checkpoint_path(root / "b", 2)), half);
    Trainer b4(cfg, root / "b", corpus);
    b4.run_phase2(checkpoint::load(checkpoint::checkpoint_path(root / "b", 3)));

    for (int64_t e : {1, 2, 3, 4}) {
      CAPTURE(e);
      CHECK(bytes_of(checkpoint::checkpoint_path(root / "a", e)) ==
            bytes_of(checkpoint::checkpoint_path(root / "b", e)));
    }
    CHECK(bytes_of(root / "a" / "metrics.csv") == bytes_of(root / "b" / "metrics.csv"));
    CHECK(final_a.phase == 2);
    CHECK(final_a.warehouse.size() == corpus.unlabeled_count());

    CHECK(fs::exists(root / "a" / "config.json"));
    CHECK(fs::exists(root / "a" / "warehouse" / "manifest.json"));
    // Header plus one row per optimizer step.
    CHECK(line_count(root / "a" / "metrics.csv") == static_cast<size_t>(final_a.global_step) + 1);
    CHECK(config::config_hash(config::load_config(root / "a" / "config.json")) == a.config_hash());

    auto model = inference_model(final_a);
    CHECK(backbone::take_snapshot(*model.g) == final_a.teacher_g);
  }

  SUBCASE("phase 2 needs a finished phase 1") {
    Trainer t(cfg, root / "c", corpus);
    RunOptions stop;
    stop.stop_after_epoch = 1;
    auto partial = t.run_phase1({}, stop);
    CHECK_THROWS_AS(t.run_phase2(partial), ConfigError);
  }

  SUBCASE("a checkpoint from another config is rejected") {
    Trainer t(cfg, root / "d", corpus);
    auto ck = t.snapshot(1, 0);
    auto other = cfg;
    other.seed = 4;
    Trainer u(other, root / "e", corpus);
    CHECK_THROWS_AS(u.restore(ck), CompatibilityError);
  }
}
