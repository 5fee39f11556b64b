#include "common.hpp"

#include <fstream>

#include "semidiff/config.hpp"
#include "semidiff/errors.hpp"

using namespace semidiff;
using namespace semidiff::config;

TEST_CASE("presets") {
  auto p = TrainConfig::paper();
  CHECK(p.phase1_epochs == 500);
  CHECK(p.lr_g == 1.6e-4);
  CHECK(p.lr_d == 1.25e-4);
  CHECK(p.T == 4);
  CHECK(p.phi == 0.1);
  CHECK(p.replay_milestones == std::vector<int64_t>{150, 300});
  CHECK_NOTHROW(p.validate());
  CHECK_NOTHROW(TrainConfig::tiny().validate());
  CHECK(TrainConfig::preset_named("tiny").preset == "tiny");
  CHECK_THROWS_AS(TrainConfig::preset_named("huge"), ConfigError);
}

TEST_CASE("json round trip and partial files") {
  auto c = testutil::micro_config();
  c.seed = 42;
  c.lambda.lambda_max = 0.5;
  c.adv_d_form = losses::AdvDForm::conventional;
  auto j = to_json(c);
  CHECK(to_json(from_json(j)) == j);
  CHECK(config_hash(from_json(j)) == config_hash(c));

  auto partial = nlohmann::json{{"preset", "tiny"}, {"seed", 3}, {"lambda", {{"ramp_epochs", 7}}}};
  auto p = from_json(partial);
  CHECK(p.seed == 3);
  CHECK(p.lambda.ramp_epochs == 7);
  CHECK(p.lambda.lambda_max == TrainConfig::tiny().lambda.lambda_max);
  CHECK(p.phase1_epochs == TrainConfig::tiny().phase1_epochs);

  CHECK_THROWS_AS(from_json({{"preset", "tiny"}, {"sed", 3}}), ConfigError);
  CHECK_THROWS_AS(from_json({{"preset", "tiny"}, {"lambda", {{"max", 1}}}}), ConfigError);
  CHECK_THROWS_AS(from_json({{"preset", "tiny"}, {"seed", "three"}}), ConfigError);
}

TEST_CASE("hash") {
  auto a = TrainConfig::tiny();
  auto b = a;
  const auto h = config_hash(a);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(b) == h);
  b.phi = 0.2;
  CHECK(config_hash(b) != h);
}

TEST_CASE("validation") {
  auto c = TrainConfig::tiny();
  c.batch_phase1 = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig::tiny();
  c.replay_milestones = {300, 150};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig::tiny();
  c.eta = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig::tiny();
  c.lr_schedule = "step";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig::tiny();
  c.crop = 33;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("files") {
  auto dir = testutil::scratch_dir("config");
  auto c = testutil::micro_config();
  c.datasets = (dir / "data" / "datasets.json").string();
  save_config(dir / "run.json", c);
  auto back = load_config(dir / "run.json");
  CHECK(config_hash(back) == config_hash(c));

  std::ofstream(dir / "rel.json") << R"({"preset": "tiny", "datasets": "data/datasets.json"})";
  auto rel = load_config(dir / "rel.json");
  CHECK(fs::path(rel.datasets).is_absolute());
  CHECK(fs::path(rel.datasets).filename() == "datasets.json");

  std::ofstream(dir / "broken.json") << "{not json";
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
}
