#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "semidiff/backbone.hpp"
#include "semidiff/checkpoint.hpp"
#include "semidiff/config.hpp"
#include "semidiff/data.hpp"
#include "semidiff/errors.hpp"
#include "semidiff/selftest.hpp"
#include "semidiff/tiler.hpp"
#include "semidiff/trainer.hpp"
#include "semidiff/warehouse.hpp"

namespace fs = std::filesystem;
using namespace semidiff;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

fs::path default_run_dir(const fs::path& config_file) {
  const char* root = std::getenv("SEMIDIFF_RUN_DIR");
  return fs::path(root && *root ? root : "runs") / config_file.stem();
}

struct TrainArgs {
  int phase = 1;
  std::string config;
  std::string resume;
  std::string run;
  bool quiet = false;
  std::vector<std::string> overrides;
};

// "key=value" with a dotted key for nested objects; the value is JSON when it parses as JSON
// and a plain string otherwise.
config::TrainConfig apply_overrides(const config::TrainConfig& cfg,
                                    const std::vector<std::string>& overrides) {
  if (overrides.empty()) return cfg;
  auto j = config::to_json(cfg);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + o + "'");
    }
    const std::string value = o.substr(eq + 1);
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;
    std::string key = o.substr(0, eq);
    std::replace(key.begin(), key.end(), '.', '/');
    j[nlohmann::json::json_pointer("/" + key)] = parsed;
  }
  return config::from_json(j);
}

int cmd_train(const TrainArgs& a) {
  const auto cfg = apply_overrides(config::load_config(a.config), a.overrides);
  cfg.validate();
  const fs::path run = a.run.empty() ? default_run_dir(a.config) : fs::path(a.run);

  std::optional<checkpoint::Checkpoint> from;
  if (!a.resume.empty()) {
    from = checkpoint::load(a.resume);
  } else if (a.phase == 2) {
    const auto p1 = checkpoint::checkpoint_path(run, cfg.phase1_epochs);
    if (!fs::exists(p1)) {
      std::cerr << "error: phase 2 needs a phase-1 checkpoint; " << p1.string()
                << " does not exist (run 'train --phase 1' first or pass --resume)\n";
      return kConfigError;
    }
    from = checkpoint::load(p1);
  }
  if (from) checkpoint::check_compatible(*from, config::config_hash(cfg));

  trainer::Trainer t(cfg, run);
  trainer::RunOptions opts;
  if (!a.quiet) opts.log = &std::cout;
  std::cout << "run directory " << run.string() << " (config " << t.config_hash() << ")\n";
  if (a.phase == 1) {
    t.run_phase1(from, opts);
  } else {
    t.run_phase2(*from, opts);
    std::cout << "warehouse updates this run: " << t.warehouse_updates() << "\n";
  }
  return kOk;
}

struct InferArgs {
  std::string input;
  std::string checkpoint;
  std::string output;
  uint64_t seed = 0;
  int64_t stride = 4;
  int64_t batch = 16;
  bool stats = false;
};

int cmd_infer(const InferArgs& a) {
  auto model = trainer::inference_model(checkpoint::load(a.checkpoint));
  backbone::GeneratorDenoiser gen(model.g);
  backbone::CountingDenoiser counted(gen);
  tiler::TileOptions opts;
  opts.seed = a.seed;
  opts.stride = a.stride;
  opts.batch_size = a.batch;
  auto restorer = tiler::diffusion_restorer(counted, model.sched);
  const auto written = tiler::restore_files(a.input, a.output, restorer, opts);
  for (const auto& p : written) std::cout << p.string() << "\n";
  if (a.stats) {
    std::cout << "generator calls " << counted.calls() << ", per-patch evaluations "
              << counted.sample_evaluations() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised wavelet diffusion restoration"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train phase 1 (labeled) or phase 2 (semi-supervised)");
  train_cmd->add_option("--phase", train.phase, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  train_cmd->add_option("--config", train.config, "JSON config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--resume", train.resume, "checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--run", train.run, "run directory (default $SEMIDIFF_RUN_DIR/<config name>)");
  train_cmd->add_flag("--quiet", train.quiet, "no per-epoch log");
  train_cmd->add_option("--set", train.overrides, "override a config value, e.g. --set lambda.lambda_max=0.5");

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Restore images by tiled reverse diffusion");
  infer_cmd->add_option("--input", infer.input, "image file or directory")->required();
  infer_cmd->add_option("--checkpoint", infer.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--output", infer.output, "output directory")->required();
  infer_cmd->add_option("--seed", infer.seed, "noise seed");
  infer_cmd->add_option("--stride", infer.stride, "patch stride in pixels")->check(CLI::PositiveNumber);
  infer_cmd->add_option("--batch", infer.batch, "patches per generator call")->check(CLI::PositiveNumber);
  infer_cmd->add_flag("--stats", infer.stats, "print generator call counts");

  std::string inspect_run;
  int bins = 10;
  auto* inspect_cmd = app.add_subcommand("warehouse-inspect", "Summarize a run's pseudo-label warehouse");
  inspect_cmd->add_option("--run", inspect_run, "run directory")->required();
  inspect_cmd->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);

  data::SyntheticCorpusOptions synth;
  std::string synth_out, synth_kind = "streaks";
  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic degraded corpus");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n", synth.count, "training images (split 1:1 labeled/unlabeled)")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--kind", synth_kind, "streaks, blobs or haze");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--test-n", synth.test_count, "held-out pairs")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--size", synth.size, "image side in pixels");
  synth_cmd->add_option("--severity", synth.severity, "degradation strength in (0, 1]");
  synth_cmd->add_option("--name", synth.name, "dataset name");

  std::string preset = "tiny", preset_out, preset_datasets;
  auto* init_cmd = app.add_subcommand("init-config", "Write a full config for a preset");
  init_cmd->add_option("--preset", preset, "tiny or paper");
  init_cmd->add_option("--out", preset_out, "config file to write")->required();
  init_cmd->add_option("--datasets", preset_datasets, "datasets.json path, stored relative to the config");

  auto* selftest_cmd = app.add_subcommand("selftest", "Run the fast property checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*infer_cmd) return cmd_infer(infer);
    if (*inspect_cmd) {
      std::cout << warehouse::inspect_report(fs::path(inspect_run) / "warehouse", bins);
      return kOk;
    }
    if (*synth_cmd) {
      synth.kind = data::parse_degradation(synth_kind);
      data::write_synthetic_corpus(synth_out, synth);
      std::cout << "wrote " << synth_out << "/datasets.json\n";
      return kOk;
    }
    if (*init_cmd) {
      auto cfg = config::TrainConfig::preset_named(preset);
      const fs::path out(preset_out);
      if (!preset_datasets.empty()) {
        cfg.datasets = fs::absolute(preset_datasets).lexically_relative(fs::absolute(out).parent_path()).string();
      }
      config::save_config(out, cfg);
      return kOk;
    }
    if (*selftest_cmd) return selftest::run(std::cout) == 0 ? kOk : kRuntimeError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CompatibilityError& e) {
    std::cerr << "incompatible checkpoint: " << e.what() << "\n";
    return kConfigError;
  } catch (const CheckpointVersionError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
