#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "semidiff/backbone.hpp"
#include "semidiff/losses.hpp"

namespace semidiff::config {

struct LambdaSchedule {
  int64_t ramp_epochs = 30;
  double lambda_max = 1.0;
};

struct FeatureSettings {
  int64_t perceptual_width_scale = 1;
  int64_t contrastive_width_scale = 1;
  std::string perceptual_weights;   // optional torch::save file; empty = fixed-random weights
  std::string contrastive_weights;
};

/// Everything a run needs. JSON keys mirror the field names; a file only has to list the keys
/// it changes relative to its "preset" ("paper" or "tiny").
struct TrainConfig {
  std::string preset = "paper";
  std::string datasets;  // datasets.json, relative to the config file
  uint64_t seed = 0;

  int64_t phase1_epochs = 500;
  int64_t phase2_epochs = 650;
  int64_t batch_phase1 = 196;
  int64_t batch_labeled = 64;    // phase 2
  int64_t batch_unlabeled = 64;  // phase 2
  double lr_g = 1.6e-4;
  double lr_d = 1.25e-4;
  std::string lr_schedule = "cosine";  // "cosine" (per phase, down to lr_min) or "constant"
  double lr_min = 1e-5;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double eta = 0.999;
  LambdaSchedule lambda;
  std::vector<int64_t> replay_milestones{150, 300};
  int64_t crop = 64;
  bool augment_flips = true;  // random horizontal/vertical flips of labeled pairs, shared per pair
  int T = 4;
  double beta_min = 0.1;
  double beta_max = 20.0;

  backbone::GeneratorConfig generator = backbone::GeneratorConfig::paper_scale();
  backbone::DiscriminatorConfig discriminator = backbone::DiscriminatorConfig::paper_scale();
  losses::LossWeights losses;
  losses::AdvDForm adv_d_form = losses::AdvDForm::literal;
  double adv_d_floor = -10.0;
  FeatureSettings features;

  double phi = 0.1;
  std::string scorer = "proxy";  // "proxy" or "command:<executable>"
  double proxy_noise_weight = 3.0;
  int64_t warehouse_batch = 8;
  bool refresh_l1_target = false;

  int64_t checkpoint_every = 50;  // epochs; the last epoch of a phase is always saved
  bool determinism = true;

  static TrainConfig paper();
  static TrainConfig tiny();
  static TrainConfig preset_named(const std::string& name);

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep the value of the preset named by j["preset"]; unknown keys are errors.
TrainConfig from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& file);
void save_config(const std::filesystem::path& file, const TrainConfig& cfg);

/// FNV-1a (64-bit, hex) of the canonical JSON of the config.
std::string config_hash(const TrainConfig& cfg);

}  // namespace semidiff::config
