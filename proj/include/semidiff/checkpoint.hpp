#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "semidiff/backbone.hpp"
#include "semidiff/warehouse.hpp"

namespace semidiff::checkpoint {

inline constexpr uint32_t kFormatVersion = 1;

/// Adam moments per parameter (names "<param>/exp_avg", "<param>/exp_avg_sq") and step counts.
struct AdamSnapshot {
  backbone::ParamSnapshot moments;
  std::vector<std::string> names;
  std::vector<int64_t> steps;
  bool operator==(const AdamSnapshot&) const = default;
};

struct Checkpoint {
  nlohmann::json config;  // resolved TrainConfig
  std::string config_hash;
  int phase = 1;
  int64_t epoch = 0;        // global epochs completed (phase 1 then phase 2)
  int64_t phase_epoch = 0;  // epochs completed within `phase`
  int64_t global_step = 0;
  int schedule_steps = 4;
  double beta_min = 0.1;
  double beta_max = 20.0;
  uint64_t rng_seed = 0;  // every random stream derives from (rng_seed, global_step, ...)

  backbone::ParamSnapshot student_g;
  backbone::ParamSnapshot student_d;
  backbone::ParamSnapshot teacher_g;
  AdamSnapshot opt_g;
  AdamSnapshot opt_d;
  std::vector<warehouse::WarehouseEntry> warehouse;  // phase 2 only
  std::string warehouse_scorer;
};

/// Layout: "SDCK", u32 version, u64 header length, canonical JSON header, then the binary
/// blocks (student G, student D, teacher G, Adam G, Adam D, warehouse patches).
void save(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointVersionError on a bad magic/version/header and PersistenceError on I/O.
Checkpoint load(const std::filesystem::path& path);

/// Throws CompatibilityError naming both hashes when they differ.
void check_compatible(const Checkpoint& ckpt, const std::string& expected_hash);

AdamSnapshot take_adam(torch::optim::Adam& opt, const torch::nn::Module& module);
/// Restores the moments onto `module`'s parameters. Throws SnapshotCompatibilityError.
void load_adam(torch::optim::Adam& opt, const torch::nn::Module& module, const AdamSnapshot& s);

/// checkpoints/epoch_XXXX.ckpt under the run directory.
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int64_t epoch);

}  // namespace semidiff::checkpoint
