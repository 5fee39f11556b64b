#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "semidiff/backbone.hpp"
#include "semidiff/checkpoint.hpp"
#include "semidiff/config.hpp"
#include "semidiff/data.hpp"
#include "semidiff/diffusion.hpp"
#include "semidiff/losses.hpp"
#include "semidiff/quality.hpp"
#include "semidiff/warehouse.hpp"

namespace semidiff::trainer {

namespace fs = std::filesystem;

/// Consistency weight: 0 throughout phase 1; in phase 2 a linear ramp from 0 at epoch 0 to
/// lambda_max at ramp_epochs (phase-2 epochs), constant afterwards.
double lambda_at(int64_t phase2_epoch, const config::LambdaSchedule& s, int phase = 2);

/// Learning rate for `epoch` of a phase lasting `epochs`: cosine annealing from `base` to
/// cfg.lr_min, or `base` throughout for the constant schedule.
double lr_at(double base, int64_t epoch, int64_t epochs, const config::TrainConfig& cfg);

/// Student G/D with their optimizers, plus the EMA teacher generator.
struct Nets {
  backbone::Generator g{nullptr};
  backbone::Discriminator d{nullptr};
  backbone::Generator teacher{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;

  static Nets build(const config::TrainConfig& cfg);
};

struct LossSetup {
  losses::FeatureExtractor* perceptual = nullptr;
  losses::FeatureExtractor* contrastive = nullptr;
  losses::LossWeights weights;
  losses::AdvDForm adv_d_form = losses::AdvDForm::literal;
  double adv_d_floor = -10.0;
};

struct StepResult {
  double loss_g = 0.0;
  double loss_d = 0.0;
  int64_t updates = 0;
  torch::Tensor t;  // steps drawn for the batch
};

/// Uniform steps in {1..T}, one per sample, from `rng`.
torch::Tensor sample_steps(int64_t n, int T, std::mt19937_64& rng);

/// One supervised step on cropped pairs x_c, y_c [N, 3, crop, crop]: D first on detached
/// fakes, then G on adv_g + aux(idwt(y0'), y_c). Randomness comes from `step_seed` only.
/// Throws DivergenceError on a non-finite loss.
StepResult labeled_step(Nets& nets, const torch::Tensor& x_c, const torch::Tensor& y_c,
                        const diffusion::NoiseSchedule& sched, const LossSetup& losses,
                        uint64_t step_seed);

struct UnlabeledContext {
  warehouse::Warehouse* store = nullptr;
  warehouse::QualityScorer* scorer = nullptr;
  warehouse::ConsistencyGate gate;
  double lambda = 0.0;
  double eta = 0.999;
  bool refresh_l1_target = false;
  int64_t global_step = 0;
};

/// One consistency step on center crops x_c [N, 3, crop, crop] whose pseudo-labels live in
/// the warehouse under `ids`. Teacher and student reverse chains share noise streams; accepted
/// teacher patches replace warehouse entries before the losses are formed. Both losses are
/// scaled by lambda and no optimizer step is taken when lambda is 0. The teacher EMA update
/// follows in every case.
StepResult unlabeled_step(Nets& nets, const torch::Tensor& x_c, const std::vector<std::string>& ids,
                          const diffusion::NoiseSchedule& sched, const LossSetup& losses,
                          UnlabeledContext& ctx, uint64_t step_seed);

struct RunOptions {
  /// Stop (after checkpointing) once this many epochs of the phase are done; -1 = run all.
  int64_t stop_after_epoch = -1;
  std::ostream* log = nullptr;
};

/// Owns the corpus, feature extractors, scorer and run directory for both phases.
class Trainer {
 public:
  Trainer(config::TrainConfig cfg, fs::path run_dir, data::Corpus corpus);
  /// Corpus from cfg.datasets.
  Trainer(config::TrainConfig cfg, fs::path run_dir);

  const config::TrainConfig& config() const { return cfg_; }
  const std::string& config_hash() const { return hash_; }
  const fs::path& run_dir() const { return run_dir_; }
  Nets& nets() { return nets_; }
  const warehouse::Warehouse& store() const { return store_; }
  /// Accepted warehouse updates during this process's phase-2 steps.
  int64_t warehouse_updates() const { return updates_; }

  /// Phase 1 from scratch, or from a phase-1 checkpoint when `resume` is given.
  checkpoint::Checkpoint run_phase1(const std::optional<checkpoint::Checkpoint>& resume = {},
                                    const RunOptions& opts = {});
  /// Phase 2 from the completed phase-1 checkpoint (initializes the warehouse) or from a
  /// phase-2 checkpoint (resumes). Throws ConfigError if given an unfinished phase-1 checkpoint.
  checkpoint::Checkpoint run_phase2(const checkpoint::Checkpoint& from, const RunOptions& opts = {});

  checkpoint::Checkpoint snapshot(int phase, int64_t phase_epoch) const;
  void restore(const checkpoint::Checkpoint& ckpt);

 private:
  void prepare_run_dir();
  void set_learning_rates(int64_t epoch, int64_t epochs);
  void append_metrics(int64_t step, const StepResult& r, double lambda);
  void truncate_metrics(int64_t last_step);
  void save_checkpoint(int phase, int64_t phase_epoch, const RunOptions& opts);
  std::pair<torch::Tensor, torch::Tensor> labeled_batch(const std::vector<data::SampleRef>& refs,
                                                         uint64_t crop_seed);
  std::pair<torch::Tensor, std::vector<std::string>> unlabeled_batch(
      const std::vector<data::SampleRef>& refs);

  config::TrainConfig cfg_;
  std::string hash_;
  fs::path run_dir_;
  data::Corpus corpus_;
  diffusion::NoiseSchedule sched_;
  Nets nets_;
  std::unique_ptr<losses::FeatureExtractor> perceptual_;
  std::unique_ptr<losses::FeatureExtractor> contrastive_;
  std::unique_ptr<warehouse::QualityScorer> scorer_;
  warehouse::Warehouse store_;
  data::ImageCache cache_;
  int64_t global_step_ = 0;
  int64_t updates_ = 0;
};

/// Builds the configured no-reference scorer ("proxy" or "command:<exe>").
std::unique_ptr<warehouse::QualityScorer> make_scorer(const config::TrainConfig& cfg);

/// Generator and schedule recovered from a checkpoint, for inference.
struct InferenceModel {
  backbone::Generator g{nullptr};
  diffusion::NoiseSchedule sched;
};
/// Uses the teacher weights of a phase-2 checkpoint and the student weights of a phase-1 one.
InferenceModel inference_model(const checkpoint::Checkpoint& ckpt);

}  // namespace semidiff::trainer
