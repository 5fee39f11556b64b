#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "semidiff/random.hpp"

namespace semidiff::diffusion {

/// Discretized variance-preserving schedule. All tables are indexed by step 0..T;
/// index 0 is the clean state (alpha_bar[0] = 1, beta[0] = 0).
struct NoiseSchedule {
  int steps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;

  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sqrt_alpha_bar;
  std::vector<double> sqrt_one_minus_alpha_bar;
  std::vector<double> posterior_mean_coef0;  // multiplies the predicted clean target
  std::vector<double> posterior_mean_coef_t; // multiplies y_t
  std::vector<double> posterior_var;

  /// beta[t] = 1 - exp(-beta_min*dt - (beta_max - beta_min)*(2t - 1)*dt^2/2), dt = 1/T.
  /// Throws ValidationError on bad arguments, ScheduleError if a beta leaves (0, 1).
  static NoiseSchedule make(int steps, double beta_min = 0.1, double beta_max = 20.0);

  /// Re-checks every invariant; throws ScheduleError on violation.
  void validate() const;
};

// Step arguments come either as a single int applied to the whole tensor or as an int64
// tensor [N] giving one step per batch item (leading dimension of the data tensors).

/// sqrt(alpha_bar[t]) * y0 + sqrt(1 - alpha_bar[t]) * noise. Valid for t in [0, T].
torch::Tensor forward_diffuse(const torch::Tensor& y0, int t, const NoiseSchedule& sched,
                              const torch::Tensor& noise);
torch::Tensor forward_diffuse(const torch::Tensor& y0, const torch::Tensor& t,
                              const NoiseSchedule& sched, const torch::Tensor& noise);

/// Returns (y_{t-1}, y_t) where y_t is drawn from the one-step kernel q(y_t | y_{t-1}).
std::pair<torch::Tensor, torch::Tensor> diffuse_pair(const torch::Tensor& y0, int t,
                                                     const NoiseSchedule& sched,
                                                     const torch::Tensor& noise_a,
                                                     const torch::Tensor& noise_b);
std::pair<torch::Tensor, torch::Tensor> diffuse_pair(const torch::Tensor& y0,
                                                     const torch::Tensor& t,
                                                     const NoiseSchedule& sched,
                                                     const torch::Tensor& noise_a,
                                                     const torch::Tensor& noise_b);

/// Draw from q(y_{t-1} | y_t, y0_hat). At t = 1 the variance is zero and the result is y0_hat.
torch::Tensor posterior_sample(const torch::Tensor& y_t, const torch::Tensor& y0_hat, int t,
                               const NoiseSchedule& sched, const torch::Tensor& noise);
torch::Tensor posterior_sample(const torch::Tensor& y_t, const torch::Tensor& y0_hat,
                               const torch::Tensor& t, const NoiseSchedule& sched,
                               const torch::Tensor& noise);

/// Anything that predicts the clean wavelet target from (y_t, condition, latent, step).
class ConditionalDenoiser {
 public:
  virtual ~ConditionalDenoiser() = default;
  virtual int64_t latent_dim() const = 0;
  /// y_t, x0: [N, 12, h, w]; z: [N, latent_dim]; t: int64 [N]. Returns [N, 12, h, w].
  virtual torch::Tensor predict_clean(const torch::Tensor& y_t, const torch::Tensor& x0,
                                      const torch::Tensor& z, const torch::Tensor& t) = 0;
};

enum class ReverseMode { full_chain, single_step };

/// Runs the reverse process for every sample from its own start step down to 1 and returns
/// idwt of the last clean-target prediction, i.e. an image batch [N, 3, 2h, 2w].
///
/// Per sample and per executed step, draws z then the posterior noise from that sample's
/// stream in `noise`. In single_step mode only the first prediction is made.
torch::Tensor reverse_chain(const torch::Tensor& x0_cond, const torch::Tensor& start_t,
                            const torch::Tensor& y_start, ConditionalDenoiser& gen,
                            const NoiseSchedule& sched, SampleNoise& noise,
                            ReverseMode mode = ReverseMode::full_chain);

/// Convenience form: one start step for the batch, sample streams derived from `seed`.
torch::Tensor reverse_chain(const torch::Tensor& x0_cond, int start_t,
                            const torch::Tensor& y_start, ConditionalDenoiser& gen,
                            const NoiseSchedule& sched, uint64_t seed,
                            ReverseMode mode = ReverseMode::full_chain);

}  // namespace semidiff::diffusion
