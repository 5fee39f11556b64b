#include "semidiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "semidiff/errors.hpp"
#include "semidiff/wavelet.hpp"

namespace semidiff::diffusion {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (a.sizes() != b.sizes()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.sizes().vec()) +
                         " vs " + shape_string(b.sizes().vec()));
  }
}

void check_step(const NoiseSchedule& sched, int t, int lo, const char* op) {
  if (t < lo || t > sched.steps) {
    throw RangeError(std::string(op) + ": step " + std::to_string(t) + " outside [" +
                     std::to_string(lo) + ", " + std::to_string(sched.steps) + "]");
  }
}

// Looks up table[t_i] for each batch item and shapes it to broadcast against `like`.
torch::Tensor per_sample(const std::vector<double>& table, const torch::Tensor& t,
                         const torch::Tensor& like) {
  auto lut = torch::tensor(table, torch::kFloat64);
  auto vals = lut.index_select(0, t.to(torch::kInt64)).to(like.scalar_type());
  std::vector<int64_t> shape(static_cast<size_t>(like.dim()), 1);
  shape[0] = t.size(0);
  return vals.view(shape);
}

void check_step_tensor(const NoiseSchedule& sched, const torch::Tensor& t, int lo,
                       const torch::Tensor& like, const char* op) {
  if (t.dim() != 1 || like.dim() == 0 || t.size(0) != like.size(0)) {
    throw DimensionError(std::string(op) + ": step tensor must be [N] matching the batch");
  }
  if (t.numel() == 0) return;
  check_step(sched, static_cast<int>(t.min().item<int64_t>()), lo, op);
  check_step(sched, static_cast<int>(t.max().item<int64_t>()), lo, op);
}

}  // namespace

NoiseSchedule NoiseSchedule::make(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ValidationError("make_schedule: T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !std::isfinite(beta_max)) {
    throw ValidationError("make_schedule: require 0 < beta_min <= beta_max");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  const size_t n = static_cast<size_t>(steps) + 1;
  s.beta.assign(n, 0.0);
  s.alpha.assign(n, 1.0);
  s.alpha_bar.assign(n, 1.0);
  s.sqrt_alpha_bar.assign(n, 1.0);
  s.sqrt_one_minus_alpha_bar.assign(n, 0.0);
  s.posterior_mean_coef0.assign(n, 0.0);
  s.posterior_mean_coef_t.assign(n, 0.0);
  s.posterior_var.assign(n, 0.0);

  const double dt = 1.0 / steps;
  double log_alpha_bar = 0.0;
  for (int t = 1; t <= steps; ++t) {
    const double exponent =
        beta_min * dt + (beta_max - beta_min) * (2.0 * t - 1.0) * dt * dt / 2.0;
    const double beta = -std::expm1(-exponent);
    if (!(beta > 0.0 && beta < 1.0)) {
      throw ScheduleError("make_schedule: beta[" + std::to_string(t) + "] = " +
                          std::to_string(beta) + " outside (0, 1)");
    }
    const auto i = static_cast<size_t>(t);
    s.beta[i] = beta;
    s.alpha[i] = 1.0 - beta;
    log_alpha_bar -= exponent;
    s.alpha_bar[i] = std::exp(log_alpha_bar);
    s.sqrt_alpha_bar[i] = std::sqrt(s.alpha_bar[i]);
    s.sqrt_one_minus_alpha_bar[i] = std::sqrt(-std::expm1(log_alpha_bar));
  }
  for (int t = 1; t <= steps; ++t) {
    const auto i = static_cast<size_t>(t);
    const double one_minus_ab = 1.0 - s.alpha_bar[i];
    const double one_minus_ab_prev = 1.0 - s.alpha_bar[i - 1];
    s.posterior_mean_coef0[i] = std::sqrt(s.alpha_bar[i - 1]) * s.beta[i] / one_minus_ab;
    s.posterior_mean_coef_t[i] = std::sqrt(s.alpha[i]) * one_minus_ab_prev / one_minus_ab;
    s.posterior_var[i] = one_minus_ab_prev * s.beta[i] / one_minus_ab;
  }
  // alpha_bar[0] = 1 makes the first posterior a point mass on the prediction.
  s.posterior_mean_coef0[1] = 1.0;
  s.posterior_mean_coef_t[1] = 0.0;
  s.posterior_var[1] = 0.0;
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (steps < 1 || alpha_bar.size() != static_cast<size_t>(steps) + 1) {
    throw ScheduleError("schedule: table size does not match T");
  }
  if (alpha_bar[0] != 1.0) throw ScheduleError("schedule: alpha_bar[0] must be 1");
  for (int t = 1; t <= steps; ++t) {
    const auto i = static_cast<size_t>(t);
    if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw ScheduleError("schedule: beta outside (0,1)");
    if (!(alpha_bar[i] < alpha_bar[i - 1])) {
      throw ScheduleError("schedule: alpha_bar not strictly decreasing at t=" +
                          std::to_string(t));
    }
    if (posterior_var[i] < 0.0) throw ScheduleError("schedule: negative posterior variance");
  }
}

torch::Tensor forward_diffuse(const torch::Tensor& y0, int t, const NoiseSchedule& sched,
                              const torch::Tensor& noise) {
  check_same_shape(y0, noise, "forward_diffuse");
  check_step(sched, t, 0, "forward_diffuse");
  const auto i = static_cast<size_t>(t);
  return y0 * sched.sqrt_alpha_bar[i] + noise * sched.sqrt_one_minus_alpha_bar[i];
}

torch::Tensor forward_diffuse(const torch::Tensor& y0, const torch::Tensor& t,
                              const NoiseSchedule& sched, const torch::Tensor& noise) {
  check_same_shape(y0, noise, "forward_diffuse");
  check_step_tensor(sched, t, 0, y0, "forward_diffuse");
  return y0 * per_sample(sched.sqrt_alpha_bar, t, y0) +
         noise * per_sample(sched.sqrt_one_minus_alpha_bar, t, y0);
}

std::pair<torch::Tensor, torch::Tensor> diffuse_pair(const torch::Tensor& y0, int t,
                                                     const NoiseSchedule& sched,
                                                     const torch::Tensor& noise_a,
                                                     const torch::Tensor& noise_b) {
  check_step(sched, t, 1, "diffuse_pair");
  check_same_shape(y0, noise_b, "diffuse_pair");
  auto prev = forward_diffuse(y0, t - 1, sched, noise_a);
  const auto i = static_cast<size_t>(t);
  auto cur = prev * std::sqrt(sched.alpha[i]) + noise_b * std::sqrt(sched.beta[i]);
  return {prev, cur};
}

std::pair<torch::Tensor, torch::Tensor> diffuse_pair(const torch::Tensor& y0,
                                                     const torch::Tensor& t,
                                                     const NoiseSchedule& sched,
                                                     const torch::Tensor& noise_a,
                                                     const torch::Tensor& noise_b) {
  check_step_tensor(sched, t, 1, y0, "diffuse_pair");
  check_same_shape(y0, noise_b, "diffuse_pair");
  auto prev = forward_diffuse(y0, t - 1, sched, noise_a);
  std::vector<double> sqrt_alpha(sched.alpha.size()), sqrt_beta(sched.beta.size());
  for (size_t i = 0; i < sqrt_alpha.size(); ++i) {
    sqrt_alpha[i] = std::sqrt(sched.alpha[i]);
    sqrt_beta[i] = std::sqrt(sched.beta[i]);
  }
  auto cur = prev * per_sample(sqrt_alpha, t, y0) + noise_b * per_sample(sqrt_beta, t, y0);
  return {prev, cur};
}

torch::Tensor posterior_sample(const torch::Tensor& y_t, const torch::Tensor& y0_hat, int t,
                               const NoiseSchedule& sched, const torch::Tensor& noise) {
  check_same_shape(y_t, y0_hat, "posterior_sample");
  check_same_shape(y_t, noise, "posterior_sample");
  check_step(sched, t, 1, "posterior_sample");
  const auto i = static_cast<size_t>(t);
  if (t == 1) return y0_hat * 1.0;
  return y0_hat * sched.posterior_mean_coef0[i] + y_t * sched.posterior_mean_coef_t[i] +
         noise * std::sqrt(sched.posterior_var[i]);
}

torch::Tensor posterior_sample(const torch::Tensor& y_t, const torch::Tensor& y0_hat,
                               const torch::Tensor& t, const NoiseSchedule& sched,
                               const torch::Tensor& noise) {
  check_same_shape(y_t, y0_hat, "posterior_sample");
  check_same_shape(y_t, noise, "posterior_sample");
  check_step_tensor(sched, t, 1, y_t, "posterior_sample");
  std::vector<double> sigma(sched.posterior_var.size());
  for (size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::sqrt(sched.posterior_var[i]);
  // Items at t = 1 get coef0 = 1, coef_t = 0, sigma = 0, reproducing y0_hat exactly.
  return y0_hat * per_sample(sched.posterior_mean_coef0, t, y_t) +
         y_t * per_sample(sched.posterior_mean_coef_t, t, y_t) +
         noise * per_sample(sigma, t, y_t);
}

torch::Tensor reverse_chain(const torch::Tensor& x0_cond, const torch::Tensor& start_t,
                            const torch::Tensor& y_start, ConditionalDenoiser& gen,
                            const NoiseSchedule& sched, SampleNoise& noise, ReverseMode mode) {
  check_same_shape(x0_cond, y_start, "reverse_chain");
  if (x0_cond.dim() != 4) throw DimensionError("reverse_chain: expected [N, C, h, w] tensors");
  const int64_t n = x0_cond.size(0);
  check_step_tensor(sched, start_t, 1, x0_cond, "reverse_chain");
  if (noise.size() != n) throw DimensionError("reverse_chain: one noise stream per sample");

  const auto item_shape = x0_cond.sizes().slice(1).vec();
  const std::vector<int64_t> latent_shape{gen.latent_dim()};
  auto t_cpu = start_t.to(torch::kInt64).contiguous();
  const int64_t* t_ptr = t_cpu.data_ptr<int64_t>();
  const int64_t max_t = n > 0 ? *std::max_element(t_ptr, t_ptr + n) : 0;

  auto call_gen = [&](const torch::Tensor& y, const torch::Tensor& x0, const torch::Tensor& z,
                      const torch::Tensor& steps) {
    auto out = gen.predict_clean(y, x0, z, steps);
    if (out.sizes() != y.sizes()) {
      throw ModelContractError("reverse_chain: generator returned " +
                               shape_string(out.sizes().vec()) + ", expected " +
                               shape_string(y.sizes().vec()));
    }
    return out;
  };

  torch::Tensor y = y_start;
  torch::Tensor y0_hat;
  for (int64_t s = max_t; s >= 1; --s) {
    std::vector<int64_t> rows;
    for (int64_t i = 0; i < n; ++i) {
      const bool active = mode == ReverseMode::full_chain ? t_ptr[i] >= s : t_ptr[i] == s;
      if (active) rows.push_back(i);
    }
    if (rows.empty()) continue;
    // Per-sample draw order is fixed: z, then posterior noise.
    std::vector<torch::Tensor> zs, eps;
    for (auto r : rows) {
      zs.push_back(noise.normal({r}, latent_shape).squeeze(0));
      eps.push_back(noise.normal({r}, item_shape).squeeze(0));
    }
    auto z = torch::stack(zs).to(x0_cond.scalar_type());
    auto e = torch::stack(eps).to(x0_cond.scalar_type());
    auto steps = torch::full({static_cast<int64_t>(rows.size())}, s, torch::kInt64);

    if (static_cast<int64_t>(rows.size()) == n) {
      auto pred = call_gen(y, x0_cond, z, steps);
      y0_hat = pred;
      y = posterior_sample(y, pred, static_cast<int>(s), sched, e);
    } else {
      auto idx = torch::tensor(rows, torch::kInt64);
      auto pred = call_gen(y.index_select(0, idx), x0_cond.index_select(0, idx), z, steps);
      auto stepped = posterior_sample(y.index_select(0, idx), pred, static_cast<int>(s), sched, e);
      y0_hat = y0_hat.defined() ? y0_hat.index_copy(0, idx, pred)
                                : torch::zeros_like(y).index_copy(0, idx, pred);
      y = y.index_copy(0, idx, stepped);
    }
  }
  if (!y0_hat.defined()) return wavelet::idwt(torch::zeros_like(y_start));
  return wavelet::idwt(y0_hat);
}

torch::Tensor reverse_chain(const torch::Tensor& x0_cond, int start_t,
                            const torch::Tensor& y_start, ConditionalDenoiser& gen,
                            const NoiseSchedule& sched, uint64_t seed, ReverseMode mode) {
  auto noise = SampleNoise::from_root(seed, x0_cond.size(0));
  auto t = torch::full({x0_cond.size(0)}, start_t, torch::kInt64);
  return reverse_chain(x0_cond, t, y_start, gen, sched, noise, mode);
}

}  // namespace semidiff::diffusion
