#pragma once

#include <vector>

#include <torch/torch.h>

#include "semidiff/features.hpp"

namespace semidiff::losses {

struct LossWeights {
  double w_rec = 5.0;
  double w_perc = 10.0;
  double w_l1 = 0.1;
  double w_l2 = 0.9;
  std::vector<double> contrastive{1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
  double denominator_epsilon = 1e-7;

  /// Throws ValidationError on a negative weight or non-positive epsilon.
  void validate() const;
};

/// How the discriminator objective treats the generated sample.
enum class AdvDForm {
  literal,       // -log D(real) + log D(fake), the log D(fake) term floored
  conventional,  // -log D(real) - log(1 - D(fake))
};

// Image arguments are [N, 3, H, W] (or [3, H, W], treated as N = 1). All results are scalar
// tensors that carry gradients.

/// w_l1 * mean|pred - target| + w_l2 * mean (pred - target)^2.
torch::Tensor loss_rec(const torch::Tensor& pred, const torch::Tensor& target,
                       const LossWeights& w = {});

/// Sum over taps and batch items of the per-item mean |phi(pred) - phi(target)|.
torch::Tensor loss_perc(const torch::Tensor& pred, const torch::Tensor& target,
                        FeatureExtractor& fx);

/// w_rec * rec + w_perc * perc.
torch::Tensor combine_aux(const torch::Tensor& rec, const torch::Tensor& perc,
                          const LossWeights& w);
torch::Tensor loss_aux(const torch::Tensor& pred, const torch::Tensor& target,
                       FeatureExtractor& fx, const LossWeights& w);

/// -log sigmoid(logit), batch mean; stable for any finite logit.
torch::Tensor loss_adv_g(const torch::Tensor& fake_logits);

/// Batch mean of the discriminator objective. `log_floor` bounds log D(fake) from below in
/// the literal form (it is unbounded there otherwise).
torch::Tensor loss_adv_d(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                         AdvDForm form = AdvDForm::literal, double log_floor = -10.0);

/// Probability-domain conveniences over the logit forms, evaluated in double.
double loss_adv_g_prob(double d_fake);
double loss_adv_d_prob(double d_real, double d_fake, AdvDForm form = AdvDForm::literal,
                       double log_floor = -10.0);

/// sum_j w_j * sum_i mean|phi_j(s_i) - phi_j(r_i)| / (mean|phi_j(s_i) - phi_j(x_i)| + eps).
/// The student output is pulled to the positive and pushed from the degraded negative.
torch::Tensor loss_contrastive(const torch::Tensor& student, const torch::Tensor& positive,
                               const torch::Tensor& negative, FeatureExtractor& fx,
                               const LossWeights& w);

}  // namespace semidiff::losses
