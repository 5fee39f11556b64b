#include "semidiff/losses.hpp"

#include <cmath>

#include "semidiff/errors.hpp"

namespace semidiff::losses {

namespace {

torch::Tensor batched(const torch::Tensor& x) { return x.dim() == 3 ? x.unsqueeze(0) : x; }

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (a.sizes() != b.sizes()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.sizes().vec()) +
                         " vs " + shape_string(b.sizes().vec()));
  }
}

// Mean |a - b| over every dimension except the leading batch one: [N].
torch::Tensor per_item_l1(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).abs().flatten(1).mean(1);
}

std::vector<torch::Tensor> extract(FeatureExtractor& fx, const torch::Tensor& x) {
  std::vector<torch::Tensor> f;
  try {
    f = fx.features(x);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw FeatureBackendError(fx.name() + ": " + e.what());
  }
  if (f.size() != fx.tap_count()) {
    throw FeatureBackendError(fx.name() + ": returned " + std::to_string(f.size()) +
                              " taps, expected " + std::to_string(fx.tap_count()));
  }
  return f;
}

double logit_of(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

void LossWeights::validate() const {
  for (double v : {w_rec, w_perc, w_l1, w_l2}) {
    if (!(v >= 0.0)) throw ValidationError("loss weights must be >= 0");
  }
  for (double v : contrastive) {
    if (!(v >= 0.0)) throw ValidationError("contrastive weights must be >= 0");
  }
  if (!(denominator_epsilon > 0.0)) throw ValidationError("denominator_epsilon must be > 0");
}

torch::Tensor loss_rec(const torch::Tensor& pred, const torch::Tensor& target,
                       const LossWeights& w) {
  check_pair(pred, target, "loss_rec");
  auto diff = pred - target;
  return diff.abs().mean() * w.w_l1 + diff.square().mean() * w.w_l2;
}

torch::Tensor loss_perc(const torch::Tensor& pred, const torch::Tensor& target,
                        FeatureExtractor& fx) {
  check_pair(pred, target, "loss_perc");
  if (fx.tap_count() == 0) throw FeatureBackendError("loss_perc: extractor has no taps");
  auto fp = extract(fx, batched(pred));
  auto ft = extract(fx, batched(target));
  auto total = torch::zeros({}, pred.options());
  for (size_t j = 0; j < fp.size(); ++j) total = total + per_item_l1(fp[j], ft[j]).sum();
  return total;
}

torch::Tensor combine_aux(const torch::Tensor& rec, const torch::Tensor& perc,
                          const LossWeights& w) {
  return rec * w.w_rec + perc * w.w_perc;
}

torch::Tensor loss_aux(const torch::Tensor& pred, const torch::Tensor& target,
                       FeatureExtractor& fx, const LossWeights& w) {
  return combine_aux(loss_rec(pred, target, w), loss_perc(pred, target, fx), w);
}

torch::Tensor loss_adv_g(const torch::Tensor& fake_logits) {
  return torch::softplus(-fake_logits).mean();
}

torch::Tensor loss_adv_d(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                         AdvDForm form, double log_floor) {
  auto real_term = torch::softplus(-real_logits);
  if (form == AdvDForm::conventional) return (real_term + torch::softplus(fake_logits)).mean();
  auto log_d_fake = (-torch::softplus(-fake_logits)).clamp_min(log_floor);
  return (real_term + log_d_fake).mean();
}

double loss_adv_g_prob(double d_fake) {
  auto l = torch::tensor({logit_of(d_fake)}, torch::kFloat64);
  return loss_adv_g(l).item<double>();
}

double loss_adv_d_prob(double d_real, double d_fake, AdvDForm form, double log_floor) {
  auto r = torch::tensor({logit_of(d_real)}, torch::kFloat64);
  auto f = torch::tensor({logit_of(d_fake)}, torch::kFloat64);
  return loss_adv_d(r, f, form, log_floor).item<double>();
}

torch::Tensor loss_contrastive(const torch::Tensor& student, const torch::Tensor& positive,
                               const torch::Tensor& negative, FeatureExtractor& fx,
                               const LossWeights& w) {
  check_pair(student, positive, "loss_contrastive");
  check_pair(student, negative, "loss_contrastive");
  if (!(w.denominator_epsilon > 0.0)) {
    throw ValidationError("loss_contrastive: denominator_epsilon must be > 0");
  }
  if (w.contrastive.size() != fx.tap_count()) {
    throw ValidationError("loss_contrastive: " + std::to_string(w.contrastive.size()) +
                          " tap weights for " + std::to_string(fx.tap_count()) + " taps");
  }
  auto fs = extract(fx, batched(student));
  auto fp = extract(fx, batched(positive));
  auto fn = extract(fx, batched(negative));
  auto total = torch::zeros({}, student.options());
  for (size_t j = 0; j < fs.size(); ++j) {
    auto ratio = per_item_l1(fs[j], fp[j].detach()) /
                 (per_item_l1(fs[j], fn[j].detach()) + w.denominator_epsilon);
    total = total + ratio.sum() * w.contrastive[j];
  }
  return total;
}

}  // namespace semidiff::losses
