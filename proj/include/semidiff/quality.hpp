#pragma once

#include <string>
#include <utility>

#include <torch/torch.h>

namespace semidiff::warehouse {

/// No-reference image quality: deterministic, and a higher score means better quality.
class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual std::string name() const = 0;
  virtual std::pair<double, double> score_range() const = 0;
  /// image: [3, H, W] (or [1, 3, H, W]) in [-1, 1].
  virtual double score(const torch::Tensor& image) = 0;
};

/// Sharpness-minus-artifacts proxy used in place of a learned NR-IQA model:
///
///   score = G - noise_weight * R
///   G = sqrt(mean(dx^2) + mean(dy^2))      forward differences, all channels
///   R = sqrt(mean((I - median3x3(I))^2))    replicate border, per channel
///
/// G is the RMS gradient: blurring attenuates every frequency, so G strictly drops under
/// Gaussian blur. R responds to structures thinner than the 3x3 median window (impulse noise,
/// one-pixel streaks) and is zero on flat regions and straight step edges. A constant image
/// scores exactly 0.
class ProxyScorer : public QualityScorer {
 public:
  explicit ProxyScorer(double noise_weight = 3.0) : noise_weight_(noise_weight) {}
  std::string name() const override { return "proxy-sharpness-v1"; }
  std::pair<double, double> score_range() const override { return {-1e9, 1e9}; }
  double score(const torch::Tensor& image) override;

  static double gradient_term(const torch::Tensor& image);
  static double median_residual_term(const torch::Tensor& image);

 private:
  double noise_weight_;
};

/// Adapter for an external scorer executable: the image is written to a temporary 8-bit PNG,
/// `command <png-path>` is run, and the first number on its stdout is the score.
class CommandScorer : public QualityScorer {
 public:
  explicit CommandScorer(std::string command) : command_(std::move(command)) {}
  std::string name() const override { return "command:" + command_; }
  std::pair<double, double> score_range() const override { return {-1e9, 1e9}; }
  double score(const torch::Tensor& image) override;

 private:
  std::string command_;
};

}  // namespace semidiff::warehouse
