#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace semidiff::losses {

/// Fixed (non-trainable) mapping from an image batch [N, 3, H, W] in [-1, 1] to one feature
/// map per tap. Gradients flow through to the input.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<torch::Tensor> features(const torch::Tensor& images) = 0;
  virtual size_t tap_count() const = 0;
  virtual std::string name() const = 0;
};

/// Every tap returns the input unchanged.
class IdentityExtractor : public FeatureExtractor {
 public:
  explicit IdentityExtractor(size_t taps = 1) : taps_(taps) {}
  std::vector<torch::Tensor> features(const torch::Tensor& images) override {
    return std::vector<torch::Tensor>(taps_, images);
  }
  size_t tap_count() const override { return taps_; }
  std::string name() const override { return "identity"; }

 private:
  size_t taps_;
};

enum class TapKind { first_relu, pool };

struct Tap {
  int stage = 0;
  TapKind kind = TapKind::pool;
};

/// A VGG-style stack: stages of 3x3 conv + ReLU, each closed by a 2x2 max pool.
struct VggConfig {
  std::vector<int> convs_per_stage;
  std::vector<int64_t> widths;
  std::vector<Tap> taps;
  uint64_t seed = 7;

  /// 16-layer layout tapped at pool-1..3. `width_scale` divides the classic 64..512 widths.
  static VggConfig perceptual(int64_t width_scale = 1);
  /// 19-layer layout tapped at the first ReLU of each of the five stages.
  static VggConfig contrastive(int64_t width_scale = 1);
};

struct VggNetImpl : torch::nn::Module {
  explicit VggNetImpl(const VggConfig& cfg);
  torch::nn::ModuleList convs{nullptr};
};
TORCH_MODULE(VggNet);

class VggExtractor : public FeatureExtractor {
 public:
  /// Deterministic fixed-random weights drawn from cfg.seed.
  explicit VggExtractor(VggConfig cfg);

  /// Loads trained weights saved with torch::save on a VggNet of the same layout.
  /// Throws FeatureBackendError if the file cannot be read or does not fit.
  void load_weights(const std::filesystem::path& path);

  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  size_t tap_count() const override { return cfg_.taps.size(); }
  std::string name() const override { return name_; }
  const VggConfig& config() const { return cfg_; }

 private:
  VggConfig cfg_;
  VggNet net_{nullptr};
  std::string name_;
};

/// Trained weights from `weights` when given and present; otherwise the fixed-random fallback,
/// with a warning on stderr when a path was given but is missing.
std::unique_ptr<FeatureExtractor> make_vgg_extractor(const VggConfig& cfg,
                                                     const std::filesystem::path& weights = {});

}  // namespace semidiff::losses
