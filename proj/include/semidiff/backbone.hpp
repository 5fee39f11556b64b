#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "semidiff/diffusion.hpp"

namespace semidiff::backbone {

struct GeneratorConfig {
  int64_t image_channels = 12;   // wavelet channels of y_t (and of the condition x0)
  int64_t base_width = 32;
  std::vector<int64_t> channel_mult{1, 2, 2};
  int64_t blocks_per_level = 1;
  int64_t latent_dim = 32;
  int64_t embed_dim = 64;        // width of the time and latent embeddings
  bool condition_skip = true;    // predict a residual on top of the condition x0
  double head_init_scale = 0.1;  // output conv starts near zero
  uint64_t seed = 0;

  static GeneratorConfig tiny();
  static GeneratorConfig small();
  static GeneratorConfig paper_scale();
  void validate() const;
};

struct DiscriminatorConfig {
  int64_t image_channels = 12;
  int64_t base_width = 16;
  std::vector<int64_t> channel_mult{1, 2, 4, 4};
  int64_t embed_dim = 64;
  bool zero_init_head = false;
  uint64_t seed = 1;

  static DiscriminatorConfig tiny();
  static DiscriminatorConfig small();
  static DiscriminatorConfig paper_scale();
  void validate() const;
};

/// Sinusoidal embedding of integer steps: [N] -> [N, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim);

/// GroupNorm whose affine part is modulated by the latent embedding:
/// out = GN(x) * (1 + scale(z)) + shift(z).
struct AdaptiveGroupNormImpl : torch::nn::Module {
  AdaptiveGroupNormImpl(int64_t channels, int64_t style_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& style);
  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Linear style{nullptr};
};
TORCH_MODULE(AdaptiveGroupNorm);

struct ResBlockImpl : torch::nn::Module {
  ResBlockImpl(int64_t in, int64_t out, int64_t embed_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& temb,
                        const torch::Tensor& zemb);
  AdaptiveGroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::Linear time_proj{nullptr};
  torch::nn::Conv2d skip{nullptr};
};
TORCH_MODULE(ResBlock);

/// U-shaped encoder-decoder over cat(y_t, x0). Time embedding is added inside every residual
/// block; the latent enters through the adaptive group norms.
struct GeneratorImpl : torch::nn::Module {
  explicit GeneratorImpl(GeneratorConfig cfg);

  /// y_t, x0: [N, C, h, w]; z: [N, latent_dim]; t: int64 [N]. Returns y0_hat [N, C, h, w].
  torch::Tensor forward(const torch::Tensor& y_t, const torch::Tensor& x0,
                        const torch::Tensor& z, const torch::Tensor& t);

  const GeneratorConfig& config() const { return cfg_; }
  int64_t parameter_count() const;

 private:
  GeneratorConfig cfg_;
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Sequential latent_mlp{nullptr};
  torch::nn::Conv2d conv_in{nullptr};
  torch::nn::ModuleList down_blocks{nullptr};
  torch::nn::ModuleList downsamplers{nullptr};
  ResBlock mid{nullptr};
  torch::nn::ModuleList up_blocks{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv2d conv_out{nullptr};
};
TORCH_MODULE(Generator);

/// Time-conditional discriminator on cat(y_prev, y_t): conv feature stack, spatial sum,
/// final linear layer, logistic sigmoid.
struct DiscriminatorImpl : torch::nn::Module {
  explicit DiscriminatorImpl(DiscriminatorConfig cfg);

  /// Pre-sigmoid scores [N]; every loss consumes these.
  torch::Tensor logits(const torch::Tensor& y_prev, const torch::Tensor& y_t,
                       const torch::Tensor& t);
  /// Probabilities in the open interval (0, 1), float64 [N].
  torch::Tensor forward(const torch::Tensor& y_prev, const torch::Tensor& y_t,
                        const torch::Tensor& t);

  const DiscriminatorConfig& config() const { return cfg_; }

 private:
  DiscriminatorConfig cfg_;
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Conv2d conv_in{nullptr};
  torch::nn::ModuleList convs_a{nullptr}, convs_b{nullptr}, skips{nullptr}, time_projs{nullptr};
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(Discriminator);

/// Throws ValidationError on an invalid config. Parameters are initialized from cfg.seed only.
Generator build_generator(const GeneratorConfig& cfg);
Discriminator build_discriminator(const DiscriminatorConfig& cfg);

/// Exposes a Generator through the denoiser interface used by the reverse chain.
class GeneratorDenoiser : public diffusion::ConditionalDenoiser {
 public:
  explicit GeneratorDenoiser(Generator g) : g_(std::move(g)) {}
  int64_t latent_dim() const override { return g_->config().latent_dim; }
  torch::Tensor predict_clean(const torch::Tensor& y_t, const torch::Tensor& x0,
                              const torch::Tensor& z, const torch::Tensor& t) override {
    return g_->forward(y_t, x0, z, t);
  }

 private:
  Generator g_;
};

/// Wraps a denoiser and counts calls (one per batched invocation) and per-sample evaluations.
class CountingDenoiser : public diffusion::ConditionalDenoiser {
 public:
  explicit CountingDenoiser(diffusion::ConditionalDenoiser& inner) : inner_(inner) {}
  int64_t latent_dim() const override { return inner_.latent_dim(); }
  torch::Tensor predict_clean(const torch::Tensor& y_t, const torch::Tensor& x0,
                              const torch::Tensor& z, const torch::Tensor& t) override {
    ++calls_;
    sample_evaluations_ += y_t.size(0);
    return inner_.predict_clean(y_t, x0, z, t);
  }
  int64_t calls() const { return calls_; }
  int64_t sample_evaluations() const { return sample_evaluations_; }

 private:
  diffusion::ConditionalDenoiser& inner_;
  int64_t calls_ = 0;
  int64_t sample_evaluations_ = 0;
};

// ---------------------------------------------------------------------------------------------
// Parameter snapshots

struct ParamTensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> values;
  bool operator==(const ParamTensor&) const = default;
};

/// Flat ordered view of every trainable parameter of one network.
struct ParamSnapshot {
  std::vector<ParamTensor> params;

  bool same_structure(const ParamSnapshot& other) const;
  int64_t numel() const;
  /// Euclidean norm of (this - other), accumulated in double.
  double distance(const ParamSnapshot& other) const;
  bool operator==(const ParamSnapshot&) const = default;
};

ParamSnapshot take_snapshot(const torch::nn::Module& module);
/// Throws SnapshotCompatibilityError unless names and shapes match the module exactly.
void load_snapshot(torch::nn::Module& module, const ParamSnapshot& snapshot);

/// teacher <- eta * teacher + (1 - eta) * student, elementwise. eta in [0, 1].
ParamSnapshot ema_update(const ParamSnapshot& teacher, const ParamSnapshot& student, double eta);
/// In-place variant on live modules; bit-identical to the snapshot form.
void ema_update(torch::nn::Module& teacher, const torch::nn::Module& student, double eta);

}  // namespace semidiff::backbone
