#include "semidiff/backbone.hpp"

#include <cmath>

#include "semidiff/errors.hpp"
#include "semidiff/random.hpp"

namespace semidiff::backbone {

namespace nn = torch::nn;

namespace {

int64_t group_count(int64_t channels) {
  for (int64_t g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

nn::Conv2d conv3(int64_t in, int64_t out, int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

// Re-draws every weight from a generator seeded by the config so that construction never
// touches torch's global RNG. Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero;
// norm scales one.
void init_parameters(nn::Module& module, uint64_t seed) {
  torch::NoGradGuard no_grad;
  uint64_t index = 0;
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    auto& p = item.value();
    const auto& name = item.key();
    auto gen = make_generator(derive_seed(seed, ++index));
    if (p.dim() >= 2) {
      const double fan_in = static_cast<double>(p.numel() / p.size(0));
      const double bound = 1.0 / std::sqrt(fan_in);
      p.copy_(torch::rand(p.sizes(), gen, torch::kFloat32) * (2.0 * bound) - bound);
    } else if (name.find("norm") != std::string::npos && name.ends_with("weight")) {
      p.fill_(1.0);
    } else {
      p.zero_();
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Configs

GeneratorConfig GeneratorConfig::tiny() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::small() {
  GeneratorConfig c;
  c.base_width = 64;
  c.channel_mult = {1, 2, 2, 2};
  c.blocks_per_level = 2;
  c.latent_dim = 64;
  c.embed_dim = 128;
  return c;
}

GeneratorConfig GeneratorConfig::paper_scale() {
  GeneratorConfig c;
  c.base_width = 128;
  c.channel_mult = {1, 2, 2, 2};
  c.blocks_per_level = 2;
  c.latent_dim = 100;
  c.embed_dim = 256;
  return c;
}

void GeneratorConfig::validate() const {
  if (base_width < 8) throw ValidationError("generator: base_width must be >= 8");
  if (latent_dim < 1) throw ValidationError("generator: latent_dim must be >= 1");
  if (image_channels < 1 || image_channels % 4 != 0) {
    throw ValidationError("generator: image_channels must be a positive multiple of 4");
  }
  if (channel_mult.empty()) throw ValidationError("generator: channel_mult is empty");
  for (auto m : channel_mult) {
    if (m < 1) throw ValidationError("generator: channel multipliers must be >= 1");
  }
  if (blocks_per_level < 1) throw ValidationError("generator: blocks_per_level must be >= 1");
  if (embed_dim < 2 || embed_dim % 2 != 0) {
    throw ValidationError("generator: embed_dim must be even and >= 2");
  }
}

DiscriminatorConfig DiscriminatorConfig::tiny() { return DiscriminatorConfig{}; }

DiscriminatorConfig DiscriminatorConfig::small() {
  DiscriminatorConfig c;
  c.base_width = 32;
  c.embed_dim = 128;
  return c;
}

DiscriminatorConfig DiscriminatorConfig::paper_scale() {
  DiscriminatorConfig c;
  c.base_width = 64;
  c.channel_mult = {1, 2, 4, 8};
  c.embed_dim = 256;
  return c;
}

void DiscriminatorConfig::validate() const {
  if (base_width < 8) throw ValidationError("discriminator: base_width must be >= 8");
  if (image_channels < 1) throw ValidationError("discriminator: image_channels must be >= 1");
  if (channel_mult.empty()) throw ValidationError("discriminator: channel_mult is empty");
  if (embed_dim < 2 || embed_dim % 2 != 0) {
    throw ValidationError("discriminator: embed_dim must be even and >= 2");
  }
}

// ---------------------------------------------------------------------------------------------
// Building blocks

torch::Tensor timestep_embedding(const torch::Tensor& t, int64_t dim) {
  const int64_t half = dim / 2;
  auto freqs = torch::exp(torch::arange(half, torch::kFloat32) *
                          (-std::log(10000.0) / static_cast<double>(half)));
  auto args = t.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  return torch::cat({torch::sin(args), torch::cos(args)}, 1);
}

AdaptiveGroupNormImpl::AdaptiveGroupNormImpl(int64_t channels, int64_t style_dim) {
  norm = register_module("norm", nn::GroupNorm(nn::GroupNormOptions(group_count(channels), channels)));
  style = register_module("style", nn::Linear(style_dim, 2 * channels));
}

torch::Tensor AdaptiveGroupNormImpl::forward(const torch::Tensor& x, const torch::Tensor& s) {
  auto params = style->forward(s).unsqueeze(-1).unsqueeze(-1);
  auto chunks = params.chunk(2, 1);
  return norm->forward(x) * (1 + chunks[0]) + chunks[1];
}

ResBlockImpl::ResBlockImpl(int64_t in, int64_t out, int64_t embed_dim) {
  norm1 = register_module("norm1", AdaptiveGroupNorm(in, embed_dim));
  conv1 = register_module("conv1", conv3(in, out));
  time_proj = register_module("time_proj", nn::Linear(embed_dim, out));
  norm2 = register_module("norm2", AdaptiveGroupNorm(out, embed_dim));
  conv2 = register_module("conv2", conv3(out, out));
  if (in != out) skip = register_module("skip", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& temb,
                                    const torch::Tensor& zemb) {
  auto h = conv1->forward(torch::silu(norm1->forward(x, zemb)));
  h = h + time_proj->forward(temb).unsqueeze(-1).unsqueeze(-1);
  h = conv2->forward(torch::silu(norm2->forward(h, zemb)));
  return (skip ? skip->forward(x) : x) + h;
}

// ---------------------------------------------------------------------------------------------
// Generator

GeneratorImpl::GeneratorImpl(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int64_t e = cfg_.embed_dim;
  time_mlp = register_module(
      "time_mlp", nn::Sequential(nn::Linear(e, e), nn::SiLU(), nn::Linear(e, e)));
  latent_mlp = register_module(
      "latent_mlp", nn::Sequential(nn::Linear(cfg_.latent_dim, e), nn::SiLU(), nn::Linear(e, e)));
  conv_in = register_module("conv_in", conv3(2 * cfg_.image_channels, cfg_.base_width));

  down_blocks = register_module("down_blocks", nn::ModuleList());
  downsamplers = register_module("downsamplers", nn::ModuleList());
  up_blocks = register_module("up_blocks", nn::ModuleList());

  const auto levels = static_cast<int64_t>(cfg_.channel_mult.size());
  std::vector<int64_t> widths;
  int64_t ch = cfg_.base_width;
  for (int64_t l = 0; l < levels; ++l) {
    const int64_t w = cfg_.base_width * cfg_.channel_mult[static_cast<size_t>(l)];
    for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) {
      down_blocks->push_back(ResBlock(ch, w, e));
      ch = w;
    }
    widths.push_back(w);
    if (l + 1 < levels) downsamplers->push_back(conv3(w, w, 2));
  }
  mid = register_module("mid", ResBlock(ch, ch, e));
  for (int64_t l = levels - 1; l >= 0; --l) {
    const int64_t w = widths[static_cast<size_t>(l)];
    for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) {
      up_blocks->push_back(ResBlock(b == 0 ? ch + w : w, w, e));
      ch = w;
    }
  }
  out_norm = register_module("out_norm", nn::GroupNorm(nn::GroupNormOptions(group_count(ch), ch)));
  conv_out = register_module("conv_out", conv3(ch, cfg_.image_channels));

  init_parameters(*this, cfg_.seed);
  torch::NoGradGuard no_grad;
  conv_out->weight.mul_(cfg_.head_init_scale);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& y_t, const torch::Tensor& x0,
                                     const torch::Tensor& z, const torch::Tensor& t) {
  if (y_t.dim() != 4 || y_t.size(1) != cfg_.image_channels || x0.sizes() != y_t.sizes()) {
    throw DimensionError("generator: y_t and x0 must both be [N, " +
                         std::to_string(cfg_.image_channels) + ", h, w], got " +
                         shape_string(y_t.sizes().vec()) + " and " +
                         shape_string(x0.sizes().vec()));
  }
  const auto levels = static_cast<int64_t>(cfg_.channel_mult.size());
  const int64_t factor = int64_t{1} << (levels - 1);
  if (y_t.size(2) % factor != 0 || y_t.size(3) % factor != 0) {
    throw DimensionError("generator: spatial size must be divisible by " + std::to_string(factor));
  }
  if (z.dim() != 2 || z.size(0) != y_t.size(0) || z.size(1) != cfg_.latent_dim) {
    throw DimensionError("generator: z must be [N, " + std::to_string(cfg_.latent_dim) + "]");
  }
  if (t.dim() != 1 || t.size(0) != y_t.size(0)) {
    throw DimensionError("generator: t must be [N]");
  }

  auto temb = time_mlp->forward(timestep_embedding(t, cfg_.embed_dim));
  auto zemb = latent_mlp->forward(z);

  auto h = conv_in->forward(torch::cat({y_t, x0}, 1));
  std::vector<torch::Tensor> skips;
  size_t block = 0;
  for (int64_t l = 0; l < levels; ++l) {
    for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) {
      h = down_blocks[block++]->as<ResBlockImpl>()->forward(h, temb, zemb);
    }
    skips.push_back(h);
    if (l + 1 < levels) h = downsamplers[static_cast<size_t>(l)]->as<nn::Conv2dImpl>()->forward(h);
  }
  h = mid->forward(h, temb, zemb);
  block = 0;
  for (int64_t l = levels - 1; l >= 0; --l) {
    if (l + 1 < levels) {
      h = torch::nn::functional::interpolate(
          h, torch::nn::functional::InterpolateFuncOptions()
                 .scale_factor(std::vector<double>{2.0, 2.0})
                 .mode(torch::kNearest));
    }
    h = torch::cat({h, skips[static_cast<size_t>(l)]}, 1);
    for (int64_t b = 0; b < cfg_.blocks_per_level; ++b) {
      h = up_blocks[block++]->as<ResBlockImpl>()->forward(h, temb, zemb);
    }
  }
  auto out = conv_out->forward(torch::silu(out_norm->forward(h)));
  return cfg_.condition_skip ? x0 + out : out;
}

int64_t GeneratorImpl::parameter_count() const {
  int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

// ---------------------------------------------------------------------------------------------
// Discriminator

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int64_t e = cfg_.embed_dim;
  time_mlp = register_module("time_mlp", nn::Sequential(nn::Linear(e, e), nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)), nn::Linear(e, e)));
  conv_in = register_module("conv_in", conv3(2 * cfg_.image_channels, cfg_.base_width));
  convs_a = register_module("convs_a", nn::ModuleList());
  convs_b = register_module("convs_b", nn::ModuleList());
  skips = register_module("skips", nn::ModuleList());
  time_projs = register_module("time_projs", nn::ModuleList());
  int64_t ch = cfg_.base_width;
  for (auto m : cfg_.channel_mult) {
    const int64_t w = cfg_.base_width * m;
    convs_a->push_back(conv3(ch, w));
    time_projs->push_back(nn::Linear(e, w));
    convs_b->push_back(conv3(w, w));
    skips->push_back(nn::Conv2d(nn::Conv2dOptions(ch, w, 1)));
    ch = w;
  }
  fc = register_module("fc", nn::Linear(ch, 1));
  init_parameters(*this, cfg_.seed);
  if (cfg_.zero_init_head) {
    torch::NoGradGuard no_grad;
    fc->weight.zero_();
    fc->bias.zero_();
  }
}

torch::Tensor DiscriminatorImpl::logits(const torch::Tensor& y_prev, const torch::Tensor& y_t,
                                        const torch::Tensor& t) {
  if (y_prev.dim() != 4 || y_prev.sizes() != y_t.sizes() ||
      y_prev.size(1) != cfg_.image_channels) {
    throw DimensionError("discriminator: inputs must be matching [N, " +
                         std::to_string(cfg_.image_channels) + ", h, w] tensors");
  }
  if (t.dim() != 1 || t.size(0) != y_t.size(0)) throw DimensionError("discriminator: t must be [N]");
  auto act = [](const torch::Tensor& x) { return torch::leaky_relu(x, 0.2); };
  auto temb = time_mlp->forward(timestep_embedding(t, cfg_.embed_dim));
  auto h = conv_in->forward(torch::cat({y_prev, y_t}, 1));
  for (size_t i = 0; i < convs_a->size(); ++i) {
    auto r = convs_a[i]->as<nn::Conv2dImpl>()->forward(act(h));
    r = r + time_projs[i]->as<nn::LinearImpl>()->forward(act(temb)).unsqueeze(-1).unsqueeze(-1);
    r = convs_b[i]->as<nn::Conv2dImpl>()->forward(act(r));
    auto s = skips[i]->as<nn::Conv2dImpl>()->forward(h);
    h = (r + s) / std::sqrt(2.0);
    if (h.size(2) >= 2 && h.size(3) >= 2) h = torch::avg_pool2d(h, 2);
  }
  auto pooled = act(h).sum({2, 3});
  return fc->forward(pooled).squeeze(1);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& y_prev, const torch::Tensor& y_t,
                                         const torch::Tensor& t) {
  // Clamped in double so the probability never rounds to exactly 0 or 1.
  return torch::sigmoid(logits(y_prev, y_t, t).to(torch::kFloat64).clamp(-30.0, 30.0));
}

Generator build_generator(const GeneratorConfig& cfg) {
  cfg.validate();
  return Generator(cfg);
}

Discriminator build_discriminator(const DiscriminatorConfig& cfg) {
  cfg.validate();
  return Discriminator(cfg);
}

}  // namespace semidiff::backbone
