#include "semidiff/features.hpp"

#include <cmath>
#include <iostream>

#include "semidiff/errors.hpp"
#include "semidiff/random.hpp"

namespace semidiff::losses {

namespace {

std::vector<int64_t> scaled(std::vector<int64_t> widths, int64_t scale) {
  if (scale < 1) throw ValidationError("vgg: width_scale must be >= 1");
  for (auto& w : widths) w = std::max<int64_t>(4, w / scale);
  return widths;
}

}  // namespace

VggConfig VggConfig::perceptual(int64_t width_scale) {
  VggConfig c;
  c.convs_per_stage = {2, 2, 3};
  c.widths = scaled({64, 128, 256}, width_scale);
  c.taps = {{0, TapKind::pool}, {1, TapKind::pool}, {2, TapKind::pool}};
  return c;
}

VggConfig VggConfig::contrastive(int64_t width_scale) {
  VggConfig c;
  c.convs_per_stage = {2, 2, 4, 4, 4};
  c.widths = scaled({64, 128, 256, 512, 512}, width_scale);
  c.taps = {{0, TapKind::first_relu}, {1, TapKind::first_relu}, {2, TapKind::first_relu},
            {3, TapKind::first_relu}, {4, TapKind::first_relu}};
  c.seed = 19;
  return c;
}

VggNetImpl::VggNetImpl(const VggConfig& cfg) {
  convs = register_module("convs", torch::nn::ModuleList());
  int64_t ch = 3;
  for (size_t s = 0; s < cfg.convs_per_stage.size(); ++s) {
    for (int i = 0; i < cfg.convs_per_stage[s]; ++i) {
      convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(ch, cfg.widths[s], 3).padding(1)));
      ch = cfg.widths[s];
    }
  }
}

VggExtractor::VggExtractor(VggConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.convs_per_stage.size() != cfg_.widths.size() || cfg_.taps.empty()) {
    throw ValidationError("vgg: stage and width lists must align and at least one tap is required");
  }
  for (const auto& tap : cfg_.taps) {
    if (tap.stage < 0 || tap.stage >= static_cast<int>(cfg_.widths.size())) {
      throw ValidationError("vgg: tap refers to a missing stage");
    }
  }
  net_ = VggNet(cfg_);
  torch::NoGradGuard no_grad;
  uint64_t index = 0;
  for (auto& item : net_->named_parameters()) {
    auto& p = item.value();
    if (p.dim() == 4) {
      // He-normal keeps activations from collapsing through the ReLU stack.
      const double fan_in = static_cast<double>(p.size(1) * p.size(2) * p.size(3));
      p.copy_(torch::randn(p.sizes(), make_generator(derive_seed(cfg_.seed, ++index))) *
              std::sqrt(2.0 / fan_in));
    } else {
      p.zero_();
    }
    p.set_requires_grad(false);
  }
  net_->eval();
  name_ = "vgg-fixed-random";
}

void VggExtractor::load_weights(const std::filesystem::path& path) {
  try {
    torch::load(net_, path.string());
  } catch (const std::exception& e) {
    throw FeatureBackendError("vgg: cannot load weights from " + path.string() + ": " + e.what());
  }
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
  name_ = "vgg:" + path.filename().string();
}

std::vector<torch::Tensor> VggExtractor::features(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw FeatureBackendError("vgg: expected [N, 3, H, W] images");
  }
  static const auto mean = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
  static const auto stdev = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
  auto h = ((images + 1.0) * 0.5 - mean) / stdev;

  std::vector<torch::Tensor> out;
  size_t conv = 0;
  const int last_stage = [&] {
    int m = 0;
    for (const auto& t : cfg_.taps) m = std::max(m, t.stage);
    return m;
  }();
  for (int s = 0; s <= last_stage; ++s) {
    for (int i = 0; i < cfg_.convs_per_stage[static_cast<size_t>(s)]; ++i) {
      h = torch::relu(net_->convs[conv++]->as<torch::nn::Conv2dImpl>()->forward(h));
      if (i == 0) {
        for (const auto& tap : cfg_.taps) {
          if (tap.stage == s && tap.kind == TapKind::first_relu) out.push_back(h);
        }
      }
    }
    if (h.size(2) >= 2 && h.size(3) >= 2) h = torch::max_pool2d(h, 2);
    for (const auto& tap : cfg_.taps) {
      if (tap.stage == s && tap.kind == TapKind::pool) out.push_back(h);
    }
  }
  return out;
}

std::unique_ptr<FeatureExtractor> make_vgg_extractor(const VggConfig& cfg,
                                                     const std::filesystem::path& weights) {
  auto fx = std::make_unique<VggExtractor>(cfg);
  if (!weights.empty()) {
    if (std::filesystem::exists(weights)) {
      fx->load_weights(weights);
    } else {
      std::cerr << "warning: feature weights " << weights
                << " not found; using the fixed-random fallback extractor\n";
    }
  }
  return fx;
}

}  // namespace semidiff::losses
