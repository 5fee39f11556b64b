#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include <torch/torch.h>

// c10's glog-style logging macros share names with doctest's assertions.
#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LT
#undef CHECK_LE
#undef CHECK_GT
#undef CHECK_GE
#include "doctest.h"

#include "semidiff/config.hpp"

namespace fs = std::filesystem;

namespace testutil {

/// Fresh, empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() /
           ("semidiff_unit_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Tiny preset shrunk further so a whole training run takes seconds.
inline semidiff::config::TrainConfig micro_config() {
  auto c = semidiff::config::TrainConfig::tiny();
  c.generator.base_width = 8;
  c.generator.channel_mult = {1, 2};
  c.generator.latent_dim = 8;
  c.generator.embed_dim = 16;
  c.discriminator.base_width = 8;
  c.discriminator.channel_mult = {1, 2};
  c.discriminator.embed_dim = 16;
  c.features.perceptual_width_scale = 16;
  c.features.contrastive_width_scale = 16;
  c.crop = 32;
  c.phase1_epochs = 2;
  c.phase2_epochs = 2;
  c.batch_phase1 = 2;
  c.batch_labeled = 2;
  c.batch_unlabeled = 2;
  c.warehouse_batch = 2;
  c.checkpoint_every = 1;
  return c;
}

inline double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

}  // namespace testutil
