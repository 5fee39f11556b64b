#pragma once

#include <cstdint>
#include <vector>

#include <ATen/core/Generator.h>
#include <torch/torch.h>

namespace semidiff {

/// splitmix64 finalizer; the basis for every derived seed in the project.
constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a root seed and up to three stream coordinates.
constexpr uint64_t derive_seed(uint64_t root, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return splitmix64(splitmix64(splitmix64(splitmix64(root) ^ a) ^ b) ^ c);
}

at::Generator make_generator(uint64_t seed);

/// One independent normal stream per batch item, so every sample's noise depends only on its
/// own seed and never on batch composition or patch order.
class SampleNoise {
 public:
  explicit SampleNoise(const std::vector<uint64_t>& seeds);

  /// Seeds derive_seed(root, i) for i in [0, n).
  static SampleNoise from_root(uint64_t root, int64_t n);

  int64_t size() const { return static_cast<int64_t>(gens_.size()); }

  /// Draws [N, per_sample...] standard normals, one row per sample.
  torch::Tensor normal(at::IntArrayRef per_sample_shape);

  /// Draws [|rows|, per_sample...] for the listed samples only.
  torch::Tensor normal(const std::vector<int64_t>& rows, at::IntArrayRef per_sample_shape);

 private:
  std::vector<at::Generator> gens_;
};

}  // namespace semidiff
