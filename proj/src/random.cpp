#include "semidiff/random.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace semidiff {

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

SampleNoise::SampleNoise(const std::vector<uint64_t>& seeds) {
  gens_.reserve(seeds.size());
  for (auto s : seeds) gens_.push_back(make_generator(s));
}

SampleNoise SampleNoise::from_root(uint64_t root, int64_t n) {
  std::vector<uint64_t> seeds(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) seeds[static_cast<size_t>(i)] = derive_seed(root, static_cast<uint64_t>(i));
  return SampleNoise(seeds);
}

torch::Tensor SampleNoise::normal(at::IntArrayRef per_sample_shape) {
  std::vector<int64_t> rows(gens_.size());
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int64_t>(i);
  return normal(rows, per_sample_shape);
}

torch::Tensor SampleNoise::normal(const std::vector<int64_t>& rows,
                                  at::IntArrayRef per_sample_shape) {
  std::vector<torch::Tensor> draws;
  draws.reserve(rows.size());
  for (auto r : rows) {
    draws.push_back(torch::randn(per_sample_shape, gens_.at(static_cast<size_t>(r)),
                                 torch::kFloat32));
  }
  return torch::stack(draws, 0);
}

}  // namespace semidiff
