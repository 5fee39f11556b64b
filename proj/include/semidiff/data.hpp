#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace semidiff::data {

namespace fs = std::filesystem;

/// One weather dataset. `labeled_dir` holds degraded/ and clean/ with matching filenames;
/// `unlabeled_dir` holds degraded images only.
struct DatasetSpec {
  std::string name;
  fs::path labeled_dir;
  fs::path unlabeled_dir;
  double weight = 1.0;
  std::optional<size_t> max_samples;  // seeded subsample of each split
  uint64_t selection_seed = 0;
};

/// Reads datasets.json (a list of DatasetSpec records). Relative paths resolve against the
/// file's directory. Throws ConfigError on malformed input.
std::vector<DatasetSpec> read_dataset_specs(const fs::path& file);
void write_dataset_specs(const fs::path& file, const std::vector<DatasetSpec>& specs);

struct LabeledSample {
  std::string id;  // "<dataset>/<filename>"
  fs::path degraded;
  fs::path clean;
};

struct UnlabeledSample {
  std::string id;
  fs::path degraded;
};

struct DatasetIndex {
  std::string name;
  double weight = 1.0;
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
};

/// Immutable once loaded. Datasets keep manifest order, which is also curriculum order.
struct Corpus {
  std::vector<DatasetIndex> datasets;
  size_t labeled_count() const;
  size_t unlabeled_count() const;
  std::string summary() const;
};

/// Indexes every dataset, validating labeled pairing. Missing directories count as empty.
/// Throws ManifestError naming every degraded file without a clean partner (and vice versa).
Corpus load_manifest(const std::vector<DatasetSpec>& specs);

// ---------------------------------------------------------------------------------------------
// Cropping

enum class CropMode { random, center };

struct CropOffset {
  int64_t row = 0;
  int64_t col = 0;
  bool operator==(const CropOffset&) const = default;
};

/// floor((dim - size) / 2) per axis. Throws SizeError if the image is smaller than `size`.
CropOffset center_offset(int64_t height, int64_t width, int64_t size);
CropOffset random_offset(int64_t height, int64_t width, int64_t size, std::mt19937_64& rng);

/// [C, H, W] -> [C, size, size] window at `at`.
torch::Tensor crop(const torch::Tensor& image, CropOffset at, int64_t size);

/// Crops x and y with one shared offset. Throws SizeError on mismatched or too-small images.
std::pair<torch::Tensor, torch::Tensor> crop_pair(const torch::Tensor& x, const torch::Tensor& y,
                                                  CropMode mode, int64_t size,
                                                  std::mt19937_64& rng);

// ---------------------------------------------------------------------------------------------
// Synthetic desk-scale data

enum class DegradationKind { streaks, blobs, haze };

DegradationKind parse_degradation(const std::string& name);
std::string to_string(DegradationKind kind);

struct SyntheticDegrader {
  DegradationKind kind = DegradationKind::streaks;
  double severity = 0.5;  // (0, 1]
  uint64_t seed = 0;
};

/// Overlays the artifact layer: out = clean + severity * mask * (target - clean), with the
/// mask and target fixed by (kind, seed, size). Deviation from clean is linear in severity.
torch::Tensor synth_degrade(const torch::Tensor& clean, const SyntheticDegrader& d);

/// Smooth synthetic scene (gradient backdrop, soft-edged shapes, faint texture) in [-0.9, 0.9].
torch::Tensor synth_clean_image(int64_t height, int64_t width, uint64_t seed);

struct SyntheticCorpusOptions {
  int64_t count = 16;       // training images, split 1:1 labeled/unlabeled
  int64_t test_count = 8;   // held-out degraded/clean pairs
  int64_t size = 64;
  DegradationKind kind = DegradationKind::streaks;
  double severity = 0.8;
  uint64_t seed = 0;
  std::string name = "synthetic";
};

/// Writes <out>/{labeled/{degraded,clean},unlabeled,test/{degraded,clean}} and
/// <out>/datasets.json; returns the spec that was written.
DatasetSpec write_synthetic_corpus(const fs::path& out, const SyntheticCorpusOptions& opts);

/// Deterministic seeded 1:1 partition; the first half has ceil(n/2) items.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_half(std::vector<T> items, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(items.begin(), items.end(), rng);
  const auto mid = static_cast<std::ptrdiff_t>((items.size() + 1) / 2);
  return {std::vector<T>(items.begin(), items.begin() + mid),
          std::vector<T>(items.begin() + mid, items.end())};
}

// ---------------------------------------------------------------------------------------------
// Curriculum

/// Memory-replay curriculum: dataset k (0-based, manifest order) joins once `epoch` reaches
/// milestones[k-1]; datasets past the end of the list join at the last milestone. An empty
/// list activates every dataset from the start. The active set only grows.
struct CurriculumState {
  std::vector<size_t> active_datasets;
  int64_t epoch = 0;
};

CurriculumState curriculum_at(int64_t epoch, const std::vector<int64_t>& milestones,
                              size_t dataset_count);

struct SampleRef {
  size_t dataset = 0;
  size_t index = 0;
  bool operator==(const SampleRef&) const = default;
};

/// Labeled samples of the active datasets, shuffled by (seed, epoch).
std::vector<SampleRef> labeled_epoch_order(const Corpus& corpus, const CurriculumState& state,
                                           uint64_t seed);

/// Unlabeled samples of the active datasets, each dataset shuffled by (seed, epoch), then
/// interleaved round-robin so every active dataset is visited in turn.
std::vector<SampleRef> unlabeled_epoch_order(const Corpus& corpus, const CurriculumState& state,
                                             uint64_t seed);

/// Loads each path once; later requests return the cached tensor.
class ImageCache {
 public:
  const torch::Tensor& get(const fs::path& path);
  size_t size() const { return cache_.size(); }

 private:
  std::map<fs::path, torch::Tensor> cache_;
};

}  // namespace semidiff::data
