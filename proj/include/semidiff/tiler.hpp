#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "semidiff/diffusion.hpp"

namespace semidiff::tiler {

/// Top-left offsets of every window, rows outer and columns inner.
struct PatchGrid {
  int64_t height = 0;
  int64_t width = 0;
  int64_t patch = 64;
  int64_t stride = 4;
  std::vector<int64_t> rows;
  std::vector<int64_t> cols;
  std::vector<std::pair<int64_t, int64_t>> positions;

  int64_t size() const { return static_cast<int64_t>(positions.size()); }
};

/// {0, stride, 2*stride, ...} below dim - patch, then dim - patch itself.
std::vector<int64_t> axis_positions(int64_t dim, int64_t patch, int64_t stride);

/// Throws SizeError if the image is smaller than the patch, ValidationError on stride < 1.
PatchGrid make_grid(int64_t height, int64_t width, int64_t patch = 64, int64_t stride = 4);

/// Overlap sums in double plus per-pixel coverage counts.
class Accumulator {
 public:
  Accumulator(int64_t channels, int64_t height, int64_t width);
  void add(const torch::Tensor& patch, int64_t row, int64_t col);
  /// omega / counts as float32 [C, H, W]. Throws ValidationError if any pixel is uncovered.
  torch::Tensor result() const;
  const torch::Tensor& counts() const { return counts_; }

 private:
  torch::Tensor omega_;   // float64 [C, H, W]
  torch::Tensor counts_;  // int32 [H, W]
};

/// Restores a batch of degraded patches [N, 3, p, p]; seeds[i] drives patch i's noise.
using PatchRestorer =
    std::function<torch::Tensor(const torch::Tensor& patches, const std::vector<uint64_t>& seeds)>;

/// y_T from each patch's own stream, then reverse_chain from T with the same stream.
PatchRestorer diffusion_restorer(diffusion::ConditionalDenoiser& gen,
                                 const diffusion::NoiseSchedule& sched,
                                 diffusion::ReverseMode mode = diffusion::ReverseMode::full_chain);

uint64_t patch_seed(uint64_t seed, int64_t patch_index);

struct TileOptions {
  int64_t patch = 64;
  int64_t stride = 4;
  uint64_t seed = 0;
  int64_t batch_size = 16;
};

/// Tiles x [3, H, W], restores every window and averages the overlaps. Odd sizes are
/// reflection-padded to even before tiling and cropped back afterwards.
torch::Tensor restore_image(const torch::Tensor& x, const PatchRestorer& restorer,
                            const TileOptions& opts);

/// Every PNG/JPEG under `input` (a file or a directory) restored into `output_dir` as PNG
/// with the same stem. Returns the written paths.
std::vector<std::filesystem::path> restore_files(const std::filesystem::path& input,
                                                 const std::filesystem::path& output_dir,
                                                 const PatchRestorer& restorer,
                                                 const TileOptions& opts);

}  // namespace semidiff::tiler
