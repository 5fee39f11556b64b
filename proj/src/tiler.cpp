#include "semidiff/tiler.hpp"

#include <algorithm>

#include "semidiff/errors.hpp"
#include "semidiff/image_io.hpp"
#include "semidiff/random.hpp"
#include "semidiff/wavelet.hpp"

namespace semidiff::tiler {

namespace fs = std::filesystem;
using torch::indexing::Slice;

std::vector<int64_t> axis_positions(int64_t dim, int64_t patch, int64_t stride) {
  std::vector<int64_t> out;
  for (int64_t p = 0; p < dim - patch; p += stride) out.push_back(p);
  out.push_back(dim - patch);
  return out;
}

PatchGrid make_grid(int64_t height, int64_t width, int64_t patch, int64_t stride) {
  if (patch < 1 || stride < 1) throw ValidationError("make_grid: patch and stride must be >= 1");
  if (height < patch || width < patch) {
    throw SizeError("make_grid: image " + std::to_string(height) + "x" + std::to_string(width) +
                    " is smaller than the " + std::to_string(patch) + " patch");
  }
  PatchGrid g;
  g.height = height;
  g.width = width;
  g.patch = patch;
  g.stride = stride;
  g.rows = axis_positions(height, patch, stride);
  g.cols = axis_positions(width, patch, stride);
  for (auto r : g.rows) {
    for (auto c : g.cols) g.positions.emplace_back(r, c);
  }
  return g;
}

Accumulator::Accumulator(int64_t channels, int64_t height, int64_t width)
    : omega_(torch::zeros({channels, height, width}, torch::kFloat64)),
      counts_(torch::zeros({height, width}, torch::kInt32)) {}

void Accumulator::add(const torch::Tensor& patch, int64_t row, int64_t col) {
  const auto p = patch.size(-1);
  omega_.index({Slice(), Slice(row, row + p), Slice(col, col + p)})
      .add_(patch.detach().to(torch::kFloat64));
  counts_.index({Slice(row, row + p), Slice(col, col + p)}).add_(1);
}

torch::Tensor Accumulator::result() const {
  if (counts_.min().item<int>() < 1) throw ValidationError("tiler: uncovered pixels");
  return (omega_ / counts_.to(torch::kFloat64).unsqueeze(0)).to(torch::kFloat32);
}

uint64_t patch_seed(uint64_t seed, int64_t patch_index) {
  return derive_seed(seed, 0x7113, static_cast<uint64_t>(patch_index));
}

PatchRestorer diffusion_restorer(diffusion::ConditionalDenoiser& gen,
                                 const diffusion::NoiseSchedule& sched,
                                 diffusion::ReverseMode mode) {
  return [&gen, &sched, mode](const torch::Tensor& patches, const std::vector<uint64_t>& seeds) {
    torch::NoGradGuard no_grad;
    auto x0 = wavelet::dwt(patches);
    SampleNoise noise(seeds);
    auto y_start = noise.normal(x0.sizes().slice(1));
    auto t = torch::full({x0.size(0)}, sched.steps, torch::kInt64);
    return diffusion::reverse_chain(x0, t, y_start, gen, sched, noise, mode);
  };
}

torch::Tensor restore_image(const torch::Tensor& x, const PatchRestorer& restorer,
                            const TileOptions& opts) {
  if (x.dim() != 3 || x.size(0) != 3) throw DimensionError("restore_image: expected [3, H, W]");
  if (opts.batch_size < 1) throw ValidationError("restore_image: batch size must be >= 1");
  const int64_t h = x.size(1), w = x.size(2);
  const int64_t pad_h = h % 2, pad_w = w % 2;
  auto padded = x.to(torch::kFloat32);
  if (pad_h || pad_w) {
    if (h < 2 || w < 2) throw SizeError("restore_image: image too small to pad");
    padded = torch::nn::functional::pad(
                 padded.unsqueeze(0),
                 torch::nn::functional::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReflect))
                 .squeeze(0);
  }
  const auto grid = make_grid(padded.size(1), padded.size(2), opts.patch, opts.stride);
  Accumulator acc(3, padded.size(1), padded.size(2));

  for (int64_t begin = 0; begin < grid.size(); begin += opts.batch_size) {
    const int64_t end = std::min(grid.size(), begin + opts.batch_size);
    std::vector<torch::Tensor> crops;
    std::vector<uint64_t> seeds;
    for (int64_t k = begin; k < end; ++k) {
      const auto [r, c] = grid.positions[static_cast<size_t>(k)];
      crops.push_back(
          padded.index({Slice(), Slice(r, r + opts.patch), Slice(c, c + opts.patch)}));
      seeds.push_back(patch_seed(opts.seed, k));
    }
    auto out = restorer(torch::stack(crops), seeds);
    if (out.dim() != 4 || out.size(0) != end - begin || out.size(1) != 3 ||
        out.size(2) != opts.patch || out.size(3) != opts.patch) {
      throw ModelContractError("restore_image: restorer returned " + shape_string(out.sizes().vec()));
    }
    for (int64_t k = begin; k < end; ++k) {
      const auto [r, c] = grid.positions[static_cast<size_t>(k)];
      acc.add(out[k - begin], r, c);
    }
  }
  return acc.result().index({Slice(), Slice(0, h), Slice(0, w)}).contiguous();
}

std::vector<fs::path> restore_files(const fs::path& input, const fs::path& output_dir,
                                    const PatchRestorer& restorer, const TileOptions& opts) {
  std::vector<fs::path> inputs;
  auto is_image = [](const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
  };
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input)) {
      if (e.is_regular_file() && is_image(e.path())) inputs.push_back(e.path());
    }
    std::sort(inputs.begin(), inputs.end());
  } else if (fs::is_regular_file(input)) {
    inputs.push_back(input);
  } else {
    throw IngestionError("infer: no such input " + input.string());
  }
  std::vector<fs::path> written;
  for (const auto& in : inputs) {
    auto restored = restore_image(image_io::read_image(in), restorer, opts);
    auto out = output_dir / in.filename().replace_extension(".png");
    image_io::write_png(out, restored);
    written.push_back(out);
  }
  return written;
}

}  // namespace semidiff::tiler
