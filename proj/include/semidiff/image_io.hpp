#pragma once

#include <filesystem>

#include <torch/torch.h>

namespace semidiff::image_io {

/// Reads PNG/JPEG (8- or 16-bit, gray or color) as a float [3, H, W] tensor in [-1, 1]
/// (8-bit: v / 127.5 - 1). Throws IngestionError if the file is missing or undecodable.
torch::Tensor read_image(const std::filesystem::path& path);

/// Writes [3, H, W] in [-1, 1] as an 8-bit RGB PNG (values clamped). Creates parent dirs.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// 16-bit RGB PNG. A tensor passed through quantize16() survives write/read bit-exactly.
void write_png16(const std::filesystem::path& path, const torch::Tensor& image);

/// Snaps values to the 16-bit storage grid used by write_png16.
torch::Tensor quantize16(const torch::Tensor& image);

}  // namespace semidiff::image_io
