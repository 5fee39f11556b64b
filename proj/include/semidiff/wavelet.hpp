#pragma once

#include <torch/torch.h>

namespace semidiff::wavelet {

// Single-level orthonormal 2-D Haar transform.
//
// For each 2x2 block [[a, b], [c, d]] of a source channel:
//   LL = (a + b + c + d) / 2      LH = (a + b - c - d) / 2
//   HL = (a - b + c - d) / 2      HH = (a - b - c + d) / 2
//
// Output channels are grouped per source channel, source channel outermost:
//   [c0.LL, c0.LH, c0.HL, c0.HH, c1.LL, ...]
// so a 3-channel image becomes a 12-channel half-resolution tensor.
//
// Both functions accept [C, H, W] or [N, C, H, W] and are differentiable.

/// Forward transform. Throws DimensionError on odd H or W (or bad rank) and
/// ValidationError on non-finite input.
torch::Tensor dwt(const torch::Tensor& image);

/// Exact inverse of dwt(). Throws DimensionError unless the channel count is a multiple of 4.
torch::Tensor idwt(const torch::Tensor& subbands);

}  // namespace semidiff::wavelet
