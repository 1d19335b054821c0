#pragma once

// Sparse-input construction: random subsampling of a dense depth image
// and the scanline pattern of a low-resolution line scanner, plus the
// channel stacking that turns a frame into network input.

#include "s2d/image.hpp"
#include "s2d/rng.hpp"
#include "s2d/tensor.hpp"

namespace s2d {

// Keeps each valid pixel independently with probability m/n where n is
// the valid-pixel count, so the kept count has expectation m. Values are
// copied verbatim (no rescaling).
SparseDepth bernoulli_sample(const DepthMap& gt, i64 m, Rng& rng);

// Keeps valid pixels on rows congruent to offset modulo row_stride.
SparseDepth scanline_sample(const DepthMap& gt, i64 row_stride, i64 offset);

// Stacks the modalities for the chosen problem into a (1,C,H,W) tensor:
// RGB = 3 color channels, sd = the sparse depth alone, RGBd = color plus
// sparse depth as the last channel. Depth stays in raw meters.
template <typename T>
Tensor<T> make_input(const RgbImage& rgb, const SparseDepth& sparse, Problem problem);

}  // namespace s2d
