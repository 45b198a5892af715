#pragma once

// Shared between the forward renderer and its analytic backward pass so both
// evaluate the exact same per-pixel kernels.

#include <array>

#include "uwsynth/formation.hpp"

namespace uwsynth::detail {

/// Kernel restricted to the in-bounds window around one output pixel.
struct LocalKernel {
  int y0, y1, x0, x1;  // inclusive tap window in image coordinates
  int cy, cx;          // center pixel
  double sigma;        // sigma_k * z
  bool identity;
  std::array<double, kPsfSize * kPsfSize> w;  // row-major over the window
  double mean_r2;                             // sum_i w_i r_i^2

  int window_width() const { return x1 - x0 + 1; }
};

LocalKernel local_kernel(int y, int x, int height, int width, double z, double sigma_k);

/// Blur value of one channel and, optionally, its derivative with respect to
/// sigma_k (through the normalization as well as the exponent).
struct BlurSample {
  double value;
  double d_sigma_k;
};

BlurSample blur_channel(const ImageRGB& J, const LocalKernel& k, int c, double z, bool with_derivative);

/// Blur without argument validation beyond depth positivity.
ImageRGB scatter_unchecked(const ImageRGB& J, const DepthMap& depth, double sigma_k);

/// Unclamped blur + attenuation + veiling light (+ marine snow when M is
/// given). Parameters are not validated, so finite differences may step
/// slightly outside the physical domain.
ImageRGB compose_unchecked(const ImageRGB& J, const DepthMap& depth, const WaterParams& p, const NoiseMap* M);

}  // namespace uwsynth::detail
