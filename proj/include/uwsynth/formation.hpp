#pragma once

#include <array>

#include "uwsynth/image.hpp"

namespace uwsynth {

/// Physical water parameters of the formation model.
struct WaterParams {
  std::array<double, 3> beta{};  // attenuation per channel, 1/m
  std::array<double, 3> binf{};  // veiling (ambient) light per channel, [0,1]
  double sigma_k = 0.0;          // PSF spread growth, px/m

  bool valid() const;
  /// Throws DomainError naming the first violated bound.
  void validate() const;
  /// Clamps every field into its valid domain.
  void project();

  friend bool operator==(const WaterParams&, const WaterParams&) = default;
};

inline constexpr int kPsfSize = 11;
inline constexpr int kPsfRadius = kPsfSize / 2;
/// Below this spread (px) the Gaussian is treated as a delta.
inline constexpr double kSigmaMin = 1e-3;

struct PsfKernel {
  static constexpr int kSize = kPsfSize;
  std::array<double, kPsfSize * kPsfSize> weights{};

  double at(int dy, int dx) const { return weights[(dy + kPsfRadius) * kSize + dx + kPsfRadius]; }
  bool is_identity() const;
};

/// Normalized 11x11 Gaussian with spread sigma_k * z.
PsfKernel psf_kernel(double z, double sigma_k);

/// Spatially varying blur: each output pixel uses the kernel for its own depth.
/// Taps falling outside the image are dropped and the remaining weights
/// renormalized to sum to one.
ImageRGB forward_scatter(const ImageRGB& J, const DepthMap& depth, double sigma_k);

/// Blurred direct signal attenuated by exp(-beta z) plus veiling light.
ImageRGB render_clean(const ImageRGB& J, const DepthMap& depth, const WaterParams& p);

/// Marine-snow term M (1 - Binf) (1 - exp(-beta z)).
ImageRGB noise_term(const NoiseMap& M, const DepthMap& depth, const WaterParams& p);

/// render_clean + noise_term, clamped into [0,1].
ImageRGB render_full(const ImageRGB& J, const DepthMap& depth, const WaterParams& p, const NoiseMap& M);

/// Number of values render_full would clamp; zero on valid inputs.
std::size_t render_full_clamp_count(const ImageRGB& J, const DepthMap& depth, const WaterParams& p,
                                    const NoiseMap& M);

}  // namespace uwsynth
