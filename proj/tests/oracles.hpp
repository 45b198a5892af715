#pragma once

// Independent scalar re-implementations used as test oracles. Nothing here
// calls into the library's numerical code paths.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "uwsynth/formation.hpp"
#include "uwsynth/image.hpp"

namespace oracle {

/// Brute-force center weight of the normalized 11x11 Gaussian.
inline double kernel_center_weight(double sigma) {
  double total = 0.0;
  for (int dy = -5; dy <= 5; ++dy)
    for (int dx = -5; dx <= 5; ++dx) total += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  return 1.0 / total;
}

/// Per-pixel evaluation of blur + attenuation + veiling light + marine snow.
inline double render_pixel(const uwsynth::ImageRGB& J, const uwsynth::DepthMap& depth,
                           const uwsynth::WaterParams& p, const uwsynth::NoiseMap* M, int y, int x, int c) {
  const double z = depth.at(y, x);
  const double s = p.sigma_k * z;
  double blurred;
  if (s < 1e-3) {
    blurred = J.at(y, x, c);
  } else {
    double num = 0.0, den = 0.0;
    for (int dy = -5; dy <= 5; ++dy)
      for (int dx = -5; dx <= 5; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || xx < 0 || yy >= J.height() || xx >= J.width()) continue;
        const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
        num += w * J.at(yy, xx, c);
        den += w;
      }
    blurred = num / den;
  }
  const double direct = std::exp(-p.beta[c] * z);
  const double m = M ? M->at(y, x) : 0.0;
  return blurred * direct + p.binf[c] * (1.0 - direct) + m * (1.0 - p.binf[c]) * (1.0 - direct);
}

inline uwsynth::ImageRGB render(const uwsynth::ImageRGB& J, const uwsynth::DepthMap& depth,
                                const uwsynth::WaterParams& p, const uwsynth::NoiseMap* M) {
  uwsynth::ImageRGB out(J.height(), J.width());
  for (int y = 0; y < J.height(); ++y)
    for (int x = 0; x < J.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = render_pixel(J, depth, p, M, y, x, c);
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

/// Uniform-random scene with unit-range colors, depth in [0.5, 5] and a
/// marine-snow map in [0, 1].
struct RandomScene {
  uwsynth::ImageRGB J;
  uwsynth::DepthMap depth;
  uwsynth::NoiseMap M;
};

inline RandomScene random_scene(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomScene s{uwsynth::ImageRGB(h, w), uwsynth::DepthMap(h, w), uwsynth::NoiseMap(h, w)};
  for (double& v : s.J.data()) v = u(rng);
  for (double& v : s.depth.data()) v = 0.5 + 4.5 * u(rng);
  for (double& v : s.M.data()) v = u(rng);
  return s;
}

inline uwsynth::WaterParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  uwsynth::WaterParams p;
  for (int c = 0; c < 3; ++c) {
    p.beta[c] = 0.05 + 0.8 * u(rng);
    p.binf[c] = 0.05 + 0.9 * u(rng);
  }
  p.sigma_k = 0.1 + 0.5 * u(rng);
  return p;
}

}  // namespace oracle
