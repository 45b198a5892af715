#include "uwsynth/formation.hpp"

#include <cmath>
#include <string>

#include "psf_detail.hpp"
#include "uwsynth/imgcore.hpp"

namespace uwsynth {
namespace {

constexpr int kMaxR2 = 2 * kPsfRadius * kPsfRadius;

constexpr std::array<bool, kMaxR2 + 1> occurring_r2() {
  std::array<bool, kMaxR2 + 1> seen{};
  for (int dy = 0; dy <= kPsfRadius; ++dy)
    for (int dx = 0; dx <= kPsfRadius; ++dx) seen[dy * dy + dx * dx] = true;
  return seen;
}

// exp(-r2 / (2 s^2)) for every integer r2 that occurs inside the kernel.
// One evaluation per distinct r2 keeps equal-radius taps bit-identical.
std::array<double, kMaxR2 + 1> gaussian_table(double sigma) {
  static constexpr auto kOccurs = occurring_r2();
  std::array<double, kMaxR2 + 1> table{};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r2 = 0; r2 <= kMaxR2; ++r2)
    if (kOccurs[r2]) table[r2] = std::exp(-r2 * inv);
  return table;
}

void require_positive_depth(double z) {
  if (!(z > 0.0) || !std::isfinite(z)) throw DomainError("depth must be > 0, got " + std::to_string(z));
}

}  // namespace

bool WaterParams::valid() const {
  for (int c = 0; c < 3; ++c) {
    if (!(beta[c] >= 0.0) || !std::isfinite(beta[c])) return false;
    if (!(binf[c] >= 0.0 && binf[c] <= 1.0)) return false;
  }
  return sigma_k >= 0.0 && std::isfinite(sigma_k);
}

void WaterParams::validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!(beta[c] >= 0.0) || !std::isfinite(beta[c])) throw DomainError("beta must be >= 0");
    if (!(binf[c] >= 0.0 && binf[c] <= 1.0)) throw DomainError("binf must lie in [0,1]");
  }
  if (!(sigma_k >= 0.0) || !std::isfinite(sigma_k)) throw DomainError("sigma_k must be >= 0");
}

void WaterParams::project() {
  for (int c = 0; c < 3; ++c) {
    beta[c] = std::max(beta[c], 0.0);
    binf[c] = std::clamp(binf[c], 0.0, 1.0);
  }
  sigma_k = std::max(sigma_k, 0.0);
}

bool PsfKernel::is_identity() const {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const bool center = i == weights.size() / 2;
    if (weights[i] != (center ? 1.0 : 0.0)) return false;
  }
  return true;
}

PsfKernel psf_kernel(double z, double sigma_k) {
  require_positive_depth(z);
  if (!(sigma_k >= 0.0)) throw DomainError("sigma_k must be >= 0");
  PsfKernel k;
  const double sigma = sigma_k * z;
  if (sigma < kSigmaMin) {
    k.weights[k.weights.size() / 2] = 1.0;
    return k;
  }
  const auto table = gaussian_table(sigma);
  double total = 0.0;
  for (int dy = -kPsfRadius; dy <= kPsfRadius; ++dy)
    for (int dx = -kPsfRadius; dx <= kPsfRadius; ++dx) total += table[dy * dy + dx * dx];
  for (int dy = -kPsfRadius; dy <= kPsfRadius; ++dy)
    for (int dx = -kPsfRadius; dx <= kPsfRadius; ++dx)
      k.weights[(dy + kPsfRadius) * kPsfSize + dx + kPsfRadius] = table[dy * dy + dx * dx] / total;
  return k;
}

namespace detail {

LocalKernel local_kernel(int y, int x, int height, int width, double z, double sigma_k) {
  LocalKernel k;
  k.cy = y;
  k.cx = x;
  k.sigma = sigma_k * z;
  k.identity = k.sigma < kSigmaMin;
  k.mean_r2 = 0.0;
  if (k.identity) {
    k.y0 = k.y1 = y;
    k.x0 = k.x1 = x;
    k.w[0] = 1.0;
    return k;
  }
  k.y0 = std::max(0, y - kPsfRadius);
  k.y1 = std::min(height - 1, y + kPsfRadius);
  k.x0 = std::max(0, x - kPsfRadius);
  k.x1 = std::min(width - 1, x + kPsfRadius);
  const auto table = gaussian_table(k.sigma);
  const int ww = k.window_width();
  double total = 0.0;
  for (int yy = k.y0; yy <= k.y1; ++yy)
    for (int xx = k.x0; xx <= k.x1; ++xx) total += table[(yy - y) * (yy - y) + (xx - x) * (xx - x)];
  for (int yy = k.y0; yy <= k.y1; ++yy)
    for (int xx = k.x0; xx <= k.x1; ++xx) {
      const int r2 = (yy - y) * (yy - y) + (xx - x) * (xx - x);
      const double w = table[r2] / total;
      k.w[(yy - k.y0) * ww + (xx - k.x0)] = w;
      k.mean_r2 += w * r2;
    }
  return k;
}

BlurSample blur_channel(const ImageRGB& J, const LocalKernel& k, int c, double z, bool with_derivative) {
  if (k.identity) return {J.at(k.cy, k.cx, c), 0.0};
  const int ww = k.window_width();
  double value = 0.0;
  double centered = 0.0;  // sum_i w_i J_i (r_i^2 - mean r^2)
  for (int yy = k.y0; yy <= k.y1; ++yy)
    for (int xx = k.x0; xx <= k.x1; ++xx) {
      const double w = k.w[(yy - k.y0) * ww + (xx - k.x0)];
      const double j = J.at(yy, xx, c);
      value += w * j;
      if (with_derivative) {
        const int r2 = (yy - k.cy) * (yy - k.cy) + (xx - k.cx) * (xx - k.cx);
        centered += w * j * (r2 - k.mean_r2);
      }
    }
  // d sigma / d sigma_k = z; d w_i / d sigma = w_i (r_i^2 - mean r^2) / sigma^3
  const double d = with_derivative ? centered * z / (k.sigma * k.sigma * k.sigma) : 0.0;
  return {value, d};
}

}  // namespace detail

ImageRGB forward_scatter(const ImageRGB& J, const DepthMap& depth, double sigma_k) {
  require_same_shape(J, depth, "forward_scatter");
  if (!(sigma_k >= 0.0)) throw DomainError("sigma_k must be >= 0");
  return detail::scatter_unchecked(J, depth, sigma_k);
}

namespace detail {

ImageRGB scatter_unchecked(const ImageRGB& J, const DepthMap& depth, double sigma_k) {
  const int H = J.height();
  const int W = J.width();
  for (double z : depth.data()) require_positive_depth(z);
  ImageRGB out(H, W);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double z = depth.at(y, x);
      const auto k = detail::local_kernel(y, x, H, W, z, sigma_k);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = detail::blur_channel(J, k, c, z, false).value;
    }
  }
  return out;
}

ImageRGB compose_unchecked(const ImageRGB& J, const DepthMap& depth, const WaterParams& p, const NoiseMap* M) {
  require_same_shape(J, depth, "render");
  if (M) require_same_shape(J, *M, "render (noise map)");
  ImageRGB img = scatter_unchecked(J, depth, std::max(p.sigma_k, 0.0));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double z = depth.at(y, x);
      for (int c = 0; c < 3; ++c) {
        const double t = std::exp(-p.beta[c] * z);
        double v = img.at(y, x, c) * t + p.binf[c] * (1.0 - t);
        if (M) v += M->at(y, x) * (1.0 - p.binf[c]) * (1.0 - t);
        img.at(y, x, c) = v;
      }
    }
  return img;
}

}  // namespace detail

namespace {

ImageRGB compose(const ImageRGB& J, const DepthMap& depth, const WaterParams& p, const NoiseMap* M) {
  p.validate();
  return detail::compose_unchecked(J, depth, p, M);
}

}  // namespace

ImageRGB render_clean(const ImageRGB& J, const DepthMap& depth, const WaterParams& p) {
  ImageRGB img = compose(J, depth, p, nullptr);
  clamp_unit(img.data());
  return img;
}

ImageRGB noise_term(const NoiseMap& M, const DepthMap& depth, const WaterParams& p) {
  require_same_shape(M, depth, "noise_term");
  p.validate();
  ImageRGB out(M.height(), M.width());
  for (int y = 0; y < M.height(); ++y)
    for (int x = 0; x < M.width(); ++x) {
      const double z = depth.at(y, x);
      for (int c = 0; c < 3; ++c) {
        const double t = std::exp(-p.beta[c] * z);
        out.at(y, x, c) = M.at(y, x) * (1.0 - p.binf[c]) * (1.0 - t);
      }
    }
  return out;
}

ImageRGB render_full(const ImageRGB& J, const DepthMap& depth, const WaterParams& p, const NoiseMap& M) {
  ImageRGB img = compose(J, depth, p, &M);
  clamp_unit(img.data());
  return img;
}

std::size_t render_full_clamp_count(const ImageRGB& J, const DepthMap& depth, const WaterParams& p,
                                    const NoiseMap& M) {
  ImageRGB img = compose(J, depth, p, &M);
  return clamp_unit(img.data());
}

}  // namespace uwsynth
