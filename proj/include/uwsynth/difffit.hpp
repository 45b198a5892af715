#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "uwsynth/formation.hpp"
#include "uwsynth/imgcore.hpp"

namespace uwsynth {

/// Gradients of a scalar loss with respect to everything render_full consumes
/// that is trainable.
struct ParamGrads {
  std::array<double, 3> d_beta{};
  std::array<double, 3> d_binf{};
  double d_sigma_k = 0.0;
  NoiseMap d_noise;

  bool all_finite() const;
};

/// Exact backward pass of render_full given dL/dI^noise per pixel and channel.
/// Accumulation runs row by row and then over rows in a fixed order, so the
/// result does not depend on the thread count.
ParamGrads render_backward(const ImageRGB& J, const DepthMap& depth, const WaterParams& p,
                           const NoiseMap& M, const ImageRGB& upstream);

/// A smooth scalar functional of a rendered image together with its gradient.
struct ImageLoss {
  std::function<long double(const ImageRGB&)> value;
  std::function<ImageRGB(const ImageRGB&)> gradient;
};

/// Sum of squared differences to a target. The value stays in extended
/// precision so central differences are not swamped by its final rounding.
ImageLoss squared_error_loss(const ImageRGB& target);

/// Worst relative error per parameter group between render_backward and
/// central finite differences. Denominator: max(|analytic|, |numeric|, 1e-12).
struct GradCheckReport {
  double beta = 0.0;
  double binf = 0.0;
  double sigma_k = 0.0;
  double noise = 0.0;

  double worst() const;
};

GradCheckReport finite_diff_check(const RgbdScene& scene, const WaterParams& p, const NoiseMap& M,
                                  const ImageLoss& loss, double eps = 1e-5);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam moments for a flat parameter vector.
struct AdamState {
  AdamState() = default;
  AdamState(std::size_t n, AdamConfig config) : cfg(config), m(n, 0.0), v(n, 0.0) {}

  AdamConfig cfg;
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One Adam update in place. Throws TrainingError on a non-finite gradient.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

/// Flat layout used by the optimizer: beta[3], binf[3], sigma_k.
inline constexpr std::size_t kWaterParamCount = 7;
std::array<double, kWaterParamCount> flatten(const WaterParams& p);
WaterParams unflatten(std::span<const double> flat);
std::array<double, kWaterParamCount> flatten(const ParamGrads& g);

/// Adam on the physical parameters followed by projection into their domain.
void adam_step(AdamState& state, WaterParams& p, const ParamGrads& grads);

struct FitOptions {
  int iters = 5000;
  AdamConfig adam{};
};

struct FitResult {
  WaterParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // loss before each update
};

/// Least-squares fit of the clean model (M frozen at 0) to targets rendered
/// from the same scenes. Loss is the mean squared error over every pixel and
/// channel of every scene.
FitResult fit_supervised(std::span<const RgbdScene> scenes, std::span<const ImageRGB> targets,
                         const WaterParams& init, const FitOptions& options = {});

}  // namespace uwsynth
