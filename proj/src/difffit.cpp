#include "uwsynth/difffit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "psf_detail.hpp"

namespace uwsynth {
namespace {

// Per-row partial sums: beta[3], binf[3], sigma_k, loss.
using RowSums = std::array<double, 8>;

/// One fused forward/backward sweep. `pixel_fn(y, x, c, I)` returns the pair
/// (dL/dI, loss contribution) for the rendered value I.
template <class PixelFn>
double accumulate_grads(const ImageRGB& J, const DepthMap& depth, const WaterParams& p, const NoiseMap* M,
                        PixelFn&& pixel_fn, ParamGrads& out) {
  const int H = J.height();
  const int W = J.width();
  std::vector<RowSums> rows(H, RowSums{});
  if (M) out.d_noise = NoiseMap(H, W);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    RowSums& acc = rows[y];
    for (int x = 0; x < W; ++x) {
      const double z = depth.at(y, x);
      const auto k = detail::local_kernel(y, x, H, W, z, p.sigma_k);
      const double m = M ? M->at(y, x) : 0.0;
      double d_noise = 0.0;
      for (int c = 0; c < 3; ++c) {
        const auto blur = detail::blur_channel(J, k, c, z, true);
        const double t = std::exp(-p.beta[c] * z);
        const double B = p.binf[c];
        double I = blur.value * t + B * (1.0 - t);
        if (M) I += m * (1.0 - B) * (1.0 - t);
        const auto [g, l] = pixel_fn(y, x, c, std::clamp(I, 0.0, 1.0));
        acc[c] += g * z * t * (B + m * (1.0 - B) - blur.value);
        acc[3 + c] += g * (1.0 - t) * (1.0 - m);
        acc[6] += g * t * blur.d_sigma_k;
        acc[7] += l;
        d_noise += g * (1.0 - B) * (1.0 - t);
      }
      if (M) out.d_noise.at(y, x) = d_noise;
    }
  }
  RowSums total{};
  for (const auto& r : rows)
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += r[i];
  for (int c = 0; c < 3; ++c) {
    out.d_beta[c] = total[c];
    out.d_binf[c] = total[3 + c];
  }
  out.d_sigma_k = total[6];
  return total[7];
}

double rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

bool ParamGrads::all_finite() const {
  for (int c = 0; c < 3; ++c)
    if (!std::isfinite(d_beta[c]) || !std::isfinite(d_binf[c])) return false;
  if (!std::isfinite(d_sigma_k)) return false;
  if (!d_noise.empty())
    for (double v : d_noise.data())
      if (!std::isfinite(v)) return false;
  return true;
}

ParamGrads render_backward(const ImageRGB& J, const DepthMap& depth, const WaterParams& p,
                           const NoiseMap& M, const ImageRGB& upstream) {
  require_same_shape(J, depth, "render_backward");
  require_same_shape(J, M, "render_backward (noise map)");
  require_same_shape(J, upstream, "render_backward (upstream)");
  p.validate();
  ParamGrads grads;
  accumulate_grads(
      J, depth, p, &M,
      [&](int y, int x, int c, double) { return std::pair{upstream.at(y, x, c), 0.0}; }, grads);
  return grads;
}

ImageLoss squared_error_loss(const ImageRGB& target) {
  ImageLoss loss;
  loss.value = [target](const ImageRGB& img) -> long double {
    require_same_shape(img, target, "squared_error_loss");
    long double sum = 0.0L;
    auto a = img.data();
    auto b = target.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const long double d = static_cast<long double>(a[i]) - b[i];
      sum += d * d;
    }
    return sum;
  };
  loss.gradient = [target](const ImageRGB& img) {
    require_same_shape(img, target, "squared_error_loss");
    ImageRGB g(img.height(), img.width());
    auto a = img.data();
    auto b = target.data();
    auto out = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = 2.0 * (a[i] - b[i]);
    return g;
  };
  return loss;
}

double GradCheckReport::worst() const { return std::max({beta, binf, sigma_k, noise}); }

GradCheckReport finite_diff_check(const RgbdScene& scene, const WaterParams& p, const NoiseMap& M,
                                  const ImageLoss& loss, double eps) {
  if (!(eps > 0.0)) throw DomainError("finite difference step must be > 0");
  const auto& J = scene.rgb;
  const auto& z = scene.depth;
  const ImageRGB rendered = detail::compose_unchecked(J, z, p, &M);
  const ParamGrads analytic = render_backward(J, z, p, M, loss.gradient(rendered));

  auto central = [&](auto&& perturbed_loss) {
    return static_cast<double>((perturbed_loss(+eps) - perturbed_loss(-eps)) / (2.0L * eps));
  };

  GradCheckReport report;
  for (int c = 0; c < 3; ++c) {
    const double nb = central([&](double h) {
      WaterParams q = p;
      q.beta[c] += h;
      return loss.value(detail::compose_unchecked(J, z, q, &M));
    });
    report.beta = std::max(report.beta, rel_error(analytic.d_beta[c], nb));
    const double nB = central([&](double h) {
      WaterParams q = p;
      q.binf[c] += h;
      return loss.value(detail::compose_unchecked(J, z, q, &M));
    });
    report.binf = std::max(report.binf, rel_error(analytic.d_binf[c], nB));
  }
  const double ns = central([&](double h) {
    WaterParams q = p;
    q.sigma_k += h;
    return loss.value(detail::compose_unchecked(J, z, q, &M));
  });
  report.sigma_k = rel_error(analytic.d_sigma_k, ns);

  NoiseMap Mp = M;
  for (std::size_t i = 0; i < M.data().size(); ++i) {
    const double nm = central([&](double h) {
      Mp.data()[i] = M.data()[i] + h;
      const long double v = loss.value(detail::compose_unchecked(J, z, p, &Mp));
      Mp.data()[i] = M.data()[i];
      return v;
    });
    report.noise = std::max(report.noise, rel_error(analytic.d_noise.data()[i], nm));
  }
  return report;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter/gradient/state sizes disagree");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient at parameter index " + std::to_string(i) + " (step " +
                          std::to_string(state.step + 1) + ")");
    }
  }
  const auto& cfg = state.cfg;
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

std::array<double, kWaterParamCount> flatten(const WaterParams& p) {
  return {p.beta[0], p.beta[1], p.beta[2], p.binf[0], p.binf[1], p.binf[2], p.sigma_k};
}

WaterParams unflatten(std::span<const double> flat) {
  if (flat.size() != kWaterParamCount) throw ShapeError("water parameter vector must have 7 entries");
  WaterParams p;
  for (int c = 0; c < 3; ++c) {
    p.beta[c] = flat[c];
    p.binf[c] = flat[3 + c];
  }
  p.sigma_k = flat[6];
  return p;
}

std::array<double, kWaterParamCount> flatten(const ParamGrads& g) {
  return {g.d_beta[0], g.d_beta[1], g.d_beta[2], g.d_binf[0], g.d_binf[1], g.d_binf[2], g.d_sigma_k};
}

void adam_step(AdamState& state, WaterParams& p, const ParamGrads& grads) {
  auto flat = flatten(p);
  const auto g = flatten(grads);
  adam_step(state, flat, g);
  p = unflatten(flat);
  p.project();
}

FitResult fit_supervised(std::span<const RgbdScene> scenes, std::span<const ImageRGB> targets,
                         const WaterParams& init, const FitOptions& options) {
  if (scenes.empty() || scenes.size() != targets.size()) {
    throw DomainError("fit_supervised needs one target per scene and at least one scene");
  }
  std::size_t n_values = 0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    require_same_shape(scenes[s].rgb, scenes[s].depth, "fit_supervised");
    require_same_shape(scenes[s].rgb, targets[s], "fit_supervised (target)");
    n_values += scenes[s].rgb.data().size();
  }
  init.validate();
  const double scale = 1.0 / static_cast<double>(n_values);

  FitResult result;
  result.params = init;
  AdamState adam(kWaterParamCount, options.adam);

  // Loss and gradient at the current parameters, summed over scenes in order.
  auto evaluate = [&](const WaterParams& p, ParamGrads& total) {
    double loss = 0.0;
    total = ParamGrads{};
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      const ImageRGB& T = targets[s];
      ParamGrads g;
      loss += accumulate_grads(
          scenes[s].rgb, scenes[s].depth, p, nullptr,
          [&](int y, int x, int c, double I) {
            const double r = I - T.at(y, x, c);
            return std::pair{2.0 * r * scale, r * r * scale};
          },
          g);
      for (int c = 0; c < 3; ++c) {
        total.d_beta[c] += g.d_beta[c];
        total.d_binf[c] += g.d_binf[c];
      }
      total.d_sigma_k += g.d_sigma_k;
    }
    return loss;
  };

  ParamGrads grads;
  for (int it = 0; it < options.iters; ++it) {
    const double loss = evaluate(result.params, grads);
    if (!std::isfinite(loss)) {
      throw TrainingError("fit_supervised diverged at iteration " + std::to_string(it));
    }
    if (it == 0) result.initial_loss = loss;
    result.loss_history.push_back(loss);
    adam_step(adam, result.params, grads);
  }
  result.final_loss = evaluate(result.params, grads);
  if (options.iters == 0) result.initial_loss = result.final_loss;
  if (!std::isfinite(result.final_loss)) throw TrainingError("fit_supervised produced a non-finite loss");
  return result;
}

}  // namespace uwsynth
