#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "uwsynth/difffit.hpp"

using namespace uwsynth;

namespace {

WaterParams uniform_params(double beta, double binf, double sigma_k) {
  WaterParams p;
  p.beta = {beta, beta, beta};
  p.binf = {binf, binf, binf};
  p.sigma_k = sigma_k;
  return p;
}

RgbdScene as_scene(const oracle::RandomScene& s) { return {s.J, s.depth}; }

ImageRGB random_target(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageRGB t(h, w);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("backward: veiling-light gradient of a constant scene") {
  const ImageRGB J(6, 7, 0.5);
  const DepthMap z(6, 7, 2.0);
  const auto g = render_backward(J, z, uniform_params(0.2, 0.3, 0.4), NoiseMap(6, 7, 0.0), ImageRGB(6, 7, 1.0));
  // Per pixel (1 - e^{-0.4}) = 0.3296799539643607, summed over 42 pixels.
  for (int c = 0; c < 3; ++c) CHECK(g.d_binf[c] == doctest::Approx(42 * 0.3296799539643607).epsilon(1e-13));
  // Blur of a constant does not depend on the spread.
  CHECK(std::abs(g.d_sigma_k) < 1e-12);
}

TEST_CASE("backward: zero spread pins the kernel and its gradient") {
  std::mt19937_64 rng(1);
  auto s = oracle::random_scene(8, 8, rng);
  const auto g = render_backward(s.J, s.depth, uniform_params(0.3, 0.4, 0.0), s.M, random_target(8, 8, rng));
  CHECK(g.d_sigma_k == 0.0);
  CHECK(g.all_finite());
}

TEST_CASE("backward: attenuation gradient matches the closed form") {
  // Constant scene, M = 0: dI/dbeta = z e^{-beta z} (Binf - J), per pixel.
  std::mt19937_64 rng(2);
  auto s = oracle::random_scene(10, 9, rng);
  const ImageRGB J(10, 9, 0.6);
  const auto p = oracle::random_params(rng);
  const ImageRGB up = random_target(10, 9, rng);
  const auto g = render_backward(J, s.depth, p, NoiseMap(10, 9, 0.0), up);
  for (int c = 0; c < 3; ++c) {
    double expected = 0.0;
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 9; ++x) {
        const double z = s.depth.at(y, x);
        expected += up.at(y, x, c) * z * std::exp(-p.beta[c] * z) * (p.binf[c] - 0.6);
      }
    CHECK(std::abs(g.d_beta[c] - expected) <= 1e-8 * std::abs(expected));
  }
}

TEST_CASE("finite differences agree with the analytic backward pass") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    auto s = oracle::random_scene(16, 16, rng);
    const auto p = oracle::random_params(rng);
    const auto report = finite_diff_check(as_scene(s), p, s.M, squared_error_loss(random_target(16, 16, rng)));
    CHECK(report.beta < 1e-6);
    CHECK(report.binf < 1e-6);
    CHECK(report.noise < 1e-6);
    CHECK(report.sigma_k < 1e-4);
  }
}

TEST_CASE("finite differences on a textured synthetic scene") {
  const auto scene = make_synthetic_scene(16, 16, 5);
  std::mt19937_64 rng(8);
  const auto p = oracle::random_params(rng);
  NoiseMap M(16, 16);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : M.data()) v = u(rng);
  const auto report = finite_diff_check(scene, p, M, squared_error_loss(random_target(16, 16, rng)));
  CHECK(report.worst() < 1e-4);
}

TEST_CASE("noise gradient vanishes when the veiling light is saturated") {
  std::mt19937_64 rng(4);
  auto s = oracle::random_scene(8, 8, rng);
  const auto p = uniform_params(0.3, 1.0, 0.2);
  const auto report = finite_diff_check(as_scene(s), p, s.M, squared_error_loss(random_target(8, 8, rng)));
  CHECK(report.noise == 0.0);
}

TEST_CASE("backward rejects mismatched upstream") {
  std::mt19937_64 rng(5);
  auto s = oracle::random_scene(8, 8, rng);
  CHECK_THROWS_AS(render_backward(s.J, s.depth, uniform_params(0.1, 0.1, 0.1), s.M, ImageRGB(8, 7)), ShapeError);
}

TEST_CASE("adam: zero gradient is the identity") {
  AdamState st(3, {});
  std::vector<double> params{0.3, -1.0, 2.0};
  const auto before = params;
  const std::vector<double> zero(3, 0.0);
  for (int i = 0; i < 10; ++i) adam_step(st, params, zero);
  CHECK(params == before);
  CHECK(st.step == 10);
}

TEST_CASE("adam: first step moves by roughly the learning rate") {
  AdamState st(1, {1e-3, 0.9, 0.999, 1e-8});
  std::vector<double> params{0.5};
  const std::vector<double> grad{1.0};
  adam_step(st, params, grad);
  // m_hat = 1, v_hat = 1 after bias correction.
  const double expected = 0.5 - 1e-3 * 1.0 / (1.0 + 1e-8);
  CHECK(params[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(st.v[0] >= 0.0);
}

TEST_CASE("adam: parameters are projected into their domain") {
  AdamState st(kWaterParamCount, {0.02});
  WaterParams p = uniform_params(0.01, 0.995, 0.005);
  ParamGrads g;
  g.d_beta = {1.0, 1.0, 1.0};     // pushes beta below zero
  g.d_binf = {-1.0, -1.0, -1.0};  // pushes binf above one
  g.d_sigma_k = 1.0;
  adam_step(st, p, g);
  for (int c = 0; c < 3; ++c) {
    CHECK(p.beta[c] == 0.0);
    CHECK(p.binf[c] == 1.0);
  }
  CHECK(p.sigma_k == 0.0);
}

TEST_CASE("adam: non-finite gradients abort") {
  AdamState st(2, {});
  std::vector<double> params{0.0, 0.0};
  const std::vector<double> bad{0.0, std::nan("")};
  CHECK_THROWS_AS(adam_step(st, params, bad), TrainingError);
}

TEST_CASE("fit_supervised: starting at the truth stays there") {
  const WaterParams truth{{0.4, 0.3, 0.2}, {0.25, 0.35, 0.45}, 0.3};
  std::vector<RgbdScene> scenes{make_synthetic_scene(16, 16, 1), make_synthetic_scene(16, 16, 2)};
  std::vector<ImageRGB> targets;
  for (const auto& s : scenes) targets.push_back(render_clean(s.rgb, s.depth, truth));
  const auto fit = fit_supervised(scenes, targets, truth, {.iters = 20});
  CHECK(fit.loss_history.front() < 1e-12);
  const auto a = flatten(fit.params);
  const auto b = flatten(truth);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
}

TEST_CASE("fit_supervised: constant scenes still pin attenuation and veiling light") {
  const WaterParams truth{{0.4, 0.3, 0.2}, {0.25, 0.35, 0.45}, 0.3};
  RgbdScene scene{ImageRGB(12, 12, 0.7), make_synthetic_scene(12, 12, 4).depth};
  std::vector<RgbdScene> scenes{scene};
  std::vector<ImageRGB> targets{render_clean(scene.rgb, scene.depth, truth)};
  const WaterParams init{{0.1, 0.1, 0.1}, {0.5, 0.5, 0.5}, 0.05};
  const auto fit = fit_supervised(scenes, targets, init, {.iters = 3000, .adam = {.lr = 1e-2}});
  for (int c = 0; c < 3; ++c) {
    CHECK(fit.params.beta[c] == doctest::Approx(truth.beta[c]).epsilon(0.02));
    CHECK(fit.params.binf[c] == doctest::Approx(truth.binf[c]).epsilon(0.02));
  }
  CHECK(fit.final_loss < fit.initial_loss * 1e-3);
}

TEST_CASE("fit_supervised: loss does not drift upward across 100-iteration windows") {
  const WaterParams truth{{0.4, 0.3, 0.2}, {0.25, 0.35, 0.45}, 0.3};
  std::vector<RgbdScene> scenes{make_synthetic_scene(16, 16, 9)};
  std::vector<ImageRGB> targets{render_clean(scenes[0].rgb, scenes[0].depth, truth)};
  const WaterParams init{{0.1, 0.1, 0.1}, {0.5, 0.5, 0.5}, 0.05};
  const auto fit = fit_supervised(scenes, targets, init, {.iters = 1000});
  const auto& h = fit.loss_history;
  for (std::size_t i = 0; i + 100 < h.size(); ++i) CHECK(h[i + 100] <= h[i]);
  CHECK(fit.final_loss < fit.initial_loss);
}

TEST_CASE("fit_supervised: argument validation") {
  std::vector<RgbdScene> scenes{make_synthetic_scene(8, 8, 1)};
  std::vector<ImageRGB> targets;
  CHECK_THROWS_AS(fit_supervised(scenes, targets, uniform_params(0.1, 0.1, 0.1)), DomainError);
  targets.push_back(ImageRGB(8, 9));
  CHECK_THROWS_AS(fit_supervised(scenes, targets, uniform_params(0.1, 0.1, 0.1)), ShapeError);
}
