#include "uwsynth/noisegen.hpp"

#include <cmath>
#include <limits>

#include "uwsynth/blob_file.hpp"

namespace uwsynth {
namespace {

struct Tap {
  int lo, hi;
  double frac;  // weight of `hi`
};

// Source coordinate along one axis for align-corners bilinear sampling.
Tap axis_tap(int i, int out_size, int grid_size) {
  if (grid_size == 1 || out_size == 1) return {0, 0, 0.0};
  const double s = static_cast<double>(i) * (grid_size - 1) / (out_size - 1);
  const int lo = std::min(static_cast<int>(std::floor(s)), grid_size - 1);
  const int hi = std::min(lo + 1, grid_size - 1);
  return {lo, hi, s - lo};
}

double sigmoid(double a) {
  constexpr double kLo = std::numeric_limits<double>::denorm_min();
  const double kHi = std::nextafter(1.0, 0.0);
  const double s = a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
  return std::clamp(s, kLo, kHi);
}

void check_latent(const Latent& n, const GeneratorParams& g) {
  if (static_cast<int>(n.values.size()) != g.latent_dim()) {
    throw ShapeError("latent has " + std::to_string(n.values.size()) + " entries, generator expects " +
                     std::to_string(g.latent_dim()));
  }
}

}  // namespace

Latent sample_latent(int dim, std::mt19937_64& rng) {
  if (dim < 1) throw DomainError("latent dimension must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  Latent n;
  n.values.resize(dim);
  for (double& v : n.values) v = normal(rng);
  return n;
}

GeneratorParams::GeneratorParams(int grid_h, int grid_w, int latent_dim)
    : grid_h_(grid_h), grid_w_(grid_w), latent_dim_(latent_dim) {
  if (grid_h < 1 || grid_w < 1 || latent_dim < 1) throw ShapeError("generator grid and latent dim must be >= 1");
  values_.assign(static_cast<std::size_t>(grid_h) * grid_w * (latent_dim + 1), 0.0);
}

GeneratorParams GeneratorParams::random_init(int grid_h, int grid_w, int latent_dim, double weight_scale,
                                             double bias, std::mt19937_64& rng) {
  GeneratorParams g(grid_h, grid_w, latent_dim);
  std::normal_distribution<double> normal(0.0, weight_scale);
  for (double& w : g.weight()) w = normal(rng);
  for (double& b : g.bias()) b = bias;
  return g;
}

std::vector<double> generator_preactivation(const Latent& n, const GeneratorParams& g) {
  check_latent(n, g);
  const int N = g.latent_dim();
  const auto W = g.weight();
  const auto b = g.bias();
  std::vector<double> pre(g.cells());
  for (int k = 0; k < g.cells(); ++k) {
    double acc = b[k];
    for (int j = 0; j < N; ++j) acc += W[static_cast<std::size_t>(k) * N + j] * n.values[j];
    pre[k] = acc;
  }
  return pre;
}

GrayMap upsample_bilinear(std::span<const double> grid, int grid_h, int grid_w, int height, int width) {
  if (grid.size() != static_cast<std::size_t>(grid_h) * grid_w) throw ShapeError("grid size mismatch");
  GrayMap out(height, width);
  for (int y = 0; y < height; ++y) {
    const Tap ty = axis_tap(y, height, grid_h);
    for (int x = 0; x < width; ++x) {
      const Tap tx = axis_tap(x, width, grid_w);
      auto g = [&](int gy, int gx) { return grid[static_cast<std::size_t>(gy) * grid_w + gx]; };
      out.at(y, x) = (1 - ty.frac) * ((1 - tx.frac) * g(ty.lo, tx.lo) + tx.frac * g(ty.lo, tx.hi)) +
                     ty.frac * ((1 - tx.frac) * g(ty.hi, tx.lo) + tx.frac * g(ty.hi, tx.hi));
    }
  }
  return out;
}

std::vector<double> upsample_bilinear_transpose(const GrayMap& upstream, int grid_h, int grid_w) {
  std::vector<double> grid(static_cast<std::size_t>(grid_h) * grid_w, 0.0);
  const int H = upstream.height();
  const int W = upstream.width();
  for (int y = 0; y < H; ++y) {
    const Tap ty = axis_tap(y, H, grid_h);
    for (int x = 0; x < W; ++x) {
      const Tap tx = axis_tap(x, W, grid_w);
      const double u = upstream.at(y, x);
      auto add = [&](int gy, int gx, double w) { grid[static_cast<std::size_t>(gy) * grid_w + gx] += w * u; };
      add(ty.lo, tx.lo, (1 - ty.frac) * (1 - tx.frac));
      add(ty.lo, tx.hi, (1 - ty.frac) * tx.frac);
      add(ty.hi, tx.lo, ty.frac * (1 - tx.frac));
      add(ty.hi, tx.hi, ty.frac * tx.frac);
    }
  }
  return grid;
}

NoiseMap gen_noise(const Latent& n, const GeneratorParams& g, int height, int width) {
  const auto pre = generator_preactivation(n, g);
  const GrayMap up = upsample_bilinear(pre, g.grid_h(), g.grid_w(), height, width);
  NoiseMap M(height, width);
  auto src = up.data();
  auto dst = M.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid(src[i]);
  return M;
}

GeneratorParams gen_backward(const Latent& n, const GeneratorParams& g, const NoiseMap& dL_dM) {
  const NoiseMap M = gen_noise(n, g, dL_dM.height(), dL_dM.width());
  GrayMap d_up(M.height(), M.width());
  for (std::size_t i = 0; i < M.data().size(); ++i) {
    const double m = M.data()[i];
    d_up.data()[i] = dL_dM.data()[i] * m * (1.0 - m);
  }
  const auto d_pre = upsample_bilinear_transpose(d_up, g.grid_h(), g.grid_w());
  GeneratorParams grads(g.grid_h(), g.grid_w(), g.latent_dim());
  const int N = g.latent_dim();
  auto dW = grads.weight();
  auto db = grads.bias();
  for (int k = 0; k < g.cells(); ++k) {
    db[k] = d_pre[k];
    for (int j = 0; j < N; ++j) dW[static_cast<std::size_t>(k) * N + j] = d_pre[k] * n.values[j];
  }
  return grads;
}

void write_generator(const GeneratorParams& g, const std::filesystem::path& path) {
  const nlohmann::json header{{"kind", "noise_generator"},
                              {"grid", {g.grid_h(), g.grid_w()}},
                              {"latent_dim", g.latent_dim()},
                              {"dtype", "float64"}};
  write_blob(path, header, encode_f64(g.flat()));
}

GeneratorParams read_generator(const std::filesystem::path& path) {
  const Blob blob = read_blob(path);
  int gh = 0, gw = 0, n = 0;
  try {
    if (blob.header.at("kind") != "noise_generator" || blob.header.at("dtype") != "float64") {
      throw IoError("not a float64 noise generator file: " + path.string());
    }
    gh = blob.header.at("grid").at(0).get<int>();
    gw = blob.header.at("grid").at(1).get<int>();
    n = blob.header.at("latent_dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed generator header in " + path.string() + ": " + e.what());
  }
  GeneratorParams g(gh, gw, n);
  const auto values = decode_f64(blob.payload);
  if (values.size() != g.flat().size()) throw IoError("generator payload size mismatch in " + path.string());
  std::copy(values.begin(), values.end(), g.flat().begin());
  return g;
}

}  // namespace uwsynth
