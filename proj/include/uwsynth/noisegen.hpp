#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "uwsynth/image.hpp"

namespace uwsynth {

inline constexpr int kDefaultLatentDim = 10;
inline constexpr int kDefaultNoiseGrid = 16;

/// Random generator input, i.i.d. standard normal.
struct Latent {
  std::vector<double> values;
};

Latent sample_latent(int dim, std::mt19937_64& rng);

/// Affine map latent -> coarse grid of pre-activations. The grid is upsampled
/// bilinearly to the image size and squashed by a sigmoid.
///
/// Storage is one flat vector: weight ((grid_h*grid_w) x latent_dim, row-major)
/// followed by bias (grid_h*grid_w). The same layout holds gradients.
class GeneratorParams {
 public:
  GeneratorParams() = default;
  GeneratorParams(int grid_h, int grid_w, int latent_dim);

  /// Weights ~ N(0, weight_scale^2), bias constant.
  static GeneratorParams random_init(int grid_h, int grid_w, int latent_dim, double weight_scale,
                                     double bias, std::mt19937_64& rng);

  int grid_h() const { return grid_h_; }
  int grid_w() const { return grid_w_; }
  int latent_dim() const { return latent_dim_; }
  int cells() const { return grid_h_ * grid_w_; }

  std::span<double> weight() { return std::span(values_).first(static_cast<std::size_t>(cells()) * latent_dim_); }
  std::span<const double> weight() const {
    return std::span(values_).first(static_cast<std::size_t>(cells()) * latent_dim_);
  }
  std::span<double> bias() { return std::span(values_).last(cells()); }
  std::span<const double> bias() const { return std::span(values_).last(cells()); }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  bool same_shape(const GeneratorParams& o) const {
    return grid_h_ == o.grid_h_ && grid_w_ == o.grid_w_ && latent_dim_ == o.latent_dim_;
  }

  friend bool operator==(const GeneratorParams&, const GeneratorParams&) = default;

 private:
  int grid_h_ = 0;
  int grid_w_ = 0;
  int latent_dim_ = 0;
  std::vector<double> values_;
};

/// Coarse pre-activation grid W n + b, row-major (grid_h x grid_w).
std::vector<double> generator_preactivation(const Latent& n, const GeneratorParams& g);

/// M = sigmoid(upsample(W n + b)); every value strictly inside (0,1).
NoiseMap gen_noise(const Latent& n, const GeneratorParams& g, int height, int width);

/// Exact gradients of a loss with respect to the generator parameters, given
/// dL/dM. Returned in the GeneratorParams layout.
GeneratorParams gen_backward(const Latent& n, const GeneratorParams& g, const NoiseMap& dL_dM);

/// Bilinear upsampling with grid corners pinned to image corners, and its
/// transpose. Exposed for testing.
GrayMap upsample_bilinear(std::span<const double> grid, int grid_h, int grid_w, int height, int width);
std::vector<double> upsample_bilinear_transpose(const GrayMap& upstream, int grid_h, int grid_w);

/// Flat little-endian float64 payload behind a one-line JSON header.
void write_generator(const GeneratorParams& g, const std::filesystem::path& path);
GeneratorParams read_generator(const std::filesystem::path& path);

}  // namespace uwsynth
