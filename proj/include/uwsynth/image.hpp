#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "uwsynth/errors.hpp"

namespace uwsynth {

/// Dense row-major raster of doubles with interleaved channels.
///
/// The tag parameter keeps semantically different single-channel maps
/// (depth in meters, noise weights, detector scores) from being mixed up.
template <int Channels, class Tag>
class Raster {
 public:
  static constexpr int kChannels = Channels;

  Raster() = default;
  Raster(int height, int width, double fill = 0.0) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw ShapeError("raster dimensions must be >= 1, got " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
    data_.assign(static_cast<std::size_t>(height) * width * Channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  template <int C2, class T2>
  bool same_shape(const Raster<C2, T2>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  double min_value() const { return *std::min_element(data_.begin(), data_.end()); }
  double max_value() const { return *std::max_element(data_.begin(), data_.end()); }

  friend bool operator==(const Raster& a, const Raster& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * Channels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

struct RgbTag {};
struct DepthTag {};
struct NoiseTag {};
struct ScoreTag {};
struct GrayTag {};

/// Three-channel intensity image, values in [0,1].
using ImageRGB = Raster<3, RgbTag>;
/// Per-pixel camera range in meters, strictly positive.
using DepthMap = Raster<1, DepthTag>;
/// Per-pixel marine-snow weight M(x) in [0,1].
using NoiseMap = Raster<1, NoiseTag>;
/// Per-pixel keypoint score.
using ScoreMap = Raster<1, ScoreTag>;
/// Untyped single-channel map (used for I/O and intermediate planes).
using GrayMap = Raster<1, GrayTag>;

template <int C1, class T1, int C2, class T2>
void require_same_shape(const Raster<C1, T1>& a, const Raster<C2, T2>& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

/// Reinterprets a single-channel raster under another tag.
template <class To, class From>
To retag(const From& src) {
  static_assert(To::kChannels == From::kChannels);
  To out(src.height(), src.width());
  std::copy(src.data().begin(), src.data().end(), out.data().begin());
  return out;
}

}  // namespace uwsynth
