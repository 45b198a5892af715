#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "uwsynth/image.hpp"

namespace uwsynth {

/// Working depth range, meters.
inline constexpr double kDepthMin = 0.5;
inline constexpr double kDepthMax = 5.0;

struct ManifestEntry {
  std::filesystem::path rgb;
  std::filesystem::path depth;
  double depth_scale = 0.001;  // meters per stored unit
};

struct SceneManifest {
  std::vector<ManifestEntry> entries;
};

/// How stored depth is brought into [lo, hi].
enum class DepthMode {
  kClamp,    // meters = raw * scale, clamped
  kRescale,  // valid pixels affinely stretched onto [lo, hi]
};

struct DepthRange {
  double lo = kDepthMin;
  double hi = kDepthMax;
};

struct RgbdScene {
  ImageRGB rgb;
  DepthMap depth;
};

/// Parses `{"entries":[{"rgb":..,"depth":..,"depth_scale":..}]}`. Relative
/// paths resolve against the manifest's directory. Every referenced file must
/// exist.
SceneManifest load_manifest(const std::filesystem::path& path);

/// Loads an 8-bit RGB PNG and its depth (16-bit PNG or float tensor file).
/// Zero or non-finite raw depth becomes the far limit.
RgbdScene load_rgbd(const ManifestEntry& entry, DepthMode mode = DepthMode::kClamp,
                    DepthRange range = {});

std::vector<RgbdScene> load_scenes(const SceneManifest& manifest, DepthMode mode = DepthMode::kClamp,
                                   DepthRange range = {});

ImageRGB load_rgb(const std::filesystem::path& path);

/// Quantizes round(v * 255) into an 8-bit PNG. Values must lie in [0,1].
void write_image(const ImageRGB& img, const std::filesystem::path& path);

void write_gray_plane(std::span<const double> values, int height, int width,
                      const std::filesystem::path& path);

/// Single-channel maps (noise, score) are written as 8-bit grayscale.
template <class Tag>
void write_image(const Raster<1, Tag>& map, const std::filesystem::path& path) {
  write_gray_plane(map.data(), map.height(), map.width(), path);
}

/// Reads an 8-bit grayscale PNG back into [0,1].
GrayMap load_gray(const std::filesystem::path& path);

/// 16-bit depth PNG storing round(meters / depth_scale).
void write_depth_png(const DepthMap& depth, const std::filesystem::path& path, double depth_scale);

std::uint8_t quantize_u8(double v);

/// Affine map of the depth's (min, max) onto (lo, hi). Constant maps become lo.
DepthMap normalize_depth(const DepthMap& depth, double lo, double hi);

/// Clamps every channel into [0,1] in place; returns the number of values changed.
std::size_t clamp_unit(std::span<double> values);

/// Procedural textured RGB-D scene used by self-tests, the gradient checker
/// and fixtures. Depth is rescaled onto the working range.
RgbdScene make_synthetic_scene(int height, int width, std::uint64_t seed, DepthRange range = {});

/// Center crop to (height, width). Throws ShapeError if the source is smaller.
ImageRGB center_crop(const ImageRGB& img, int height, int width);

}  // namespace uwsynth
