#include "uwsynth/imgcore.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "uwsynth/blob_file.hpp"

namespace uwsynth {
namespace {

void require_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw IoError("file not found: " + path.string());
}

cv::Mat read_png(const std::filesystem::path& path) {
  require_file(path);
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError("cannot decode image: " + path.string());
  return mat;
}

void write_png(const cv::Mat& mat, const std::filesystem::path& path) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

bool is_png(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png";
}

// Raw stored depth units; non-positive or non-finite entries mark invalid pixels.
GrayMap read_raw_depth(const std::filesystem::path& path) {
  if (is_png(path)) {
    cv::Mat mat = read_png(path);
    if (mat.type() != CV_16UC1) {
      throw IoError("depth PNG must be 16-bit single-channel: " + path.string());
    }
    GrayMap raw(mat.rows, mat.cols);
    for (int y = 0; y < mat.rows; ++y) {
      const auto* row = mat.ptr<std::uint16_t>(y);
      for (int x = 0; x < mat.cols; ++x) raw.at(y, x) = row[x];
    }
    return raw;
  }
  require_file(path);
  Blob blob = read_blob(path);
  const int h = blob.header.value("height", 0);
  const int w = blob.header.value("width", 0);
  const int dim = blob.header.value("dim", 1);
  if (h < 1 || w < 1 || dim != 1) throw IoError("bad float depth header in " + path.string());
  auto values = decode_f32(blob.payload);
  if (values.size() != static_cast<std::size_t>(h) * w) {
    throw IoError("float depth payload size mismatch in " + path.string());
  }
  GrayMap raw(h, w);
  std::copy(values.begin(), values.end(), raw.data().begin());
  return raw;
}

}  // namespace

std::uint8_t quantize_u8(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::size_t clamp_unit(std::span<double> values) {
  std::size_t changed = 0;
  for (double& v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    if (c != v) {
      v = c;
      ++changed;
    }
  }
  return changed;
}

SceneManifest load_manifest(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream in(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (!doc.contains("entries") || !doc["entries"].is_array() || doc["entries"].empty()) {
    throw DomainError("manifest has no entries: " + path.string());
  }
  const auto base = path.parent_path();
  SceneManifest manifest;
  for (const auto& e : doc["entries"]) {
    ManifestEntry entry;
    try {
      entry.rgb = base / e.at("rgb").get<std::string>();
      entry.depth = base / e.at("depth").get<std::string>();
      entry.depth_scale = e.value("depth_scale", 0.001);
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("malformed manifest entry in " + path.string() + ": " + ex.what());
    }
    if (!(entry.depth_scale > 0.0)) throw DomainError("depth_scale must be > 0 in " + path.string());
    require_file(entry.rgb);
    require_file(entry.depth);
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

ImageRGB load_rgb(const std::filesystem::path& path) {
  cv::Mat mat = read_png(path);
  if (mat.type() != CV_8UC3) throw IoError("RGB file must be 8-bit 3-channel: " + path.string());
  ImageRGB img(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = row[x][2 - c] / 255.0;
    }
  }
  return img;
}

GrayMap load_gray(const std::filesystem::path& path) {
  cv::Mat mat = read_png(path);
  if (mat.type() != CV_8UC1) throw IoError("expected 8-bit grayscale: " + path.string());
  GrayMap map(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) map.at(y, x) = row[x] / 255.0;
  }
  return map;
}

RgbdScene load_rgbd(const ManifestEntry& entry, DepthMode mode, DepthRange range) {
  if (!(range.hi > range.lo && range.lo > 0.0)) throw DomainError("depth range requires hi > lo > 0");
  ImageRGB rgb = load_rgb(entry.rgb);
  GrayMap raw = read_raw_depth(entry.depth);
  if (!rgb.same_shape(raw)) {
    throw ShapeError("rgb/depth dimension mismatch for " + entry.rgb.string() + " and " +
                     entry.depth.string());
  }
  DepthMap depth(raw.height(), raw.width(), range.hi);
  auto src = raw.data();
  auto dst = depth.data();
  if (mode == DepthMode::kClamp) {
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double meters = src[i] * entry.depth_scale;
      if (std::isfinite(meters) && meters > 0.0) dst[i] = std::clamp(meters, range.lo, range.hi);
    }
  } else {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (double v : src) {
      if (std::isfinite(v) && v > 0.0) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double v = src[i];
      if (!(std::isfinite(v) && v > 0.0)) continue;
      dst[i] = hi > lo ? range.lo + (v - lo) / (hi - lo) * (range.hi - range.lo) : range.lo;
    }
  }
  return {std::move(rgb), std::move(depth)};
}

std::vector<RgbdScene> load_scenes(const SceneManifest& manifest, DepthMode mode, DepthRange range) {
  std::vector<RgbdScene> scenes;
  scenes.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) scenes.push_back(load_rgbd(entry, mode, range));
  return scenes;
}

void write_image(const ImageRGB& img, const std::filesystem::path& path) {
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = quantize_u8(img.at(y, x, c));
    }
  }
  write_png(mat, path);
}

void write_gray_plane(std::span<const double> values, int height, int width,
                      const std::filesystem::path& path) {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("gray plane size does not match dimensions");
  }
  cv::Mat mat(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < width; ++x) row[x] = quantize_u8(values[static_cast<std::size_t>(y) * width + x]);
  }
  write_png(mat, path);
}

void write_depth_png(const DepthMap& depth, const std::filesystem::path& path, double depth_scale) {
  if (!(depth_scale > 0.0)) throw DomainError("depth_scale must be > 0");
  cv::Mat mat(depth.height(), depth.width(), CV_16UC1);
  for (int y = 0; y < depth.height(); ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < depth.width(); ++x) {
      const double raw = std::round(depth.at(y, x) / depth_scale);
      row[x] = static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
    }
  }
  write_png(mat, path);
}

DepthMap normalize_depth(const DepthMap& depth, double lo, double hi) {
  if (depth.empty()) throw ShapeError("normalize_depth: empty map");
  if (!(hi > lo && lo > 0.0)) throw DomainError("normalize_depth requires hi > lo > 0");
  const double dmin = depth.min_value();
  const double dmax = depth.max_value();
  DepthMap out(depth.height(), depth.width(), lo);
  if (dmax > dmin) {
    auto src = depth.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lo + (src[i] - dmin) / (dmax - dmin) * (hi - lo);
  }
  return out;
}

ImageRGB center_crop(const ImageRGB& img, int height, int width) {
  if (img.height() < height || img.width() < width) {
    throw ShapeError("center_crop: source " + std::to_string(img.height()) + "x" +
                     std::to_string(img.width()) + " smaller than " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  const int y0 = (img.height() - height) / 2;
  const int x0 = (img.width() - width) / 2;
  ImageRGB out(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

RgbdScene make_synthetic_scene(int height, int width, std::uint64_t seed, DepthRange range) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr double kTwoPi = 2.0 * std::numbers::pi;

  struct Wave {
    double fx, fy, phase, amp;
  };
  ImageRGB rgb(height, width);
  for (int c = 0; c < 3; ++c) {
    const double base = 0.3 + 0.4 * u(rng);
    std::vector<Wave> waves(4);
    for (auto& w : waves) w = {kTwoPi * (0.02 + 0.2 * u(rng)), kTwoPi * (0.02 + 0.2 * u(rng)),
                               kTwoPi * u(rng), 0.08 * u(rng)};
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double v = base;
        for (const auto& w : waves) v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
        rgb.at(y, x, c) = v;
      }
  }
  // Hard-edged rectangles give the blur something to act on.
  const int n_rects = 3 + static_cast<int>(u(rng) * 4);
  for (int r = 0; r < n_rects; ++r) {
    const int x0 = static_cast<int>(u(rng) * width);
    const int y0 = static_cast<int>(u(rng) * height);
    const int x1 = std::min(width, x0 + 1 + static_cast<int>(u(rng) * width / 2));
    const int y1 = std::min(height, y0 + 1 + static_cast<int>(u(rng) * height / 2));
    const double shift[3] = {0.3 * (u(rng) - 0.5), 0.3 * (u(rng) - 0.5), 0.3 * (u(rng) - 0.5)};
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) += shift[c];
  }
  for (double& v : rgb.data()) v = std::clamp(v, 0.02, 0.98);

  DepthMap depth(height, width);
  const double gx = u(rng) - 0.5;
  const double gy = u(rng) - 0.5;
  const double bx = u(rng) * width;
  const double by = u(rng) * height;
  const double bs = 0.2 * std::max(height, width) + 1.0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
      depth.at(y, x) = 1.0 + gx * x / width + gy * y / height + 0.5 * std::exp(-d2 / (2 * bs * bs));
    }
  depth = normalize_depth(depth, range.lo, range.hi);
  return {std::move(rgb), std::move(depth)};
}

}  // namespace uwsynth
