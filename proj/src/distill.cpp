#include "uwsynth/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "uwsynth/blob_file.hpp"

namespace uwsynth {
namespace {

// Floor for student probabilities in the KL option, so a zero student score
// under a positive teacher score gives a large finite penalty.
constexpr double kKlFloor = 1e-12;

double mean_sq_diff(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double kl_teacher_student(const ScoreMap& Xs, const ScoreMap& Xt) {
  const auto s = Xs.data();
  const auto t = Xt.data();
  const double ss = std::accumulate(s.begin(), s.end(), 0.0);
  const double st = std::accumulate(t.begin(), t.end(), 0.0);
  if (!(ss > 0.0) || !(st > 0.0)) throw DomainError("KL score loss needs maps with positive total score");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double p = t[i] / st;
    if (p <= 0.0) continue;
    acc += p * std::log(p / std::max(s[i] / ss, kKlFloor));
  }
  return std::max(acc, 0.0);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

nlohmann::json tensor_header(int h, int w, int dim, DescFormat f) {
  return {{"height", h}, {"width", w}, {"dim", dim}, {"format", to_string(f)}};
}

struct TensorFile {
  int height = 0, width = 0, dim = 0;
  DescFormat format = DescFormat::kFloat;
  std::vector<double> values;
};

TensorFile read_tensor(const std::filesystem::path& path) {
  const Blob blob = read_blob(path);
  TensorFile t;
  try {
    t.height = blob.header.at("height").get<int>();
    t.width = blob.header.at("width").get<int>();
    t.dim = blob.header.at("dim").get<int>();
    t.format = parse_desc_format(blob.header.at("format").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed tensor header in " + path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (t.height < 1 || t.width < 1 || t.dim < 1) throw IoError("tensor dimensions must be >= 1 in " + path.string());
  t.values = decode_f32(blob.payload);
  if (t.values.size() != static_cast<std::size_t>(t.height) * t.width * t.dim) {
    throw IoError("tensor payload size does not match its header in " + path.string());
  }
  return t;
}

}  // namespace

std::string to_string(DescFormat f) { return f == DescFormat::kBinary ? "binary" : "float"; }

DescFormat parse_desc_format(const std::string& s) {
  if (s == "float") return DescFormat::kFloat;
  if (s == "binary") return DescFormat::kBinary;
  throw DomainError("unknown descriptor format '" + s + "'");
}

DescriptorMap::DescriptorMap(int height, int width, int dim, DescFormat format)
    : height_(height), width_(width), dim_(dim), format_(format) {
  if (height < 1 || width < 1 || dim < 1) throw ShapeError("descriptor map dimensions must be >= 1");
  data_.assign(static_cast<std::size_t>(height) * width * dim, format == DescFormat::kBinary ? 1.0 : 0.0);
}

void DescriptorMap::validate() const {
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      const auto d = at(y, x);
      if (format_ == DescFormat::kBinary) {
        for (double v : d)
          if (v != 1.0 && v != -1.0) throw DomainError("binary descriptor entries must be +-1");
      } else if (std::abs(std::sqrt(dot(d, d)) - 1.0) > 1e-6) {
        throw DomainError("float descriptor at (" + std::to_string(x) + "," + std::to_string(y) +
                          ") is not unit length");
      }
    }
}

DistillConfig DistillConfig::for_format(DescFormat format, int dim) {
  DistillConfig cfg;
  if (format == DescFormat::kBinary) {
    cfg.P = 0.0;
    cfg.Q = dim / 2.0;
    cfg.Z = dim;
  }
  return cfg;
}

void DistillConfig::validate() const {
  auto fail = [](const std::string& msg) { throw DomainError(msg); };
  if (!(alpha_kd >= 0.0)) fail("alpha_kd must be >= 0");
  if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) fail("gamma1 and gamma2 must be >= 0");
  if (!(P >= 0.0)) fail("P must be >= 0");
  if (!(Q > P)) fail("Q must be > P");
  if (!(Z > 0.0)) fail("Z must be > 0");
  if (S < 1 || S % 2 == 0) fail("S must be a positive odd number");
  if (n_points < 1) fail("n_points must be >= 1");
  if (nms_radius < 0) fail("nms_radius must be >= 0");
  if (!(match_radius >= 0.0)) fail("match_radius must be >= 0");
}

double kd_loss(const ScoreMap& Xs, const ScoreMap& Xt, const DescriptorMap& Ds, const DescriptorMap& Dt,
               const DistillConfig& cfg) {
  require_same_shape(Xs, Xt, "student and teacher score maps");
  if (Ds.height() != Dt.height() || Ds.width() != Dt.width() || Ds.dim() != Dt.dim()) {
    throw ShapeError("student and teacher descriptor maps differ in shape");
  }
  const double fx = cfg.f_x == Similarity::kKL ? kl_teacher_student(Xs, Xt) : mean_sq_diff(Xs.data(), Xt.data());
  return fx + cfg.alpha_kd * mean_sq_diff(Ds.data(), Dt.data());
}

std::vector<FeaturePoint> select_features(const ScoreMap& X, int n_points, int nms_radius) {
  if (n_points < 1) throw DomainError("n_points must be >= 1");
  if (nms_radius < 0) throw DomainError("nms_radius must be >= 0");
  const int H = X.height(), W = X.width();
  const auto s = X.data();
  std::vector<int> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });

  std::vector<char> suppressed(s.size(), 0);
  std::vector<FeaturePoint> out;
  const int r2 = nms_radius * nms_radius;
  for (int idx : order) {
    if (static_cast<int>(out.size()) == n_points) break;
    if (suppressed[idx]) continue;
    const int y = idx / W, x = idx % W;
    out.push_back({static_cast<double>(x), static_cast<double>(y), s[idx]});
    for (int dy = -nms_radius; dy <= nms_radius; ++dy)
      for (int dx = -nms_radius; dx <= nms_radius; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= H || xx < 0 || xx >= W || dy * dy + dx * dx > r2) continue;
        suppressed[static_cast<std::size_t>(yy) * W + xx] = 1;
      }
  }
  return out;
}

double dispersity_peak_loss(const ScoreMap& X, std::span<const FeaturePoint> points, int S) {
  if (S < 1 || S % 2 == 0) throw DomainError("patch side S must be a positive odd number");
  const int h = S / 2;
  double total = 0.0;
  int included = 0;
  std::vector<double> w(static_cast<std::size_t>(S) * S);
  for (const auto& p : points) {
    const int cx = static_cast<int>(std::lround(p.x));
    const int cy = static_cast<int>(std::lround(p.y));
    if (cx - h < 0 || cy - h < 0 || cx + h >= X.width() || cy + h >= X.height()) continue;
    double peak = -std::numeric_limits<double>::infinity();
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx) peak = std::max(peak, X.at(cy + dy, cx + dx));
    double z = 0.0, acc = 0.0;
    std::size_t j = 0;
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx, ++j) {
        w[j] = std::exp(X.at(cy + dy, cx + dx) - peak);
        z += w[j];
      }
    j = 0;
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx, ++j) acc += std::hypot(dx, dy) * w[j] / z;
    total += acc;
    ++included;
  }
  return included == 0 ? 0.0 : total / included;
}

DescriptorMap binarize_ste(const DescriptorMap& D) {
  if (D.format() != DescFormat::kFloat) throw DomainError("binarize_ste expects float descriptors");
  DescriptorMap out(D.height(), D.width(), D.dim(), DescFormat::kBinary);
  for (std::size_t i = 0; i < D.data().size(); ++i) out.data()[i] = D.data()[i] >= 0.0 ? 1.0 : -1.0;
  return out;
}

std::vector<double> binarize_ste_backward(const DescriptorMap& D, std::span<const double> upstream) {
  if (upstream.size() != D.data().size()) throw ShapeError("upstream gradient does not match the descriptor map");
  std::vector<double> g(upstream.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::abs(D.data()[i]) <= 1.0 ? upstream[i] : 0.0;
  return g;
}

double descriptor_distance(const Descriptor& d1, const Descriptor& d2, double Z) {
  if (d1.format != d2.format) throw DomainError("descriptor formats differ");
  if (d1.values.size() != d2.values.size()) throw ShapeError("descriptor dimensions differ");
  if (d1.format == DescFormat::kBinary) return 0.5 * (Z - dot(d1.values, d2.values));
  double acc = 0.0;
  for (std::size_t i = 0; i < d1.values.size(); ++i) acc += (d1.values[i] - d2.values[i]) * (d1.values[i] - d2.values[i]);
  return std::sqrt(acc);
}

Descriptor descriptor_at(const DescriptorMap& D, const FeaturePoint& p) {
  const int x = static_cast<int>(std::lround(p.x));
  const int y = static_cast<int>(std::lround(p.y));
  if (x < 0 || y < 0 || x >= D.width() || y >= D.height()) throw DomainError("feature point outside descriptor map");
  const auto v = D.at(y, x);
  return {std::vector<double>(v.begin(), v.end()), D.format()};
}

std::vector<Descriptor> descriptors_at(const DescriptorMap& D, std::span<const FeaturePoint> points) {
  std::vector<Descriptor> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(descriptor_at(D, p));
  return out;
}

std::vector<Correspondence> build_correspondence(std::span<const FeaturePoint> student,
                                                 std::span<const FeaturePoint> target, const Homography& H,
                                                 double radius) {
  std::vector<Correspondence> out;
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < student.size(); ++i) {
    Point2 w;
    try {
      w = project_point({student[i].x, student[i].y}, H);
    } catch (const DomainError&) {
      continue;
    }
    int best = -1;
    double best_d2 = 0.0;
    for (std::size_t j = 0; j < target.size(); ++j) {
      const double dx = target[j].x - w.x, dy = target[j].y - w.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= r2 && (best < 0 || d2 < best_d2)) {
        best = static_cast<int>(j);
        best_d2 = d2;
      }
    }
    if (best >= 0) out.push_back({static_cast<int>(i), best});
  }
  return out;
}

MatchingLoss matching_loss(std::span<const Descriptor> desc_s, std::span<const Descriptor> desc_h,
                           std::span<const Correspondence> correspondence, const DistillConfig& cfg) {
  if (correspondence.empty()) return {0.0, true};
  if (desc_h.empty()) throw DomainError("matching_loss needs at least one target descriptor");
  std::vector<int> match(desc_s.size(), -1);
  for (const auto& c : correspondence) {
    if (c.student < 0 || c.student >= static_cast<int>(desc_s.size()) || c.target < 0 ||
        c.target >= static_cast<int>(desc_h.size())) {
      throw DomainError("correspondence index out of range");
    }
    if (match[c.student] < 0) match[c.student] = c.target;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < desc_s.size(); ++i) {
    const int j = match[i];
    const double p = j >= 0 ? std::max(0.0, descriptor_distance(desc_s[i], desc_h[j], cfg.Z) - cfg.P) : 0.0;
    double nearest_neg = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < desc_h.size(); ++k) {
      if (static_cast<int>(k) == j) continue;
      nearest_neg = std::min(nearest_neg, descriptor_distance(desc_s[i], desc_h[k], cfg.Z));
    }
    const double n = std::isinf(nearest_neg) ? 0.0 : std::max(0.0, cfg.Q - nearest_neg);
    acc += p * p + n * n;
  }
  return {acc / (cfg.Z * cfg.Z * static_cast<double>(desc_h.size())), false};
}

double total_distill_loss(const DistillParts& parts, const DistillConfig& cfg) {
  if (!std::isfinite(parts.kd) || !std::isfinite(parts.peak) || !std::isfinite(parts.matching)) {
    throw DomainError("distillation loss parts must be finite");
  }
  return parts.kd + cfg.gamma1 * parts.peak + cfg.gamma2 * parts.matching;
}

ScoreMap read_score_map(const std::filesystem::path& path) {
  const auto t = read_tensor(path);
  if (t.dim != 1 || t.format != DescFormat::kFloat) throw IoError(path.string() + " is not a score map");
  ScoreMap X(t.height, t.width);
  std::copy(t.values.begin(), t.values.end(), X.data().begin());
  for (double v : X.data())
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("score map " + path.string() + " has values outside [0,1]");
  return X;
}

void write_score_map(const ScoreMap& X, const std::filesystem::path& path) {
  write_blob(path, tensor_header(X.height(), X.width(), 1, DescFormat::kFloat), encode_f32(X.data()));
}

DescriptorMap read_descriptor_map(const std::filesystem::path& path) {
  const auto t = read_tensor(path);
  DescriptorMap D(t.height, t.width, t.dim, t.format);
  std::copy(t.values.begin(), t.values.end(), D.data().begin());
  D.validate();
  return D;
}

void write_descriptor_map(const DescriptorMap& D, const std::filesystem::path& path) {
  write_blob(path, tensor_header(D.height(), D.width(), D.dim(), D.format()), encode_f32(D.data()));
}

}  // namespace uwsynth
