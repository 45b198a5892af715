#include "uwsynth/matcheval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <json.hpp>

#include "uwsynth/errors.hpp"

namespace uwsynth {
namespace {

// Snap tolerance so sources that land on the last row/column through
// rounding are still sampled.
constexpr double kEdgeSlack = 1e-9;

double distance_scale(const Descriptor& d) {
  return d.format == DescFormat::kBinary ? static_cast<double>(d.values.size()) : 1.0;
}

// Index of the nearest descriptor, lowest index on ties.
int nearest(const Descriptor& q, std::span<const Descriptor> set, double& best) {
  int idx = -1;
  best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < set.size(); ++j) {
    const double d = descriptor_distance(q, set[j], distance_scale(q));
    if (d < best) {
      best = d;
      idx = static_cast<int>(j);
    }
  }
  return idx;
}

// Translate to the centroid and scale to mean distance sqrt(2).
Eigen::Matrix3d hartley(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean = 0.0;
  for (const auto& p : pts) mean += std::hypot(p.x - cx, p.y - cy);
  mean /= pts.size();
  const double s = mean > 0.0 ? std::sqrt(2.0) / mean : 1.0;
  Eigen::Matrix3d T;
  T << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return T;
}

bool has_collinear_triple(std::span<const Point2> pts, const Eigen::Matrix3d& T) {
  std::vector<Eigen::Vector2d> q;
  for (const auto& p : pts) q.push_back((T * Eigen::Vector3d(p.x, p.y, 1.0)).head<2>());
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = i + 1; j < q.size(); ++j)
      for (std::size_t k = j + 1; k < q.size(); ++k) {
        const Eigen::Vector2d u = q[j] - q[i], v = q[k] - q[i];
        if (std::abs(u.x() * v.y() - u.y() * v.x()) < 1e-6) return true;
      }
  return false;
}

int count_inliers(const MatchSet& m, const Homography& H, double threshold, std::vector<bool>* flags) {
  int n = 0;
  if (flags) flags->assign(m.pairs.size(), false);
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    Point2 p;
    try {
      p = project_point(m.pairs[i].a, H);
    } catch (const DomainError&) {
      continue;
    }
    if (std::hypot(p.x - m.pairs[i].b.x, p.y - m.pairs[i].b.y) < threshold) {
      ++n;
      if (flags) (*flags)[i] = true;
    }
  }
  return n;
}

}  // namespace

ImageRGB warp_image(const ImageRGB& I, const Homography& H) {
  const Homography inv = H.inverse();
  const int Hh = I.height(), W = I.width();
  ImageRGB out(Hh, W, 0.0);
  for (int y = 0; y < Hh; ++y)
    for (int x = 0; x < W; ++x) {
      const Eigen::Vector3d s = inv.matrix() * Eigen::Vector3d(x, y, 1.0);
      if (std::abs(s.z()) < 1e-12) continue;
      double sx = s.x() / s.z(), sy = s.y() / s.z();
      if (sx < -kEdgeSlack || sy < -kEdgeSlack || sx > W - 1 + kEdgeSlack || sy > Hh - 1 + kEdgeSlack) continue;
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(Hh - 1));
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, Hh - 1);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - fx) * I.at(y0, x0, c) + fx * I.at(y0, x1, c);
        const double bot = (1 - fx) * I.at(y1, x0, c) + fx * I.at(y1, x1, c);
        out.at(y, x, c) = (1 - fy) * top + fy * bot;
      }
    }
  return out;
}

FeatureSet read_features(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open feature file " + path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError("feature file " + path.string() + " is empty");
  int count = 0, dim = 0;
  DescFormat format = DescFormat::kFloat;
  try {
    const auto header = nlohmann::json::parse(line);
    count = header.at("count").get<int>();
    dim = header.at("dim").get<int>();
    format = parse_desc_format(header.at("format").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed feature header in " + path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (count < 0 || dim < 1) throw IoError("feature header in " + path.string() + " has invalid count/dim");
  FeatureSet fs;
  for (int i = 0; i < count; ++i) {
    Point2 p;
    Descriptor d{std::vector<double>(dim), format};
    if (!(f >> p.x >> p.y)) throw IoError("feature file " + path.string() + " ends early at row " + std::to_string(i));
    for (double& v : d.values)
      if (!(f >> v)) throw IoError("feature file " + path.string() + " ends early at row " + std::to_string(i));
    fs.points.push_back(p);
    fs.descriptors.push_back(std::move(d));
  }
  std::string extra;
  if (f >> extra) throw IoError("feature file " + path.string() + " has more rows than its header states");
  return fs;
}

void write_features(const FeatureSet& fs, const std::filesystem::path& path) {
  if (fs.points.size() != fs.descriptors.size()) throw ShapeError("one descriptor per feature point");
  const int dim = fs.descriptors.empty() ? 1 : static_cast<int>(fs.descriptors[0].values.size());
  const DescFormat format = fs.descriptors.empty() ? DescFormat::kFloat : fs.descriptors[0].format;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << nlohmann::json{{"count", fs.points.size()}, {"dim", dim}, {"format", to_string(format)}}.dump() << '\n';
  f << std::setprecision(17);
  for (std::size_t i = 0; i < fs.points.size(); ++i) {
    f << fs.points[i].x << ' ' << fs.points[i].y;
    for (double v : fs.descriptors[i].values) f << ' ' << v;
    f << '\n';
  }
  if (!f) throw IoError("failed writing " + path.string());
}

MatchSet nn_match(const FeatureSet& a, const FeatureSet& b, bool mutual) {
  if (a.descriptors.empty() || b.descriptors.empty()) throw DomainError("nn_match needs non-empty descriptor lists");
  if (a.points.size() != a.descriptors.size() || b.points.size() != b.descriptors.size()) {
    throw ShapeError("one descriptor per feature point");
  }
  MatchSet m;
  for (std::size_t i = 0; i < a.descriptors.size(); ++i) {
    double d = 0.0;
    const int j = nearest(a.descriptors[i], b.descriptors, d);
    if (mutual) {
      double back = 0.0;
      if (nearest(b.descriptors[j], a.descriptors, back) != static_cast<int>(i)) continue;
    }
    m.pairs.push_back({static_cast<int>(i), j, a.points[i], b.points[j], d});
  }
  m.inlier.assign(m.pairs.size(), false);
  m.n_found = static_cast<int>(m.pairs.size());
  return m;
}

std::optional<Homography> estimate_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst) {
  if (src.size() != dst.size()) throw ShapeError("DLT needs equally many source and target points");
  const std::size_t n = src.size();
  if (n < 4) return std::nullopt;
  const Eigen::Matrix3d Ts = hartley(src), Td = hartley(dst);
  if (n == 4 && (has_collinear_triple(src, Ts) || has_collinear_triple(dst, Td))) return std::nullopt;

  Eigen::MatrixXd A(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = Ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d q = Td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = p.x(), y = p.y(), u = q.x(), v = q.y();
    A.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    A.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A one-dimensional null space needs the eighth singular value clear of zero.
  if (!(sv(7) > 1e-10 * sv(0))) return std::nullopt;
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  try {
    return Homography(Td.inverse() * Hn * Ts);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

RansacResult ransac_homography(const MatchSet& matches, const RansacConfig& cfg, std::mt19937_64& rng) {
  if (!(cfg.threshold > 0.0) || cfg.iters < 1) throw DomainError("RANSAC needs threshold > 0 and iters >= 1");
  const int n = static_cast<int>(matches.pairs.size());
  if (n < 4) throw EstimationError("RANSAC needs at least 4 matches, got " + std::to_string(n));
  std::uniform_int_distribution<int> pick(0, n - 1);

  std::optional<Homography> best;
  int best_count = -1;
  for (int it = 0; it < cfg.iters; ++it) {
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      bool fresh = false;
      while (!fresh) {
        idx[k] = pick(rng);
        fresh = true;
        for (int j = 0; j < k; ++j) fresh = fresh && idx[j] != idx[k];
      }
    }
    Point2 src[4], dst[4];
    for (int k = 0; k < 4; ++k) {
      src[k] = matches.pairs[idx[k]].a;
      dst[k] = matches.pairs[idx[k]].b;
    }
    const auto H = estimate_homography_dlt(src, dst);
    if (!H) continue;
    const int count = count_inliers(matches, *H, cfg.threshold, nullptr);
    if (count > best_count) {
      best_count = count;
      best = H;
    }
  }
  if (!best || best_count < 4) throw EstimationError("RANSAC found no hypothesis with at least 4 inliers");

  std::vector<bool> flags;
  count_inliers(matches, *best, cfg.threshold, &flags);
  std::vector<Point2> src, dst;
  for (int i = 0; i < n; ++i)
    if (flags[i]) {
      src.push_back(matches.pairs[i].a);
      dst.push_back(matches.pairs[i].b);
    }
  const auto refit = estimate_homography_dlt(src, dst);
  RansacResult result{refit ? *refit : *best, matches};
  result.matches.n_match = count_inliers(matches, result.H, cfg.threshold, &flags);
  result.matches.inlier = flags;
  return result;
}

MatchingMetrics matching_metrics(const MatchSet& m) {
  if (m.n_found <= 0) throw DomainError("matching rate is undefined when no matches were found");
  return {static_cast<double>(m.n_match), static_cast<double>(m.n_match) / m.n_found};
}

double corner_error(const Homography& a, const Homography& b, int height, int width) {
  double worst = 0.0;
  const Point2 corners[] = {{0, 0}, {width - 1.0, 0}, {0, height - 1.0}, {width - 1.0, height - 1.0}};
  for (const auto& c : corners) {
    const Point2 pa = project_point(c, a), pb = project_point(c, b);
    worst = std::max(worst, std::hypot(pa.x - pb.x, pa.y - pb.y));
  }
  return worst;
}

}  // namespace uwsynth
