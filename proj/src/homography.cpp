#include "uwsynth/homography.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>

#include "uwsynth/errors.hpp"

namespace uwsynth {

Homography::Homography(const Eigen::Matrix3d& m) : m_(m) {
  if (!m_.allFinite()) throw DomainError("homography has non-finite entries");
  if (m_(2, 2) != 0.0) {
    m_ /= m_(2, 2);
  } else {
    const double n = m_.norm();
    if (n == 0.0) throw DomainError("homography is the zero matrix");
    m_ /= n;
  }
  if (!(std::abs(m_.determinant()) > kMinHomographyDet)) throw DomainError("homography is singular");
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Point2 project_point(const Point2& p, const Homography& H) {
  const Eigen::Vector3d v = H.matrix() * Eigen::Vector3d(p.x, p.y, 1.0);
  if (std::abs(v.z()) < 1e-12) throw DomainError("point maps to infinity under the homography");
  return {v.x() / v.z(), v.y() / v.z()};
}

Homography make_homography(double rotation, double scale, double tx, double ty, double px, double py,
                           Point2 center) {
  Eigen::Matrix3d to_origin = Eigen::Matrix3d::Identity();
  to_origin(0, 2) = -center.x;
  to_origin(1, 2) = -center.y;
  Eigen::Matrix3d back = Eigen::Matrix3d::Identity();
  back(0, 2) = center.x + tx;
  back(1, 2) = center.y + ty;
  const double c = std::cos(rotation), s = std::sin(rotation);
  Eigen::Matrix3d rs;
  rs << scale * c, -scale * s, 0.0, scale * s, scale * c, 0.0, 0.0, 0.0, 1.0;
  Eigen::Matrix3d proj = Eigen::Matrix3d::Identity();
  proj(2, 0) = px;
  proj(2, 1) = py;
  return Homography(back * rs * proj * to_origin);
}

Homography sample_homography(const HomographySampling& cfg, std::mt19937_64& rng) {
  if (cfg.max_rotation < 0 || cfg.max_scale < 0 || cfg.max_translation < 0 || cfg.max_perspective < 0) {
    throw DomainError("homography sampling bounds must be >= 0");
  }
  if (cfg.max_scale >= 1.0) throw DomainError("max_scale must be < 1");
  auto draw = [&rng](double bound) {
    if (bound == 0.0) return 0.0;
    return std::uniform_real_distribution<double>(-bound, bound)(rng);
  };
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double rot = draw(cfg.max_rotation);
    const double sc = 1.0 + draw(cfg.max_scale);
    const double tx = draw(cfg.max_translation);
    const double ty = draw(cfg.max_translation);
    const double px = draw(cfg.max_perspective);
    const double py = draw(cfg.max_perspective);
    try {
      return make_homography(rot, sc, tx, ty, px, py, cfg.center);
    } catch (const DomainError&) {
    }
  }
  throw DomainError("sample_homography: 100 degenerate draws in a row");
}

Homography read_homography(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open homography file " + path.string());
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) {
    if (!(f >> m(i / 3, i % 3))) throw IoError("homography file " + path.string() + " needs 9 numbers");
  }
  std::string extra;
  if (f >> extra) throw IoError("homography file " + path.string() + " has trailing content");
  return Homography(m);
}

void write_homography(const Homography& H, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << std::setprecision(17);
  for (int r = 0; r < 3; ++r) f << H(r, 0) << ' ' << H(r, 1) << ' ' << H(r, 2) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace uwsynth
