#pragma once

#include <filesystem>
#include <random>

#include <Eigen/Core>

namespace uwsynth {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Projective map of the image plane, scaled so that H(2,2) = 1 when that
/// entry is non-zero (otherwise to unit Frobenius norm).
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Throws DomainError when |det| <= 1e-9 after normalization.
  explicit Homography(const Eigen::Matrix3d& m);

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }
  Homography inverse() const;

  friend Homography operator*(const Homography& a, const Homography& b) { return Homography(a.m_ * b.m_); }

 private:
  Eigen::Matrix3d m_;
};

inline constexpr double kMinHomographyDet = 1e-9;

/// Homogeneous multiply and divide. DomainError when |w| < 1e-12.
Point2 project_point(const Point2& p, const Homography& H);

/// Rotation (radians) and isotropic scale about `center`, then translation,
/// with a projective row (px, py).
Homography make_homography(double rotation, double scale, double tx, double ty, double px = 0.0,
                           double py = 0.0, Point2 center = {});

struct HomographySampling {
  double max_rotation = 0.0;     // radians
  double max_scale = 0.0;        // scale drawn from [1 - s, 1 + s]
  double max_translation = 0.0;  // pixels, per axis
  double max_perspective = 0.0;  // per projective coefficient
  Point2 center;
};

/// Uniform draw of each component within its bound. Degenerate draws are
/// redrawn; DomainError after 100 attempts.
Homography sample_homography(const HomographySampling& cfg, std::mt19937_64& rng);

/// Nine whitespace-separated decimals, row-major.
Homography read_homography(const std::filesystem::path& path);
void write_homography(const Homography& H, const std::filesystem::path& path);

}  // namespace uwsynth
