#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uwsynth/homography.hpp"
#include "uwsynth/image.hpp"

namespace uwsynth {

enum class DescFormat { kFloat, kBinary };

std::string to_string(DescFormat f);
DescFormat parse_desc_format(const std::string& s);

/// One descriptor per pixel. Float descriptors have unit L2 norm, binary
/// descriptors have entries in {-1, +1}.
class DescriptorMap {
 public:
  DescriptorMap() = default;
  DescriptorMap(int height, int width, int dim, DescFormat format);

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  DescFormat format() const { return format_; }

  std::span<double> at(int y, int x) { return std::span(data_).subspan(offset(y, x), dim_); }
  std::span<const double> at(int y, int x) const { return std::span(data_).subspan(offset(y, x), dim_); }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// DomainError if an entry violates the format's invariant.
  void validate() const;

  friend bool operator==(const DescriptorMap&, const DescriptorMap&) = default;

 private:
  std::size_t offset(int y, int x) const { return (static_cast<std::size_t>(y) * width_ + x) * dim_; }

  int height_ = 0;
  int width_ = 0;
  int dim_ = 0;
  DescFormat format_ = DescFormat::kFloat;
  std::vector<double> data_;
};

struct Descriptor {
  std::vector<double> values;
  DescFormat format = DescFormat::kFloat;
};

struct FeaturePoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

enum class Similarity { kMeanSquare, kKL };

struct DistillConfig {
  double alpha_kd = 0.01;
  double gamma1 = 1.0;
  double gamma2 = 1.0;
  double P = 0.2;
  double Q = 1.0;
  double Z = 1.0;
  int S = 5;
  int n_points = 500;
  int nms_radius = 4;
  double match_radius = 3.0;
  Similarity f_x = Similarity::kMeanSquare;

  /// Margins and scale for a descriptor format: float P=0.2, Q=1, Z=1;
  /// binary P=0, Q=dim/2, Z=dim.
  static DistillConfig for_format(DescFormat format, int dim);

  /// Throws DomainError naming the offending field.
  void validate() const;
};

/// f_X(Xs, Xt) + alpha_kd * mean squared descriptor difference. f_X is the
/// mean squared difference or KL(teacher || student) of the maps normalized
/// to unit sum.
double kd_loss(const ScoreMap& Xs, const ScoreMap& Xt, const DescriptorMap& Ds, const DescriptorMap& Dt,
               const DistillConfig& cfg);

/// Greedy non-maximum suppression: highest score first, ties in row-major
/// order; each pick suppresses pixels within nms_radius (Euclidean).
std::vector<FeaturePoint> select_features(const ScoreMap& X, int n_points, int nms_radius);

/// Mean over points of sum_j r_j softmax(s)_j in the S x S patch around each
/// point; points whose patch leaves the image are skipped.
double dispersity_peak_loss(const ScoreMap& X, std::span<const FeaturePoint> points, int S);

/// Forward of the straight-through binarization: sign with sign(0) = +1.
DescriptorMap binarize_ste(const DescriptorMap& D);
/// Backward: upstream where |v| <= 1, zero elsewhere.
std::vector<double> binarize_ste_backward(const DescriptorMap& D, std::span<const double> upstream);

/// Binary: (Z - d1.d2) / 2. Float: Euclidean distance.
double descriptor_distance(const Descriptor& d1, const Descriptor& d2, double Z);

/// Descriptor at the pixel nearest to a point.
Descriptor descriptor_at(const DescriptorMap& D, const FeaturePoint& p);
std::vector<Descriptor> descriptors_at(const DescriptorMap& D, std::span<const FeaturePoint> points);

struct Correspondence {
  int student = 0;
  int target = 0;
};

/// Each student point warped by H is paired with the nearest target point
/// within `radius` pixels (lowest index on ties).
std::vector<Correspondence> build_correspondence(std::span<const FeaturePoint> student,
                                                 std::span<const FeaturePoint> target, const Homography& H,
                                                 double radius = 3.0);

struct MatchingLoss {
  double value = 0.0;
  bool empty_correspondence = false;
};

/// (1 / (Z^2 N_h)) sum_i (p_i^2 + n_i^2) over every student descriptor.
/// p_i = max(0, dist(d_i, d_j) - P) for the assigned match j (0 if
/// unmatched); n_i = max(0, Q - min distance to the non-matching target
/// descriptors), 0 when there are none.
MatchingLoss matching_loss(std::span<const Descriptor> desc_s, std::span<const Descriptor> desc_h,
                           std::span<const Correspondence> correspondence, const DistillConfig& cfg);

struct DistillParts {
  double kd = 0.0;
  double peak = 0.0;
  double matching = 0.0;
};

/// kd + gamma1 * peak + gamma2 * matching.
double total_distill_loss(const DistillParts& parts, const DistillConfig& cfg);

/// Tensor files: JSON header {height, width, dim, format} and a float32
/// payload. Score maps use dim 1 and format "float".
ScoreMap read_score_map(const std::filesystem::path& path);
void write_score_map(const ScoreMap& X, const std::filesystem::path& path);
DescriptorMap read_descriptor_map(const std::filesystem::path& path);
void write_descriptor_map(const DescriptorMap& D, const std::filesystem::path& path);

}  // namespace uwsynth
