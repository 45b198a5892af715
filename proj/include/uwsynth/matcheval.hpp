#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "uwsynth/distill.hpp"
#include "uwsynth/homography.hpp"
#include "uwsynth/image.hpp"

namespace uwsynth {

/// Inverse warp with bilinear sampling: out(p) = I(H^-1 p). Pixels whose
/// source falls outside the image are 0.
ImageRGB warp_image(const ImageRGB& I, const Homography& H);

/// Keypoints with one descriptor each.
struct FeatureSet {
  std::vector<Point2> points;
  std::vector<Descriptor> descriptors;
};

/// Text format: a JSON header line {"count", "dim", "format"} followed by one
/// row per feature: x y d_1 ... d_dim.
FeatureSet read_features(const std::filesystem::path& path);
void write_features(const FeatureSet& f, const std::filesystem::path& path);

struct MatchPair {
  int index_a = 0;
  int index_b = 0;
  Point2 a;
  Point2 b;
  double distance = 0.0;
};

struct MatchSet {
  std::vector<MatchPair> pairs;
  std::vector<bool> inlier;
  int n_found = 0;
  int n_match = 0;
};

/// Nearest descriptor in b for every a (lowest index on ties). With `mutual`
/// only pairs that are each other's nearest neighbour survive. Z is 1 for
/// float and the descriptor length for binary descriptors.
MatchSet nn_match(const FeatureSet& a, const FeatureSet& b, bool mutual = true);

/// Normalized direct linear transform. nullopt when the points are
/// degenerate (fewer than four, three collinear in a minimal set, or a
/// rank-deficient system).
std::optional<Homography> estimate_homography_dlt(std::span<const Point2> src, std::span<const Point2> dst);

struct RansacConfig {
  double threshold = 3.0;  // reprojection error, pixels
  int iters = 2000;
};

struct RansacResult {
  Homography H;
  MatchSet matches;  // input pairs with inlier flags and n_match set
};

/// Fixed-count RANSAC over 4-point hypotheses. The best hypothesis (most
/// inliers, then lowest draw index) is refit on its inliers and the inliers
/// are re-evaluated under the refit. EstimationError with fewer than four
/// pairs or when no hypothesis reaches four inliers.
RansacResult ransac_homography(const MatchSet& matches, const RansacConfig& cfg, std::mt19937_64& rng);

struct MatchingMetrics {
  double matching_num = 0.0;
  double matching_rate = 0.0;
};

/// M.N = n_match, M.R = n_match / n_found. DomainError when n_found is 0.
MatchingMetrics matching_metrics(const MatchSet& m);

/// Largest distance between the images of the four frame corners under two
/// homographies.
double corner_error(const Homography& a, const Homography& b, int height, int width);

}  // namespace uwsynth
