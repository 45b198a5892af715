#include <doctest.h>

#include <cmath>
#include <numbers>
#include <fstream>
#include <random>
#include <set>

#include "test_util.hpp"
#include "uwsynth/matcheval.hpp"

using namespace uwsynth;

namespace {

Descriptor unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return {v, DescFormat::kFloat};
}

Homography test_homography() { return make_homography(0.1, 1.05, 12.0, -7.0, 1e-4, -5e-5, {320, 240}); }

// Pairs under a known homography; every `outlier_every`-th pair is moved at
// least 20 px away from its true image.
MatchSet synthetic_matches(const Homography& H, int n, int outlier_every, std::mt19937_64& rng,
                           std::vector<bool>* truth) {
  std::uniform_real_distribution<double> ux(20.0, 620.0), uy(20.0, 460.0);
  MatchSet m;
  truth->clear();
  for (int i = 0; i < n; ++i) {
    const Point2 a{ux(rng), uy(rng)};
    Point2 b = project_point(a, H);
    const bool outlier = outlier_every > 0 && i % outlier_every == 0;
    if (outlier) {
      Point2 c;
      do {
        c = {ux(rng), uy(rng)};
      } while (std::hypot(c.x - b.x, c.y - b.y) < 20.0);
      b = c;
    }
    m.pairs.push_back({i, i, a, b, 0.0});
    truth->push_back(!outlier);
  }
  m.inlier.assign(n, false);
  m.n_found = n;
  return m;
}

}  // namespace

TEST_CASE("project_point examples and inverse round trip") {
  const Homography I;
  CHECK(project_point({3, 4}, I) == Point2{3, 4});
  CHECK(project_point({3, 4}, make_homography(0, 1, 5, -2)) == Point2{8, 2});
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(0, 0) = s(1, 1) = 2.0;
  CHECK(project_point({3, 4}, Homography(s)) == Point2{6, 8});

  std::mt19937_64 rng(1);
  HomographySampling cfg{0.5, 0.2, 30.0, 5e-4, {320, 240}};
  std::uniform_real_distribution<double> u(0.0, 600.0);
  for (int i = 0; i < 50; ++i) {
    const auto H = sample_homography(cfg, rng);
    const Point2 p{u(rng), u(rng)};
    const Point2 q = project_point(project_point(p, H), H.inverse());
    CHECK(std::abs(q.x - p.x) < 1e-9);
    CHECK(std::abs(q.y - p.y) < 1e-9);
  }
}

TEST_CASE("project_point rejects points at infinity") {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = -1.0;
  CHECK_THROWS_AS(project_point({1.0, 0.0}, Homography(m)), DomainError);
}

TEST_CASE("homographies are normalized and must be invertible") {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity() * 4.0;
  CHECK(Homography(m).matrix() == Eigen::Matrix3d::Identity());
  CHECK_THROWS_AS(Homography(Eigen::Matrix3d::Zero()), DomainError);
  Eigen::Matrix3d sing = Eigen::Matrix3d::Identity();
  sing(1, 1) = 0.0;
  CHECK_THROWS_AS(Homography{sing}, DomainError);
}

TEST_CASE("sample_homography: zero bounds, determinism and rotation structure") {
  std::mt19937_64 rng(2);
  CHECK(sample_homography({}, rng).matrix() == Eigen::Matrix3d::Identity());
  HomographySampling cfg{0.3, 0.1, 10.0, 1e-4, {100, 80}};
  std::mt19937_64 a(3), b(3);
  CHECK(sample_homography(cfg, a).matrix() == sample_homography(cfg, b).matrix());

  const auto R = make_homography(std::numbers::pi / 2, 1.0, 0.0, 0.0, 0.0, 0.0, {100, 80});
  CHECK(std::abs(R(0, 0)) < 1e-15);
  CHECK(R(0, 1) == doctest::Approx(-1.0));
  CHECK(R(1, 0) == doctest::Approx(1.0));
  CHECK(std::abs(R(1, 1)) < 1e-15);
  CHECK(R(2, 0) == 0.0);
  CHECK(R(2, 1) == 0.0);
  CHECK(R(2, 2) == 1.0);
}

TEST_CASE("homography file round trip") {
  testutil::TempDir dir;
  const auto H = test_homography();
  write_homography(H, dir / "h.txt");
  CHECK(read_homography(dir / "h.txt").matrix().isApprox(H.matrix(), 1e-15));
  {
    std::ofstream f(dir / "short.txt");
    f << "1 0 0 0 1 0 0 0";
  }
  CHECK_THROWS_AS(read_homography(dir / "short.txt"), IoError);
  CHECK_THROWS_AS(read_homography(dir / "none.txt"), IoError);
}

TEST_CASE("warp_image: identity and integer translations") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageRGB I(6, 8);
  for (double& v : I.data()) v = u(rng);
  CHECK(warp_image(I, Homography()) == I);

  // Content moves with the translation: out(x) = I(x - t).
  const auto right = warp_image(I, make_homography(0, 1, 1, 0));
  const auto left = warp_image(I, make_homography(0, 1, -1, 0));
  for (int y = 0; y < 6; ++y) {
    for (int c = 0; c < 3; ++c) {
      CHECK(right.at(y, 0, c) == 0.0);
      CHECK(left.at(y, 7, c) == 0.0);
    }
    for (int x = 1; x < 8; ++x)
      for (int c = 0; c < 3; ++c) {
        CHECK(right.at(y, x, c) == I.at(y, x - 1, c));
        CHECK(left.at(y, x - 1, c) == I.at(y, x, c));
      }
  }
}

TEST_CASE("warp_image: forward then inverse warp keeps the interior above 40 dB") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int H = 96, W = 128;
  ImageRGB I(H, W);
  // Smooth fixture: a sum of low-frequency sinusoids.
  double phase[6];
  for (double& p : phase) p = u(rng) * 6.28;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c)
        I.at(y, x, c) = 0.5 + 0.2 * std::sin(x / 17.0 + phase[c]) * std::cos(y / 13.0 + phase[c + 3]);
  const auto Hm = make_homography(0.05, 1.02, 2.0, -1.5, 0.0, 0.0, {64, 48});
  const auto back = warp_image(warp_image(I, Hm), Hm.inverse());
  double se = 0.0;
  int n = 0;
  for (int y = 16; y < H - 16; ++y)
    for (int x = 16; x < W - 16; ++x)
      for (int c = 0; c < 3; ++c) {
        se += (back.at(y, x, c) - I.at(y, x, c)) * (back.at(y, x, c) - I.at(y, x, c));
        ++n;
      }
  const double psnr = 10.0 * std::log10(1.0 / (se / n));
  CHECK(psnr >= 40.0);
}

TEST_CASE("nn_match: identity pairing, nearest choice and tie-break") {
  FeatureSet a;
  for (int i = 0; i < 5; ++i) {
    a.points.push_back({double(i), 0});
    std::vector<double> v(6, 0.0);
    v[i] = 1.0;
    a.descriptors.push_back(unit(v));
  }
  auto m = nn_match(a, a, true);
  CHECK(m.n_found == 5);
  for (const auto& p : m.pairs) CHECK(p.index_a == p.index_b);

  FeatureSet one{{{0, 0}}, {{{0.0}, DescFormat::kFloat}}};
  FeatureSet two{{{0, 0}, {1, 1}}, {{{5.0}, DescFormat::kFloat}, {{3.0}, DescFormat::kFloat}}};
  m = nn_match(one, two, false);
  REQUIRE(m.pairs.size() == 1);
  CHECK(m.pairs[0].index_b == 1);
  CHECK(m.pairs[0].distance == 3.0);

  // Orthogonal descriptors: every distance is sqrt(2); lowest index wins.
  FeatureSet q{{{0, 0}}, {unit({0, 0, 0, 0, 0, 1})}};
  m = nn_match(q, a, false);
  CHECK(m.pairs[0].index_b == 0);

  CHECK_THROWS_AS(nn_match(FeatureSet{}, a), DomainError);
}

TEST_CASE("nn_match with mutual check is symmetric") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureSet a, b;
  for (int i = 0; i < 30; ++i) {
    a.points.push_back({double(i), 0});
    a.descriptors.push_back(unit({n(rng), n(rng), n(rng), n(rng)}));
  }
  for (int i = 0; i < 25; ++i) {
    b.points.push_back({double(i), 1});
    b.descriptors.push_back(unit({n(rng), n(rng), n(rng), n(rng)}));
  }
  const auto ab = nn_match(a, b, true);
  const auto ba = nn_match(b, a, true);
  REQUIRE(ab.pairs.size() == ba.pairs.size());
  std::set<std::pair<int, int>> s1, s2;
  for (const auto& p : ab.pairs) s1.insert({p.index_a, p.index_b});
  for (const auto& p : ba.pairs) s2.insert({p.index_b, p.index_a});
  CHECK(s1 == s2);
}

TEST_CASE("estimate_homography_dlt recovers an exact homography and rejects collinear sets") {
  const auto H = test_homography();
  std::vector<Point2> src{{10, 10}, {600, 30}, {580, 450}, {40, 400}, {300, 200}, {123, 321}};
  std::vector<Point2> dst;
  for (const auto& p : src) dst.push_back(project_point(p, H));
  const auto est = estimate_homography_dlt(src, dst);
  REQUIRE(est.has_value());
  CHECK(corner_error(*est, H, 480, 640) < 1e-8);
  const auto minimal = estimate_homography_dlt(std::span(src).first(4), std::span(dst).first(4));
  REQUIRE(minimal.has_value());
  CHECK(corner_error(*minimal, H, 480, 640) < 1e-8);

  std::vector<Point2> line{{0, 0}, {1, 1}, {2, 2}, {5, 5}, {9, 9}};
  CHECK_FALSE(estimate_homography_dlt(line, line).has_value());
}

TEST_CASE("ransac_homography: exact correspondences") {
  std::mt19937_64 rng(7);
  const auto H = test_homography();
  std::vector<bool> truth;
  const auto m = synthetic_matches(H, 50, 0, rng, &truth);
  const auto r = ransac_homography(m, {}, rng);
  CHECK(r.matches.n_match == 50);
  CHECK(corner_error(r.H, H, 480, 640) < 0.5);
  const auto metrics = matching_metrics(r.matches);
  CHECK(metrics.matching_rate == 1.0);
}

TEST_CASE("ransac_homography: outliers are rejected exactly") {
  std::mt19937_64 rng(8);
  const auto H = test_homography();
  std::vector<bool> truth;
  const auto m = synthetic_matches(H, 50, 5, rng, &truth);
  const auto r = ransac_homography(m, {3.0, 2000}, rng);
  CHECK(r.matches.n_match == 40);
  CHECK(r.matches.inlier == truth);
}

TEST_CASE("ransac_homography: determinism and errors") {
  std::mt19937_64 data(9);
  const auto H = test_homography();
  std::vector<bool> truth;
  const auto m = synthetic_matches(H, 60, 3, data, &truth);
  std::mt19937_64 a(1), b(1);
  const auto ra = ransac_homography(m, {3.0, 300}, a);
  const auto rb = ransac_homography(m, {3.0, 300}, b);
  CHECK(ra.H.matrix() == rb.H.matrix());
  CHECK(ra.matches.inlier == rb.matches.inlier);

  MatchSet few;
  few.pairs.resize(3);
  few.n_found = 3;
  CHECK_THROWS_AS(ransac_homography(few, {}, a), EstimationError);

  MatchSet line;
  for (int i = 0; i < 10; ++i) line.pairs.push_back({i, i, {double(i), double(i)}, {double(2 * i), double(i)}, 0.0});
  line.n_found = 10;
  CHECK_THROWS_AS(ransac_homography(line, {3.0, 100}, a), EstimationError);
}

TEST_CASE("matching_metrics") {
  MatchSet m;
  m.n_found = 100;
  m.n_match = 80;
  const auto r = matching_metrics(m);
  CHECK(r.matching_num == 80.0);
  CHECK(r.matching_rate == 0.8);
  m.n_found = 0;
  m.n_match = 0;
  CHECK_THROWS_AS(matching_metrics(m), DomainError);
}

TEST_CASE("feature files round trip") {
  testutil::TempDir dir;
  FeatureSet f;
  f.points = {{1.5, 2.25}, {300, 400}};
  f.descriptors = {unit({1, 2, 3}), unit({-1, 0, 2})};
  write_features(f, dir / "f.txt");
  const auto g = read_features(dir / "f.txt");
  REQUIRE(g.points.size() == 2);
  CHECK(g.points[1] == f.points[1]);
  CHECK(g.descriptors[0].values == f.descriptors[0].values);
  {
    std::ofstream bad(dir / "bad.txt");
    bad << "{\"count\": 3, \"dim\": 2, \"format\": \"float\"}\n1 2 0.6 0.8\n";
  }
  CHECK_THROWS_AS(read_features(dir / "bad.txt"), IoError);
}
