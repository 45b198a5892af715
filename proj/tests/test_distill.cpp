#include <doctest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "uwsynth/distill.hpp"

using namespace uwsynth;

namespace {

ScoreMap random_scores(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ScoreMap X(h, w);
  for (double& v : X.data()) v = u(rng);
  return X;
}

DescriptorMap random_float_desc(int h, int w, int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  DescriptorMap D(h, w, dim, DescFormat::kFloat);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto d = D.at(y, x);
      double norm = 0.0;
      for (double& v : d) {
        v = n(rng);
        norm += v * v;
      }
      for (double& v : d) v /= std::sqrt(norm);
    }
  return D;
}

Descriptor random_binary(int dim, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.5);
  Descriptor d{std::vector<double>(dim), DescFormat::kBinary};
  for (double& v : d.values) v = coin(rng) ? 1.0 : -1.0;
  return d;
}

Descriptor unit_float(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  return {v, DescFormat::kFloat};
}

// Scalar oracles: straight loops over the definitions.
double oracle_kd(const ScoreMap& Xs, const ScoreMap& Xt, const DescriptorMap& Ds, const DescriptorMap& Dt,
                 double alpha) {
  long double fx = 0.0L, fd = 0.0L;
  for (int y = 0; y < Xs.height(); ++y)
    for (int x = 0; x < Xs.width(); ++x) {
      const long double d = Xs.at(y, x) - Xt.at(y, x);
      fx += d * d;
      for (int c = 0; c < Ds.dim(); ++c) {
        const long double e = Ds.at(y, x)[c] - Dt.at(y, x)[c];
        fd += e * e;
      }
    }
  const long double n = static_cast<long double>(Xs.height()) * Xs.width();
  return static_cast<double>(fx / n + alpha * fd / (n * Ds.dim()));
}

double oracle_peak_point(const ScoreMap& X, int cx, int cy, int S) {
  const int h = S / 2;
  long double z = 0.0L, acc = 0.0L;
  for (int y = cy - h; y <= cy + h; ++y)
    for (int x = cx - h; x <= cx + h; ++x) z += std::exp(static_cast<long double>(X.at(y, x)));
  for (int y = cy - h; y <= cy + h; ++y)
    for (int x = cx - h; x <= cx + h; ++x) {
      const long double r = std::sqrt(static_cast<long double>((x - cx) * (x - cx) + (y - cy) * (y - cy)));
      acc += r * std::exp(static_cast<long double>(X.at(y, x))) / z;
    }
  return static_cast<double>(acc);
}

double oracle_float_dist(const Descriptor& a, const Descriptor& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
  return static_cast<double>(std::sqrt(s));
}

}  // namespace

TEST_CASE("kd_loss: worked examples") {
  std::mt19937_64 rng(1);
  const auto Xt = random_scores(6, 7, rng);
  const auto Dt = random_float_desc(6, 7, 4, rng);
  const DistillConfig cfg;
  CHECK(kd_loss(Xt, Xt, Dt, Dt, cfg) == 0.0);

  ScoreMap Xs = Xt;
  for (double& v : Xs.data()) v += 0.1;
  CHECK(kd_loss(Xs, Xt, Dt, Dt, cfg) == doctest::Approx(0.01).epsilon(1e-12));

  // Descriptor mean square of 0.04: every entry off by 0.2.
  DescriptorMap Ds = Dt;
  for (double& v : Ds.data()) v += 0.2;
  CHECK(kd_loss(Xt, Xt, Ds, Dt, cfg) == doctest::Approx(4e-4).epsilon(1e-12));
}

TEST_CASE("kd_loss matches the scalar oracle on random 16x16, C=8 fixtures") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto Xs = random_scores(16, 16, rng), Xt = random_scores(16, 16, rng);
    const auto Ds = random_float_desc(16, 16, 8, rng), Dt = random_float_desc(16, 16, 8, rng);
    DistillConfig cfg;
    cfg.alpha_kd = 0.01 * (trial + 1);
    const double got = kd_loss(Xs, Xt, Ds, Dt, cfg);
    CHECK(std::abs(got - oracle_kd(Xs, Xt, Ds, Dt, cfg.alpha_kd)) < 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("kd_loss: KL option and shape errors") {
  std::mt19937_64 rng(3);
  const auto Xt = random_scores(5, 5, rng);
  const auto Dt = random_float_desc(5, 5, 3, rng);
  DistillConfig cfg;
  cfg.f_x = Similarity::kKL;
  cfg.alpha_kd = 0.0;
  CHECK(kd_loss(Xt, Xt, Dt, Dt, cfg) == doctest::Approx(0.0).epsilon(1e-15));
  // Normalization makes the KL term scale invariant in the student.
  ScoreMap half = Xt;
  for (double& v : half.data()) v *= 0.5;
  CHECK(std::abs(kd_loss(half, Xt, Dt, Dt, cfg)) < 1e-14);
  const auto Xs = random_scores(5, 5, rng);
  long double st = 0.0L, ss = 0.0L, kl = 0.0L;
  for (std::size_t i = 0; i < Xt.data().size(); ++i) {
    st += Xt.data()[i];
    ss += Xs.data()[i];
  }
  for (std::size_t i = 0; i < Xt.data().size(); ++i) {
    const long double p = Xt.data()[i] / st, q = Xs.data()[i] / ss;
    kl += p * std::log(p / q);
  }
  CHECK(kd_loss(Xs, Xt, Dt, Dt, cfg) == doctest::Approx(static_cast<double>(kl)).epsilon(1e-12));

  CHECK_THROWS_AS(kd_loss(ScoreMap(4, 5), Xt, Dt, Dt, DistillConfig{}), ShapeError);
  CHECK_THROWS_AS(kd_loss(Xt, Xt, DescriptorMap(5, 5, 2, DescFormat::kFloat), Dt, DistillConfig{}), ShapeError);
}

TEST_CASE("select_features: spike, tie-break and NMS spacing") {
  ScoreMap X(20, 20, 0.0);
  X.at(10, 10) = 1.0;
  auto pts = select_features(X, 1, 4);
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].x == 10);
  CHECK(pts[0].y == 10);

  ScoreMap T(20, 20, 0.0);
  T.at(12, 3) = 0.9;
  T.at(4, 15) = 0.9;
  pts = select_features(T, 1, 4);
  CHECK(pts[0].x == 15);
  CHECK(pts[0].y == 4);

  std::mt19937_64 rng(4);
  const auto R = random_scores(40, 40, rng);
  pts = select_features(R, 1000, 4);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) CHECK(std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y) >= 4.0);
  for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i - 1].score >= pts[i].score);
}

TEST_CASE("select_features: exactly 500 points from a 480x640 map") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  ScoreMap X(480, 640);
  for (double& v : X.data()) v = u(rng);
  CHECK(select_features(X, 500, 4).size() == 500);
}

TEST_CASE("select_features is invariant under monotone rescaling") {
  std::mt19937_64 rng(6);
  const auto X = random_scores(30, 30, rng);
  ScoreMap Y = X;
  for (double& v : Y.data()) v = std::pow(v, 3.0) * 0.5;
  const auto a = select_features(X, 40, 3);
  const auto b = select_features(Y, 40, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
  }
}

TEST_CASE("dispersity_peak_loss: worked examples") {
  const ScoreMap flat(9, 9, 0.4);
  const std::vector<FeaturePoint> center{{4, 4, 0.4}};
  CHECK(dispersity_peak_loss(flat, center, 1) == 0.0);
  CHECK(dispersity_peak_loss(flat, center, 3) == doctest::Approx(1.0729838054991534).epsilon(1e-14));
  CHECK(dispersity_peak_loss(flat, center, 3) == doctest::Approx((4.0 + 4.0 * std::sqrt(2.0)) / 9.0).epsilon(1e-14));

  ScoreMap peak(9, 9, 0.0);
  peak.at(4, 4) = 30.0;
  CHECK(dispersity_peak_loss(peak, center, 3) < 1e-8);
  CHECK(dispersity_peak_loss(flat, {}, 3) == 0.0);
}

TEST_CASE("dispersity_peak_loss skips border patches and matches the oracle") {
  std::mt19937_64 rng(7);
  const auto X = random_scores(16, 16, rng);
  const std::vector<FeaturePoint> pts{{0, 0, 0}, {5, 7, 0}, {15, 3, 0}, {9, 12, 0}, {2, 2, 0}, {13, 13, 0}};
  for (int S : {3, 5}) {
    double sum = 0.0;
    int n = 0;
    for (const auto& p : pts) {
      const int h = S / 2;
      const int x = static_cast<int>(p.x), y = static_cast<int>(p.y);
      if (x - h < 0 || y - h < 0 || x + h > 15 || y + h > 15) continue;
      const double v = oracle_peak_point(X, x, y, S);
      CHECK(v <= std::sqrt(2.0) * h);
      sum += v;
      ++n;
    }
    CHECK(std::abs(dispersity_peak_loss(X, pts, S) - sum / n) < 1e-12);
  }
  CHECK_THROWS_AS(dispersity_peak_loss(X, pts, 4), DomainError);
}

TEST_CASE("binarize_ste: forward sign and clipped backward") {
  DescriptorMap D(1, 1, 5, DescFormat::kFloat);
  const double vals[] = {0.3, -0.3, 0.0, 0.5, 1.5};
  for (int i = 0; i < 5; ++i) D.data()[i] = vals[i];
  const auto B = binarize_ste(D);
  CHECK(B.format() == DescFormat::kBinary);
  CHECK(B.data()[0] == 1.0);
  CHECK(B.data()[1] == -1.0);
  CHECK(B.data()[2] == 1.0);
  const std::vector<double> up(5, 1.0);
  const auto g = binarize_ste_backward(D, up);
  CHECK(g[3] == 1.0);
  CHECK(g[4] == 0.0);
  CHECK_THROWS_AS(binarize_ste(B), DomainError);
}

TEST_CASE("descriptor_distance: binary examples and the Hamming identity") {
  std::mt19937_64 rng(8);
  const auto d = random_binary(256, rng);
  Descriptor neg = d;
  for (double& v : neg.values) v = -v;
  CHECK(descriptor_distance(d, d, 256) == 0.0);
  CHECK(descriptor_distance(d, neg, 256) == 256.0);
  Descriptor half = d;
  for (int i = 0; i < 128; ++i) half.values[i] = -half.values[i];
  CHECK(descriptor_distance(d, half, 256) == 128.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_binary(64, rng), b = random_binary(64, rng);
    int hamming = 0;
    for (int i = 0; i < 64; ++i) hamming += a.values[i] != b.values[i];
    CHECK(descriptor_distance(a, b, 64) == hamming);
  }
  const auto f = unit_float({1, 0, 0});
  CHECK_THROWS_AS(descriptor_distance(d, f, 256), DomainError);
  CHECK(descriptor_distance(f, unit_float({-1, 0, 0}), 1) == doctest::Approx(2.0));
}

TEST_CASE("matching_loss: worked examples") {
  DistillConfig cfg;
  cfg.P = 0.2;
  cfg.Q = 1.0;
  cfg.Z = 1.0;
  // Two unit vectors 0.5 apart.
  const double ang = 2.0 * std::asin(0.25);
  const std::vector<Descriptor> s{unit_float({1, 0})};
  const std::vector<Descriptor> h{unit_float({std::cos(ang), std::sin(ang)})};
  const std::vector<Correspondence> corr{{0, 0}};
  auto r = matching_loss(s, h, corr, cfg);
  CHECK_FALSE(r.empty_correspondence);
  CHECK(r.value == doctest::Approx(0.09).epsilon(1e-12));

  std::mt19937_64 rng(9);
  DistillConfig bcfg = DistillConfig::for_format(DescFormat::kBinary, 256);
  CHECK(bcfg.P == 0.0);
  CHECK(bcfg.Q == 128.0);
  const auto d = random_binary(256, rng);
  Descriptor far = d;
  for (int i = 0; i < 64; ++i) far.values[i] = -far.values[i];
  const std::vector<Descriptor> bs{d};
  const std::vector<Descriptor> bh{d, far};
  r = matching_loss(bs, bh, corr, bcfg);
  CHECK(r.value == doctest::Approx(0.03125).epsilon(1e-14));

  // Both hinges inactive.
  const std::vector<Descriptor> hs{unit_float({1, 0}), unit_float({-1, 0})};
  CHECK(matching_loss(s, hs, corr, cfg).value == 0.0);

  r = matching_loss(s, h, {}, cfg);
  CHECK(r.empty_correspondence);
  CHECK(r.value == 0.0);
}

TEST_CASE("matching_loss matches a brute-force oracle including unmatched points") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Descriptor> s, h;
    for (int i = 0; i < 12; ++i) s.push_back(unit_float({n(rng), n(rng), n(rng), n(rng), n(rng), n(rng), n(rng), n(rng)}));
    for (int j = 0; j < 9; ++j) h.push_back(unit_float({n(rng), n(rng), n(rng), n(rng), n(rng), n(rng), n(rng), n(rng)}));
    std::vector<Correspondence> corr;
    for (int i = 0; i < 12; i += 2) corr.push_back({i, (i * 5 + trial) % 9});
    DistillConfig cfg;
    cfg.P = 0.3;
    cfg.Q = 1.2;
    long double acc = 0.0L;
    for (int i = 0; i < 12; ++i) {
      int j = -1;
      for (const auto& c : corr)
        if (c.student == i) j = c.target;
      const double p = j >= 0 ? std::max(0.0, oracle_float_dist(s[i], h[j]) - cfg.P) : 0.0;
      double neg = 1e300;
      for (int k = 0; k < 9; ++k)
        if (k != j) neg = std::min(neg, oracle_float_dist(s[i], h[k]));
      const double q = std::max(0.0, cfg.Q - neg);
      acc += static_cast<long double>(p) * p + static_cast<long double>(q) * q;
    }
    const double expect = static_cast<double>(acc / 9.0L);
    CHECK(std::abs(matching_loss(s, h, corr, cfg).value - expect) < 1e-12);
  }
}

TEST_CASE("build_correspondence: warp and accept the nearest within the radius") {
  const Homography H = make_homography(0.0, 1.0, 10.0, -5.0);
  const std::vector<FeaturePoint> student{{20, 20, 1}, {50, 50, 1}, {5, 5, 1}};
  const std::vector<FeaturePoint> target{{31.5, 15, 1}, {30, 16, 1}, {60, 45, 1}, {100, 100, 1}};
  const auto corr = build_correspondence(student, target, H, 3.0);
  REQUIRE(corr.size() == 2);
  CHECK(corr[0].student == 0);
  CHECK(corr[0].target == 1);
  CHECK(corr[1].student == 1);
  CHECK(corr[1].target == 2);
}

TEST_CASE("total_distill_loss") {
  DistillConfig cfg;
  CHECK(total_distill_loss({0.2, 0.3, 0.1}, cfg) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(total_distill_loss({0.0, 0.0, 0.0}, cfg) == 0.0);
  cfg.gamma1 = cfg.gamma2 = 0.0;
  CHECK(total_distill_loss({0.2, 0.3, 0.1}, cfg) == 0.2);
}

TEST_CASE("distill config validation") {
  DistillConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.S = 4;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
  cfg = DistillConfig{};
  cfg.Q = cfg.P;
  CHECK_THROWS_AS(cfg.validate(), DomainError);
}

TEST_CASE("score and descriptor maps survive a tensor file round trip") {
  testutil::TempDir dir;
  std::mt19937_64 rng(11);
  ScoreMap X = random_scores(6, 9, rng);
  for (double& v : X.data()) v = static_cast<float>(v);
  write_score_map(X, dir / "x.bin");
  CHECK(read_score_map(dir / "x.bin") == X);

  const auto D = random_float_desc(6, 9, 8, rng);
  write_descriptor_map(D, dir / "d.bin");
  const auto back = read_descriptor_map(dir / "d.bin");
  CHECK(back.dim() == 8);
  for (std::size_t i = 0; i < D.data().size(); ++i) CHECK(back.data()[i] == doctest::Approx(D.data()[i]).epsilon(1e-7));

  const auto B = binarize_ste(D);
  write_descriptor_map(B, dir / "b.bin");
  CHECK(read_descriptor_map(dir / "b.bin") == B);
  CHECK_THROWS_AS(read_score_map(dir / "d.bin"), IoError);
  CHECK_THROWS_AS(read_descriptor_map(dir / "none.bin"), IoError);
}
