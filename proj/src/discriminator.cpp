#include "uwsynth/discriminator.hpp"

#include <cmath>
#include <string>

namespace uwsynth {
namespace {

double sigmoid(double a) { return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a)); }

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Mean over all pixels and channels of each member.
std::vector<double> member_means(const SampleStack& s) {
  const double n = static_cast<double>(s.height()) * s.width() * s.channels();
  std::vector<double> means(s.count(), 0.0);
  for (int k = 0; k < s.count(); ++k) {
    for (int y = 0; y < s.height(); ++y)
      for (int x = 0; x < s.width(); ++x)
        for (int c = 0; c < s.channels(); ++c) means[k] += s.at(k, y, x, c);
    means[k] /= n;
  }
  return means;
}

}  // namespace

SampleStack::SampleStack(int count, int height, int width, int channels, double fill)
    : count_(count), height_(height), width_(width), channels_(channels) {
  if (count < 1 || height < 1 || width < 1 || channels < 1) throw ShapeError("sample stack dimensions must be >= 1");
  data_.assign(static_cast<std::size_t>(count) * height * width * channels, fill);
}

SampleStack SampleStack::from_image(const ImageRGB& img) { return from_images(std::span(&img, 1)); }

SampleStack SampleStack::from_images(std::span<const ImageRGB> imgs) {
  if (imgs.empty()) throw ShapeError("cannot stack zero images");
  SampleStack s(static_cast<int>(imgs.size()), imgs[0].height(), imgs[0].width(), 3);
  auto out = s.data_.begin();
  for (const auto& img : imgs) {
    require_same_shape(img, imgs[0], "stacked images");
    out = std::copy(img.data().begin(), img.data().end(), out);
  }
  return s;
}

ImageRGB SampleStack::image(int k) const {
  if (channels_ != 3 || k < 0 || k >= count_) throw ShapeError("stack member is not a 3-channel image");
  ImageRGB img(height_, width_);
  const auto n = img.data().size();
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(k * n), n, img.data().begin());
  return img;
}

MomentDiscriminator::MomentDiscriminator(int channels, bool cross_sample_feature)
    : channels_(channels), cross_sample_(cross_sample_feature) {
  if (channels < 1) throw DomainError("discriminator needs at least one channel");
  params_.assign(2 * channels + 2 + (cross_sample_ ? 1 : 0) + 1, 0.0);
}

MomentDiscriminator MomentDiscriminator::random_init(int channels, bool cross_sample_feature, double scale,
                                                     std::mt19937_64& rng) {
  MomentDiscriminator d(channels, cross_sample_feature);
  std::normal_distribution<double> normal(0.0, scale);
  for (int i = 0; i < d.feature_count(); ++i) d.params_[i] = normal(rng);
  return d;
}

void MomentDiscriminator::check_input(const SampleStack& input) const {
  if (input.channels() != channels_) {
    throw ShapeError("discriminator expects " + std::to_string(channels_) + " channels, got " +
                     std::to_string(input.channels()));
  }
}

std::vector<std::vector<double>> MomentDiscriminator::features(const SampleStack& s) const {
  check_input(s);
  const int K = s.count(), H = s.height(), W = s.width(), C = channels_;
  const double P = static_cast<double>(H) * W;
  std::vector<std::vector<double>> rows(K, std::vector<double>(feature_count(), 0.0));
  for (int k = 0; k < K; ++k) {
    auto& f = rows[k];
    for (int c = 0; c < C; ++c) {
      double sum = 0.0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) sum += s.at(k, y, x, c);
      const double mean = sum / P;
      double var = 0.0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) var += (s.at(k, y, x, c) - mean) * (s.at(k, y, x, c) - mean);
      f[c] = mean;
      f[C + c] = var / P;
    }
    double gh = 0.0, gv = 0.0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < C; ++c) {
          if (x + 1 < W) gh += std::abs(s.at(k, y, x + 1, c) - s.at(k, y, x, c));
          if (y + 1 < H) gv += std::abs(s.at(k, y + 1, x, c) - s.at(k, y, x, c));
        }
    if (W > 1) f[2 * C] = gh / (static_cast<double>(H) * (W - 1) * C);
    if (H > 1) f[2 * C + 1] = gv / (static_cast<double>(H - 1) * W * C);
  }
  if (cross_sample_) {
    const auto means = member_means(s);
    double mu = 0.0;
    for (double m : means) mu += m;
    mu /= K;
    double v = 0.0;
    for (double m : means) v += (m - mu) * (m - mu);
    for (auto& f : rows) f[2 * C + 2] = v / K;
  }
  return rows;
}

double MomentDiscriminator::logit(const std::vector<double>& f) const {
  double a = params_.back();
  for (std::size_t i = 0; i < f.size(); ++i) a += params_[i] * f[i];
  return a;
}

std::vector<double> MomentDiscriminator::scores(const SampleStack& input) const {
  const auto rows = features(input);
  std::vector<double> out(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) out[k] = sigmoid(logit(rows[k]));
  return out;
}

void MomentDiscriminator::accumulate_param_grad(const SampleStack& input, std::span<const double> upstream,
                                                std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeError("discriminator gradient buffer has the wrong size");
  if (upstream.size() != static_cast<std::size_t>(input.count())) throw ShapeError("one upstream value per member");
  const auto rows = features(input);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double s = sigmoid(logit(rows[k]));
    const double da = upstream[k] * s * (1.0 - s);
    for (std::size_t i = 0; i < rows[k].size(); ++i) grad[i] += da * rows[k][i];
    grad.back() += da;
  }
}

SampleStack MomentDiscriminator::input_grad(const SampleStack& s, std::span<const double> upstream) const {
  if (upstream.size() != static_cast<std::size_t>(s.count())) throw ShapeError("one upstream value per member");
  const auto rows = features(s);
  const int K = s.count(), H = s.height(), W = s.width(), C = channels_;
  const double P = static_cast<double>(H) * W;
  SampleStack g(K, H, W, C);
  double da_total = 0.0;
  for (int k = 0; k < K; ++k) {
    const auto& f = rows[k];
    const double sc = sigmoid(logit(f));
    const double da = upstream[k] * sc * (1.0 - sc);
    da_total += da;
    for (int c = 0; c < C; ++c) {
      const double w_mean = params_[c] * da / P;
      const double w_var = params_[C + c] * da * 2.0 / P;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) g.at(k, y, x, c) += w_mean + w_var * (s.at(k, y, x, c) - f[c]);
    }
    if (W > 1) {
      const double wh = params_[2 * C] * da / (static_cast<double>(H) * (W - 1) * C);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x + 1 < W; ++x)
          for (int c = 0; c < C; ++c) {
            const double sg = sign(s.at(k, y, x + 1, c) - s.at(k, y, x, c));
            g.at(k, y, x + 1, c) += wh * sg;
            g.at(k, y, x, c) -= wh * sg;
          }
    }
    if (H > 1) {
      const double wv = params_[2 * C + 1] * da / (static_cast<double>(H - 1) * W * C);
      for (int y = 0; y + 1 < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) {
            const double sg = sign(s.at(k, y + 1, x, c) - s.at(k, y, x, c));
            g.at(k, y + 1, x, c) += wv * sg;
            g.at(k, y, x, c) -= wv * sg;
          }
    }
  }
  if (cross_sample_) {
    // The shared feature feeds every member's logit.
    const double n = P * C;
    const auto means = member_means(s);
    double mu = 0.0;
    for (double m : means) mu += m;
    mu /= K;
    const double wb = params_[2 * C + 2] * da_total;
    for (int k = 0; k < K; ++k) {
      const double d = wb * 2.0 * (means[k] - mu) / K / n;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int c = 0; c < C; ++c) g.at(k, y, x, c) += d;
    }
  }
  return g;
}

}  // namespace uwsynth
