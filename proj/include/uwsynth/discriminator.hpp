#pragma once

#include <memory>
#include <random>
#include <span>
#include <vector>

#include "uwsynth/image.hpp"

namespace uwsynth {

/// `count` planes of height x width x channels, row-major with interleaved
/// channels, sample-major. A single image is a stack of one; a patch batch is a
/// stack of m single-channel patches.
class SampleStack {
 public:
  SampleStack() = default;
  SampleStack(int count, int height, int width, int channels, double fill = 0.0);

  static SampleStack from_image(const ImageRGB& img);
  static SampleStack from_images(std::span<const ImageRGB> imgs);

  int count() const { return count_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }

  double& at(int k, int y, int x, int c = 0) { return data_[index(k, y, x, c)]; }
  double at(int k, int y, int x, int c = 0) const { return data_[index(k, y, x, c)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  /// Member k of a 3-channel stack.
  ImageRGB image(int k) const;

  friend bool operator==(const SampleStack&, const SampleStack&) = default;

 private:
  std::size_t index(int k, int y, int x, int c) const {
    return ((static_cast<std::size_t>(k) * height_ + y) * width_ + x) * channels_ + c;
  }

  int count_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Contract for anything the adversarial loop can train against: one
/// deterministic score in [0,1] per stack member and exact gradients of the
/// scores with respect to both its own parameters and its input.
class Discriminator {
 public:
  virtual ~Discriminator() = default;

  virtual int channels() const = 0;
  virtual std::vector<double> scores(const SampleStack& input) const = 0;
  /// grad += sum_k upstream[k] * d score_k / d params
  virtual void accumulate_param_grad(const SampleStack& input, std::span<const double> upstream,
                                     std::span<double> grad) const = 0;
  /// sum_k upstream[k] * d score_k / d input
  virtual SampleStack input_grad(const SampleStack& input, std::span<const double> upstream) const = 0;

  virtual std::span<double> params() = 0;
  virtual std::span<const double> params() const = 0;
  virtual std::unique_ptr<Discriminator> clone() const = 0;
};

/// Logistic regression on summary statistics of each stack member:
/// per-channel mean, per-channel variance, mean |horizontal difference| and
/// mean |vertical difference| (both averaged over channels). With
/// `cross_sample_feature` every member also sees the variance of the
/// per-member means across the whole stack.
class MomentDiscriminator final : public Discriminator {
 public:
  MomentDiscriminator(int channels, bool cross_sample_feature);

  /// Weights ~ N(0, scale^2), bias zero.
  static MomentDiscriminator random_init(int channels, bool cross_sample_feature, double scale,
                                         std::mt19937_64& rng);

  int feature_count() const { return static_cast<int>(params_.size()) - 1; }
  /// One feature row per stack member.
  std::vector<std::vector<double>> features(const SampleStack& input) const;

  int channels() const override { return channels_; }
  std::vector<double> scores(const SampleStack& input) const override;
  void accumulate_param_grad(const SampleStack& input, std::span<const double> upstream,
                             std::span<double> grad) const override;
  SampleStack input_grad(const SampleStack& input, std::span<const double> upstream) const override;

  std::span<double> params() override { return params_; }
  std::span<const double> params() const override { return params_; }
  std::unique_ptr<Discriminator> clone() const override { return std::make_unique<MomentDiscriminator>(*this); }

 private:
  void check_input(const SampleStack& input) const;
  double logit(const std::vector<double>& f) const;

  int channels_;
  bool cross_sample_;
  std::vector<double> params_;  // feature weights followed by the bias
};

}  // namespace uwsynth
