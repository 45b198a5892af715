#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "uwsynth/difffit.hpp"
#include "uwsynth/discriminator.hpp"
#include "uwsynth/formation.hpp"
#include "uwsynth/imgcore.hpp"
#include "uwsynth/noisegen.hpp"

namespace uwsynth {

struct LsganLosses {
  double gen = 0.0;
  double disc = 0.0;
};

/// gen = mean (d_synth - 1)^2, disc = mean d_synth^2 + mean (d_real - 1)^2.
LsganLosses lsgan_losses(std::span<const double> d_synth, std::span<const double> d_real);

/// gen = mean (dd_random - 1)^2, disc = mean dd_random^2 + mean (dd_fixed - 1)^2.
LsganLosses dist_losses(std::span<const double> dd_random, std::span<const double> dd_fixed);

/// L_gen + lambda * L_dist_gen.
double generator_objective(double l_gen, double l_dist_gen, double lambda);

/// m single-channel patches cut from one grid cell each.
struct PatchBatch {
  SampleStack patches;
  std::vector<int> cells;  // row-major cell index per member
};

struct PatchBatches {
  PatchBatch fixed;   // one shared cell for every member
  PatchBatch random;  // an independent cell per member
  int cells_y = 0;
  int cells_x = 0;
};

/// Cuts each map into floor(H/h) x floor(W/w) cells; the right and bottom
/// remainder is ignored.
PatchBatches grid_patch_batches(std::span<const NoiseMap> maps, int grid_w, int grid_h, std::mt19937_64& rng);

/// Adds a patch-stack gradient back onto the maps it was cut from.
void scatter_patch_grad(const SampleStack& grad, std::span<const int> cells, int cells_x,
                        std::span<NoiseMap> maps);

enum class DiscRole { kImage, kDistribution };

/// Builds a freshly initialized discriminator for a role.
using DiscriminatorFactory = std::function<std::unique_ptr<Discriminator>(DiscRole, std::mt19937_64&)>;

/// Moment discriminators: 3 channels for images, 1 channel plus the
/// cross-sample feature for noise patches.
DiscriminatorFactory moment_discriminator_factory(double init_scale = 0.1);

struct GanConfig {
  double lambda = 0.1;
  int batch_m = 4;
  int grid_w = 16;
  int grid_h = 16;
  int stage1_iters = 10000;
  int stage2_iters = 10000;
  int disc_period_stage1 = 5;
  int disc_period_stage2 = 10;
  double lr_physics = 1e-3;
  double lr_disc_stage1 = 1e-4;
  double lr_generator = 1e-5;
  double lr_disc_stage2 = 1e-5;
  int latent_dim = kDefaultLatentDim;
  int noise_grid = kDefaultNoiseGrid;
  double noise_weight_scale = 0.5;
  double noise_bias = -3.0;
  WaterParams init{{0.3, 0.3, 0.3}, {0.5, 0.5, 0.5}, 0.3};

  /// Throws DomainError naming the offending field.
  void validate() const;
};

struct HistoryRow {
  int iteration = 0;
  int stage = 0;
  double l_gen = 0.0;
  double l_disc = 0.0;
  std::optional<double> l_dist_gen;
  std::optional<double> l_dist_disc;
  WaterParams params;
};

struct TrainResult {
  WaterParams params;
  GeneratorParams generator;
  WaterParams params_after_stage1;
  GeneratorParams generator_initial;
  GeneratorParams generator_after_stage1;
  std::unique_ptr<Discriminator> disc_image;  // image discriminator at the end of stage 1
  std::vector<HistoryRow> history;
};

/// Two-stage adversarial fit. Stage 1 holds M at zero and trains the physical
/// parameters against the image discriminator. Stage 2 freezes them, resets
/// both discriminators and trains the noise generator. All randomness is
/// derived from `seed`.
TrainResult train_adversarial(std::span<const RgbdScene> scenes, std::span<const ImageRGB> targets,
                              const GanConfig& cfg, std::uint64_t seed,
                              const DiscriminatorFactory& factory = moment_discriminator_factory());

/// Fraction of correct labels when thresholding scores at 0.5
/// (synthetic below, target at or above).
double discriminator_accuracy(const Discriminator& disc, std::span<const ImageRGB> synthetic,
                              std::span<const ImageRGB> targets);

/// FNV-1a over the raw bytes of the parameters.
std::uint64_t param_hash(const WaterParams& p);
std::uint64_t param_hash(const GeneratorParams& g);

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path);

}  // namespace uwsynth
