#include "uwsynth/adversarial.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace uwsynth {
namespace {

// Per-purpose stream offsets so that e.g. changing the batch size does not
// shift the latent draws.
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kLatentStream = 2;
constexpr std::uint64_t kPatchStream = 3;
constexpr std::uint64_t kInitStream = 4;

void require_nonempty(std::span<const double> v, const char* what) {
  if (v.empty()) throw DomainError(std::string(what) + ": empty score list");
}

double mean_sq_offset(std::span<const double> v, double target) {
  double acc = 0.0;
  for (double d : v) acc += (d - target) * (d - target);
  return acc / static_cast<double>(v.size());
}

std::uint64_t fnv1a(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void add_into(ParamGrads& acc, const ParamGrads& g) {
  for (int c = 0; c < 3; ++c) {
    acc.d_beta[c] += g.d_beta[c];
    acc.d_binf[c] += g.d_binf[c];
  }
  acc.d_sigma_k += g.d_sigma_k;
}

void check_loss(double v, int stage, int iteration, const char* name) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string("non-finite ") + name + " in stage " + std::to_string(stage) + " at iteration " +
                        std::to_string(iteration));
  }
}

// Upstream gradients of the LSGAN terms with respect to each score.
std::vector<double> toward(std::span<const double> scores, double target, double scale) {
  std::vector<double> u(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    u[k] = scale * 2.0 * (scores[k] - target) / static_cast<double>(scores.size());
  }
  return u;
}

void disc_step(Discriminator& d, AdamState& state, const SampleStack& fake, std::span<const double> fake_scores,
               const SampleStack& real, std::span<const double> real_scores) {
  std::vector<double> grad(d.params().size(), 0.0);
  d.accumulate_param_grad(fake, toward(fake_scores, 0.0, 1.0), grad);
  d.accumulate_param_grad(real, toward(real_scores, 1.0, 1.0), grad);
  adam_step(state, d.params(), grad);
}

}  // namespace

LsganLosses lsgan_losses(std::span<const double> d_synth, std::span<const double> d_real) {
  require_nonempty(d_synth, "lsgan_losses");
  require_nonempty(d_real, "lsgan_losses");
  return {mean_sq_offset(d_synth, 1.0), mean_sq_offset(d_synth, 0.0) + mean_sq_offset(d_real, 1.0)};
}

LsganLosses dist_losses(std::span<const double> dd_random, std::span<const double> dd_fixed) {
  require_nonempty(dd_random, "dist_losses");
  require_nonempty(dd_fixed, "dist_losses");
  return {mean_sq_offset(dd_random, 1.0), mean_sq_offset(dd_random, 0.0) + mean_sq_offset(dd_fixed, 1.0)};
}

double generator_objective(double l_gen, double l_dist_gen, double lambda) {
  if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
  return l_gen + lambda * l_dist_gen;
}

PatchBatches grid_patch_batches(std::span<const NoiseMap> maps, int grid_w, int grid_h, std::mt19937_64& rng) {
  if (maps.size() < 2) throw DomainError("grid_patch_batches needs at least two maps");
  if (grid_w < 1 || grid_h < 1) throw DomainError("grid cell size must be >= 1");
  const int H = maps[0].height();
  const int W = maps[0].width();
  for (const auto& m : maps) require_same_shape(m, maps[0], "grid_patch_batches maps");
  if (grid_h > H || grid_w > W) {
    throw DomainError("grid cell " + std::to_string(grid_w) + "x" + std::to_string(grid_h) + " larger than map " +
                      std::to_string(W) + "x" + std::to_string(H));
  }
  PatchBatches out;
  out.cells_y = H / grid_h;
  out.cells_x = W / grid_w;
  const int m = static_cast<int>(maps.size());
  std::uniform_int_distribution<int> pick(0, out.cells_y * out.cells_x - 1);
  const int shared = pick(rng);
  out.fixed.cells.assign(m, shared);
  out.random.cells.resize(m);
  for (int& c : out.random.cells) c = pick(rng);

  auto cut = [&](PatchBatch& batch) {
    batch.patches = SampleStack(m, grid_h, grid_w, 1);
    for (int k = 0; k < m; ++k) {
      const int y0 = batch.cells[k] / out.cells_x * grid_h;
      const int x0 = batch.cells[k] % out.cells_x * grid_w;
      for (int y = 0; y < grid_h; ++y)
        for (int x = 0; x < grid_w; ++x) batch.patches.at(k, y, x) = maps[k].at(y0 + y, x0 + x);
    }
  };
  cut(out.fixed);
  cut(out.random);
  return out;
}

void scatter_patch_grad(const SampleStack& grad, std::span<const int> cells, int cells_x,
                        std::span<NoiseMap> maps) {
  if (cells.size() != maps.size() || grad.count() != static_cast<int>(maps.size()) || grad.channels() != 1) {
    throw ShapeError("scatter_patch_grad: patch stack does not match the maps");
  }
  const int h = grad.height();
  const int w = grad.width();
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const int y0 = cells[k] / cells_x * h;
    const int x0 = cells[k] % cells_x * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) maps[k].at(y0 + y, x0 + x) += grad.at(static_cast<int>(k), y, x);
  }
}

DiscriminatorFactory moment_discriminator_factory(double init_scale) {
  return [init_scale](DiscRole role, std::mt19937_64& rng) -> std::unique_ptr<Discriminator> {
    if (role == DiscRole::kImage) {
      return std::make_unique<MomentDiscriminator>(MomentDiscriminator::random_init(3, false, init_scale, rng));
    }
    return std::make_unique<MomentDiscriminator>(MomentDiscriminator::random_init(1, true, init_scale, rng));
  };
}

void GanConfig::validate() const {
  auto fail = [](const std::string& msg) { throw DomainError(msg); };
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (batch_m < 2) fail("batch_m must be >= 2");
  if (grid_w < 1 || grid_h < 1) fail("grid cell size must be >= 1");
  if (stage1_iters < 0 || stage2_iters < 0) fail("stage lengths must be >= 0");
  if (disc_period_stage1 < 1 || disc_period_stage2 < 1) fail("discriminator update periods must be >= 1");
  for (double lr : {lr_physics, lr_disc_stage1, lr_generator, lr_disc_stage2}) {
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("learning rates must be finite and > 0");
  }
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (noise_grid < 1) fail("noise_grid must be >= 1");
  if (!(noise_weight_scale >= 0.0) || !std::isfinite(noise_bias)) fail("noise initialization must be finite");
  init.validate();
}

TrainResult train_adversarial(std::span<const RgbdScene> scenes, std::span<const ImageRGB> targets,
                              const GanConfig& cfg, std::uint64_t seed, const DiscriminatorFactory& factory) {
  cfg.validate();
  if (scenes.empty()) throw DomainError("train_adversarial needs at least one scene");
  if (targets.empty()) throw DomainError("train_adversarial needs at least one target image");
  const int H = scenes[0].rgb.height();
  const int W = scenes[0].rgb.width();
  for (const auto& s : scenes) {
    require_same_shape(s.rgb, scenes[0].rgb, "training scenes");
    require_same_shape(s.rgb, s.depth, "scene rgb and depth");
  }
  if (cfg.stage2_iters > 0 && cfg.lambda > 0.0 && (cfg.grid_w > W || cfg.grid_h > H)) {
    throw DomainError("grid cell larger than the render size");
  }
  std::vector<ImageRGB> cropped;
  cropped.reserve(targets.size());
  for (const auto& t : targets) cropped.push_back(center_crop(t, H, W));

  std::mt19937_64 batch_rng(seed + kBatchStream);
  std::mt19937_64 latent_rng(seed + kLatentStream);
  std::mt19937_64 patch_rng(seed + kPatchStream);
  std::mt19937_64 init_rng(seed + kInitStream);

  const int m = cfg.batch_m;
  const auto n_scenes = static_cast<long long>(scenes.size());
  std::uniform_int_distribution<std::size_t> pick_target(0, cropped.size() - 1);
  long long scene_cursor = 0;

  std::vector<int> batch_scene(m);
  std::vector<ImageRGB> batch_real;
  auto draw_batch = [&] {
    batch_real.clear();
    for (int k = 0; k < m; ++k) batch_scene[k] = static_cast<int>(scene_cursor++ % n_scenes);
    for (int k = 0; k < m; ++k) batch_real.push_back(cropped[pick_target(batch_rng)]);
  };

  TrainResult result;
  WaterParams p = cfg.init;
  GeneratorParams G = GeneratorParams::random_init(cfg.noise_grid, cfg.noise_grid, cfg.latent_dim,
                                                   cfg.noise_weight_scale, cfg.noise_bias, init_rng);
  result.generator_initial = G;
  const NoiseMap zero_noise(H, W, 0.0);
  int iteration = 0;

  // Stage 1: physical parameters against the image discriminator, M = 0.
  {
    auto D = factory(DiscRole::kImage, init_rng);
    AdamState phys(kWaterParamCount, AdamConfig{.lr = cfg.lr_physics});
    AdamState dstate(D->params().size(), AdamConfig{.lr = cfg.lr_disc_stage1});
    const std::uint64_t g_hash = param_hash(G);
    for (int i = 0; i < cfg.stage1_iters; ++i, ++iteration) {
      draw_batch();
      std::vector<ImageRGB> renders;
      for (int k = 0; k < m; ++k) {
        const auto& s = scenes[batch_scene[k]];
        renders.push_back(render_full(s.rgb, s.depth, p, zero_noise));
      }
      const auto fake = SampleStack::from_images(renders);
      const auto real = SampleStack::from_images(batch_real);
      const auto ds = D->scores(fake);
      const auto dr = D->scores(real);
      const auto L = lsgan_losses(ds, dr);
      check_loss(L.gen, 1, iteration, "L_gen");
      check_loss(L.disc, 1, iteration, "L_disc");

      const auto g_img = D->input_grad(fake, toward(ds, 1.0, 1.0));
      ParamGrads total;
      for (int k = 0; k < m; ++k) {
        const auto& s = scenes[batch_scene[k]];
        add_into(total, render_backward(s.rgb, s.depth, p, zero_noise, g_img.image(k)));
      }
      try {
        adam_step(phys, p, total);
        if (i % cfg.disc_period_stage1 == 0) disc_step(*D, dstate, fake, ds, real, dr);
      } catch (const TrainingError& e) {
        throw TrainingError("stage 1, iteration " + std::to_string(iteration) + ": " + e.what());
      }
      result.history.push_back({iteration, 1, L.gen, L.disc, std::nullopt, std::nullopt, p});
    }
    if (param_hash(G) != g_hash) throw std::logic_error("stage 1 modified the noise generator");
    result.disc_image = D->clone();
  }
  result.params_after_stage1 = p;
  result.generator_after_stage1 = G;

  // Stage 2: noise generator with fresh discriminators, physics frozen.
  {
    const bool use_dist = cfg.lambda > 0.0;
    auto D = factory(DiscRole::kImage, init_rng);
    std::unique_ptr<Discriminator> Dd;
    if (use_dist) Dd = factory(DiscRole::kDistribution, init_rng);
    AdamState gstate(G.flat().size(), AdamConfig{.lr = cfg.lr_generator});
    AdamState dstate(D->params().size(), AdamConfig{.lr = cfg.lr_disc_stage2});
    AdamState ddstate(use_dist ? Dd->params().size() : 0, AdamConfig{.lr = cfg.lr_disc_stage2});
    const std::uint64_t p_hash = param_hash(p);
    for (int i = 0; i < cfg.stage2_iters; ++i, ++iteration) {
      draw_batch();
      std::vector<Latent> latents;
      std::vector<NoiseMap> noise;
      std::vector<ImageRGB> renders;
      for (int k = 0; k < m; ++k) {
        const auto& s = scenes[batch_scene[k]];
        latents.push_back(sample_latent(cfg.latent_dim, latent_rng));
        noise.push_back(gen_noise(latents.back(), G, H, W));
        renders.push_back(render_full(s.rgb, s.depth, p, noise.back()));
      }
      const auto fake = SampleStack::from_images(renders);
      const auto real = SampleStack::from_images(batch_real);
      const auto ds = D->scores(fake);
      const auto dr = D->scores(real);
      const auto L = lsgan_losses(ds, dr);
      check_loss(L.gen, 2, iteration, "L_gen");
      check_loss(L.disc, 2, iteration, "L_disc");

      HistoryRow row{iteration, 2, L.gen, L.disc, std::nullopt, std::nullopt, p};
      std::optional<PatchBatches> patches;
      std::vector<double> ddr, ddf;
      if (use_dist) {
        patches = grid_patch_batches(noise, cfg.grid_w, cfg.grid_h, patch_rng);
        ddr = Dd->scores(patches->random.patches);
        ddf = Dd->scores(patches->fixed.patches);
        const auto Ld = dist_losses(ddr, ddf);
        check_loss(Ld.gen, 2, iteration, "L_dist_gen");
        check_loss(Ld.disc, 2, iteration, "L_dist_disc");
        row.l_dist_gen = Ld.gen;
        row.l_dist_disc = Ld.disc;
      }

      const auto g_img = D->input_grad(fake, toward(ds, 1.0, 1.0));
      std::vector<NoiseMap> d_noise;
      for (int k = 0; k < m; ++k) {
        const auto& s = scenes[batch_scene[k]];
        d_noise.push_back(render_backward(s.rgb, s.depth, p, noise[k], g_img.image(k)).d_noise);
      }
      if (use_dist) {
        const auto g_patch = Dd->input_grad(patches->random.patches, toward(ddr, 1.0, cfg.lambda));
        scatter_patch_grad(g_patch, patches->random.cells, patches->cells_x, d_noise);
      }
      std::vector<double> g_total(G.flat().size(), 0.0);
      for (int k = 0; k < m; ++k) {
        const auto gk = gen_backward(latents[k], G, d_noise[k]);
        for (std::size_t j = 0; j < g_total.size(); ++j) g_total[j] += gk.flat()[j];
      }
      try {
        adam_step(gstate, G.flat(), g_total);
        if (i % cfg.disc_period_stage2 == 0) {
          disc_step(*D, dstate, fake, ds, real, dr);
          if (use_dist) disc_step(*Dd, ddstate, patches->random.patches, ddr, patches->fixed.patches, ddf);
        }
      } catch (const TrainingError& e) {
        throw TrainingError("stage 2, iteration " + std::to_string(iteration) + ": " + e.what());
      }
      result.history.push_back(std::move(row));
    }
    if (param_hash(p) != p_hash) throw std::logic_error("stage 2 modified the physical parameters");
  }
  result.params = p;
  result.generator = std::move(G);
  return result;
}

double discriminator_accuracy(const Discriminator& disc, std::span<const ImageRGB> synthetic,
                              std::span<const ImageRGB> targets) {
  if (synthetic.empty() && targets.empty()) throw DomainError("discriminator_accuracy needs at least one image");
  int correct = 0;
  for (const auto& img : synthetic) correct += disc.scores(SampleStack::from_image(img))[0] < 0.5 ? 1 : 0;
  for (const auto& img : targets) correct += disc.scores(SampleStack::from_image(img))[0] >= 0.5 ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(synthetic.size() + targets.size());
}

std::uint64_t param_hash(const WaterParams& p) {
  const auto flat = flatten(p);
  return fnv1a(flat);
}

std::uint64_t param_hash(const GeneratorParams& g) { return fnv1a(g.flat()); }

void write_history_csv(std::span<const HistoryRow> history, const std::filesystem::path& path) {
  bool with_dist = false;
  for (const auto& r : history) with_dist = with_dist || r.l_dist_gen.has_value();
  std::ostringstream out;
  out << std::setprecision(17);
  out << "iteration,stage,L_gen,L_disc";
  if (with_dist) out << ",L_dist_gen,L_dist_disc";
  out << ",beta_R,beta_G,beta_B,binf_R,binf_G,binf_B,sigma_k\n";
  for (const auto& r : history) {
    out << r.iteration << ',' << r.stage << ',' << r.l_gen << ',' << r.l_disc;
    if (with_dist) {
      out << ',';
      if (r.l_dist_gen) out << *r.l_dist_gen;
      out << ',';
      if (r.l_dist_disc) out << *r.l_dist_disc;
    }
    for (double b : r.params.beta) out << ',' << b;
    for (double b : r.params.binf) out << ',' << b;
    out << ',' << r.params.sigma_k << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << out.str();
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace uwsynth
