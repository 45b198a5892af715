#include "uwsynth/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "uwsynth/adversarial.hpp"
#include "uwsynth/config.hpp"
#include "uwsynth/difffit.hpp"
#include "uwsynth/distill.hpp"
#include "uwsynth/errors.hpp"
#include "uwsynth/homography.hpp"
#include "uwsynth/imgcore.hpp"
#include "uwsynth/matcheval.hpp"
#include "uwsynth/noisegen.hpp"

namespace uwsynth {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Offsets added to the global seed, one per purpose. 1..4 belong to training.
constexpr std::uint64_t kLatentStream = 2;
constexpr std::uint64_t kInitStream = 4;
constexpr std::uint64_t kRansacStream = 5;
constexpr std::uint64_t kGradcheckStream = 6;

constexpr int kGradcheckScenes = 3;
constexpr int kGradcheckSize = 16;
constexpr double kGradcheckTolerance = 1e-4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : parse_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void apply_threads(const Common& c) {
  int n = 0;
  if (c.threads) {
    n = *c.threads;
  } else if (const char* env = std::getenv("UWSYNTH_THREADS"); env && *env) {
    try {
      std::size_t used = 0;
      n = std::stoi(env, &used);
      if (env[used] != '\0') throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ParseError(std::string("UWSYNTH_THREADS must be a positive integer, got '") + env + "'");
    }
  } else {
    return;
  }
  if (n < 1) throw ParseError("thread count must be ≥ 1");
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

void make_output_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::vector<fs::path> expand_targets(const std::vector<std::string>& args) {
  std::vector<fs::path> paths;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().extension() == ".png") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw IoError("no .png files in target directory " + p.string());
      paths.insert(paths.end(), found.begin(), found.end());
    } else {
      paths.push_back(p);
    }
  }
  return paths;
}

std::string entry_name(std::size_t i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu_%s.png", i, suffix);
  return buf;
}

GeneratorParams initial_generator(const RunConfig& cfg) {
  std::mt19937_64 rng(cfg.seed + kInitStream);
  return GeneratorParams::random_init(cfg.gan.noise_grid, cfg.gan.noise_grid, cfg.gan.latent_dim,
                                      cfg.gan.noise_weight_scale, cfg.gan.noise_bias, rng);
}

// synth ----------------------------------------------------------------------

struct SynthArgs {
  std::string manifest, params, out, generator;
};

int run_synth(const SynthArgs& a, const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const auto manifest = load_manifest(a.manifest);
  const WaterParams p = read_water_params(a.params);
  const GeneratorParams g = a.generator.empty() ? initial_generator(cfg) : read_generator(a.generator);
  const auto scenes = load_scenes(manifest, cfg.depth_mode, cfg.depth_range);

  std::mt19937_64 latent_rng(cfg.seed + kLatentStream);
  std::vector<ImageRGB> clean, noisy;
  for (const auto& s : scenes) {
    const NoiseMap M = gen_noise(sample_latent(g.latent_dim(), latent_rng), g, s.rgb.height(), s.rgb.width());
    clean.push_back(render_clean(s.rgb, s.depth, p));
    noisy.push_back(render_full(s.rgb, s.depth, p, M));
  }

  const fs::path dir(a.out);
  make_output_dir(dir);
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    write_image(clean[i], dir / entry_name(i, "clean"));
    write_image(noisy[i], dir / entry_name(i, "noisy"));
  }
  out << json{{"entries", scenes.size()}, {"out", dir.string()}}.dump() << "\n";
  return kExitOk;
}

// fit ------------------------------------------------------------------------

struct FitArgs {
  std::string manifest, out;
  std::vector<std::string> targets;
};

int run_fit(const FitArgs& a, const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const auto scenes = load_scenes(load_manifest(a.manifest), cfg.depth_mode, cfg.depth_range);
  std::vector<ImageRGB> targets;
  for (const auto& p : expand_targets(a.targets)) targets.push_back(load_rgb(p));

  const TrainResult r = train_adversarial(scenes, targets, cfg.gan, cfg.seed);

  const fs::path dir(a.out);
  make_output_dir(dir);
  write_history_csv(r.history, dir / "history.csv");
  write_water_params(r.params, dir / "params.json");
  write_generator(r.generator, dir / "generator.bin");
  out << json{{"iterations", r.history.size()}, {"out", dir.string()}}.dump() << "\n";
  return kExitOk;
}

// gradcheck ------------------------------------------------------------------

int run_gradcheck(const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  std::mt19937_64 rng(cfg.seed + kGradcheckStream);
  std::uniform_real_distribution<double> beta(0.1, 1.0), binf(0.1, 0.9), sigma(0.1, 0.6), unit(0.0, 1.0);

  GradCheckReport worst;
  for (int k = 0; k < kGradcheckScenes; ++k) {
    const RgbdScene scene = make_synthetic_scene(kGradcheckSize, kGradcheckSize, rng(), cfg.depth_range);
    WaterParams p;
    for (int ch = 0; ch < 3; ++ch) {
      p.beta[ch] = beta(rng);
      p.binf[ch] = binf(rng);
    }
    p.sigma_k = sigma(rng);
    NoiseMap M(kGradcheckSize, kGradcheckSize);
    for (double& v : M.data()) v = unit(rng);
    ImageRGB target(kGradcheckSize, kGradcheckSize);
    for (double& v : target.data()) v = unit(rng);

    const auto r = finite_diff_check(scene, p, M, squared_error_loss(target), cfg.gradcheck_eps);
    worst.beta = std::max(worst.beta, r.beta);
    worst.binf = std::max(worst.binf, r.binf);
    worst.sigma_k = std::max(worst.sigma_k, r.sigma_k);
    worst.noise = std::max(worst.noise, r.noise);
  }
  const bool pass = worst.worst() < kGradcheckTolerance;
  const json j{{"beta", worst.beta}, {"binf", worst.binf},        {"sigma_k", worst.sigma_k},
                {"noise", worst.noise}, {"eps", cfg.gradcheck_eps}, {"pass", pass}};
  out << j.dump(2) << "\n";
  return pass ? kExitOk : kExitInvalid;
}

// distill-loss ---------------------------------------------------------------

struct DistillArgs {
  std::string student_scores, student_desc, teacher_scores, teacher_desc;
  std::string warped_scores, warped_desc, homography;
};

int run_distill(const DistillArgs& a, const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const bool with_matching = !a.warped_scores.empty() || !a.warped_desc.empty() || !a.homography.empty();
  if (with_matching && (a.warped_scores.empty() || a.warped_desc.empty() || a.homography.empty())) {
    throw DomainError("--warped-scores, --warped-desc and --homography must be given together");
  }
  const ScoreMap Xs = read_score_map(a.student_scores);
  const DescriptorMap Ds = read_descriptor_map(a.student_desc);
  const ScoreMap Xt = read_score_map(a.teacher_scores);
  const DescriptorMap Dt = read_descriptor_map(a.teacher_desc);
  const DistillConfig dc = cfg.distill_for(Ds.format(), Ds.dim());

  DistillParts parts;
  parts.kd = kd_loss(Xs, Xt, Ds, Dt, dc);
  const auto points = select_features(Xs, dc.n_points, dc.nms_radius);
  parts.peak = dispersity_peak_loss(Xs, points, dc.S);

  json j;
  if (with_matching) {
    const ScoreMap Xw = read_score_map(a.warped_scores);
    const DescriptorMap Dw = read_descriptor_map(a.warped_desc);
    const Homography H = read_homography(a.homography);
    if (Dw.format() != Ds.format() || Dw.dim() != Ds.dim()) {
      throw DomainError("warped descriptors must share the student's format and dimension");
    }
    const auto warped_points = select_features(Xw, dc.n_points, dc.nms_radius);
    const auto corr = build_correspondence(points, warped_points, H, dc.match_radius);
    const auto m = matching_loss(descriptors_at(Ds, points), descriptors_at(Dw, warped_points), corr, dc);
    parts.matching = m.value;
    j["matching"] = m.value;
    j["correspondences"] = corr.size();
    j["empty_correspondence"] = m.empty_correspondence;
  } else {
    j["matching"] = nullptr;
  }
  j["kd"] = parts.kd;
  j["peak"] = parts.peak;
  j["points"] = points.size();
  j["total"] = total_distill_loss(parts, dc);
  out << j.dump(2) << "\n";
  return kExitOk;
}

// eval-matching --------------------------------------------------------------

struct EvalArgs {
  std::string features_a, features_b, gt_homography;
};

json matrix_json(const Homography& H) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({H.matrix()(r, 0), H.matrix()(r, 1), H.matrix()(r, 2)});
  return rows;
}

int run_eval(const EvalArgs& a, const Common& c, std::ostream& out) {
  const RunConfig cfg = load_config(c);
  const FeatureSet fa = read_features(a.features_a);
  const FeatureSet fb = read_features(a.features_b);
  std::optional<Homography> gt;
  if (!a.gt_homography.empty()) gt = read_homography(a.gt_homography);

  const MatchSet found = nn_match(fa, fb, cfg.mutual_check);
  if (found.n_found == 0) throw EstimationError("no descriptor matches between the two feature sets");

  json j;
  j["n_found"] = found.n_found;
  std::mt19937_64 rng(cfg.seed + kRansacStream);
  try {
    const RansacResult r = ransac_homography(found, cfg.ransac, rng);
    const auto metrics = matching_metrics(r.matches);
    j["n_match"] = r.matches.n_match;
    j["matching_rate"] = metrics.matching_rate;
    j["est_H"] = matrix_json(r.H);
  } catch (const EstimationError&) {
    j["n_match"] = 0;
    j["matching_rate"] = 0.0;
    j["est_H"] = nullptr;
  }
  if (gt) {
    int correct = 0;
    for (const auto& m : found.pairs) {
      const Point2 q = project_point(m.a, *gt);
      if (std::hypot(q.x - m.b.x, q.y - m.b.y) <= cfg.ransac.threshold) ++correct;
    }
    j["gt_correct"] = correct;
  }
  out << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

WaterParams read_water_params(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open parameter file " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw IoError("malformed parameter file " + path.string() + ": " + e.what());
  }
  WaterParams p;
  try {
    const auto beta = doc.at("beta").get<std::vector<double>>();
    const auto binf = doc.at("binf").get<std::vector<double>>();
    if (beta.size() != 3 || binf.size() != 3) throw DomainError("beta and binf need 3 entries each");
    std::copy(beta.begin(), beta.end(), p.beta.begin());
    std::copy(binf.begin(), binf.end(), p.binf.begin());
    p.sigma_k = doc.at("sigma_k").get<double>();
  } catch (const json::exception& e) {
    throw ParseError("parameter file " + path.string() + ": " + e.what());
  } catch (const DomainError& e) {
    throw ParseError("parameter file " + path.string() + ": " + e.what());
  }
  p.validate();
  return p;
}

void write_water_params(const WaterParams& p, const fs::path& path) {
  const json j{{"beta", p.beta}, {"binf", p.binf}, {"sigma_k", p.sigma_k}};
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("failed writing " + path.string());
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Underwater image synthesis, adversarial fitting, distillation losses and matching evaluation",
               "uwsynth"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config, "Run configuration (key = value lines)");
  app.add_option("--seed", common.seed, "Global seed; overrides the config");
  app.add_option("--threads", common.threads, "Cap on library threads (fallback: UWSYNTH_THREADS)");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render clean and noisy images for every manifest entry");
  s->add_option("--manifest", synth.manifest, "Scene manifest")->required();
  s->add_option("--params", synth.params, "Water parameter file")->required();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--generator", synth.generator, "Noise generator file (default: untrained initialization)");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "Fit water parameters and noise generator to target images");
  f->add_option("--manifest", fit.manifest, "Scene manifest")->required();
  f->add_option("--targets", fit.targets, "Target images or directories of .png files")->required();
  f->add_option("--out", fit.out, "Output directory")->required();

  auto* g = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");

  DistillArgs dist;
  auto* d = app.add_subcommand("distill-loss", "Evaluate distillation losses on score and descriptor maps");
  d->add_option("--student-scores", dist.student_scores, "Student score map")->required();
  d->add_option("--student-desc", dist.student_desc, "Student descriptor map")->required();
  d->add_option("--teacher-scores", dist.teacher_scores, "Teacher score map")->required();
  d->add_option("--teacher-desc", dist.teacher_desc, "Teacher descriptor map")->required();
  d->add_option("--warped-scores", dist.warped_scores, "Score map of the warped image");
  d->add_option("--warped-desc", dist.warped_desc, "Descriptor map of the warped image");
  d->add_option("--homography", dist.homography, "Homography from the student image to the warped image");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval-matching", "Match two feature sets and estimate a homography");
  e->add_option("--features-a", eval.features_a, "First feature file")->required();
  e->add_option("--features-b", eval.features_b, "Second feature file")->required();
  e->add_option("--gt-homography", eval.gt_homography, "Ground-truth homography file");

  if (argc > 1 && argv[1][0] != '-' && !app.get_subcommand_no_throw(argv[1])) {
    err << "error: unknown subcommand '" << argv[1] << "'\n\n" << app.help();
    return kExitInvalid;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kExitInvalid;
  }

  try {
    apply_threads(common);
    if (*s) return run_synth(synth, common, out);
    if (*f) return run_fit(fit, common, out);
    if (*g) return run_gradcheck(common, out);
    if (*d) return run_distill(dist, common, out);
    if (*e) return run_eval(eval, common, out);
  } catch (const IoError& ex) {
    err << "I/O error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitInvalid;
  }
  err << app.help();
  return kExitInvalid;
}

}  // namespace uwsynth
