#include "uwsynth/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace uwsynth {
namespace {

using nlohmann::json;

// Thrown by setters; the parser adds line and key.
struct BadValue {
  std::string message;
};

double real(const json& v, const std::string& key) {
  if (!v.is_number()) throw BadValue{key + " must be a number"};
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw BadValue{key + " must be finite"};
  return d;
}

double at_least(const json& v, const std::string& key, double lo) {
  const double d = real(v, key);
  if (!(d >= lo)) throw BadValue{key + " must be ≥ " + json(lo).dump()};
  return d;
}

double positive(const json& v, const std::string& key) {
  const double d = real(v, key);
  if (!(d > 0.0)) throw BadValue{key + " must be > 0"};
  return d;
}

long long integer(const json& v, const std::string& key, long long lo) {
  if (!v.is_number_integer()) throw BadValue{key + " must be an integer"};
  const long long i = v.get<long long>();
  if (i < lo) throw BadValue{key + " must be ≥ " + std::to_string(lo)};
  return i;
}

std::array<double, 3> triple(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 3) throw BadValue{key + " must be an array of 3 numbers"};
  return {real(v[0], key), real(v[1], key), real(v[2], key)};
}

std::string text(const json& v, const std::string& key) {
  if (!v.is_string()) throw BadValue{key + " must be a string"};
  return v.get<std::string>();
}

using Setter = std::function<void(const json&, RunConfig&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["depth_range"] = [](const json& v, RunConfig& c) {
      if (!v.is_array() || v.size() != 2) throw BadValue{"depth_range must be [lo, hi]"};
      const double lo = positive(v[0], "depth_range"), hi = real(v[1], "depth_range");
      if (!(hi > lo)) throw BadValue{"depth_range must satisfy 0 < lo < hi"};
      c.depth_range = {lo, hi};
    };
    t["depth_mode"] = [](const json& v, RunConfig& c) {
      const auto s = text(v, "depth_mode");
      if (s == "clamp") c.depth_mode = DepthMode::kClamp;
      else if (s == "rescale") c.depth_mode = DepthMode::kRescale;
      else throw BadValue{"depth_mode must be \"clamp\" or \"rescale\""};
    };
    t["kernel"] = [](const json& v, RunConfig& c) {
      if (integer(v, "kernel", 1) != kPsfSize) throw BadValue{"kernel must be 11 (the PSF size is fixed)"};
      c.kernel = kPsfSize;
    };
    t["lambda"] = [](const json& v, RunConfig& c) { c.gan.lambda = at_least(v, "lambda", 0.0); };
    t["N"] = [](const json& v, RunConfig& c) { c.gan.latent_dim = static_cast<int>(integer(v, "N", 1)); };
    t["noise_grid"] = [](const json& v, RunConfig& c) { c.gan.noise_grid = static_cast<int>(integer(v, "noise_grid", 1)); };
    t["noise_weight_scale"] = [](const json& v, RunConfig& c) {
      c.gan.noise_weight_scale = at_least(v, "noise_weight_scale", 0.0);
    };
    t["noise_bias"] = [](const json& v, RunConfig& c) { c.gan.noise_bias = real(v, "noise_bias"); };
    t["batch_m"] = [](const json& v, RunConfig& c) { c.gan.batch_m = static_cast<int>(integer(v, "batch_m", 2)); };
    t["grid_wh"] = [](const json& v, RunConfig& c) {
      if (!v.is_array() || v.size() != 2) throw BadValue{"grid_wh must be [w, h]"};
      c.gan.grid_w = static_cast<int>(integer(v[0], "grid_wh", 1));
      c.gan.grid_h = static_cast<int>(integer(v[1], "grid_wh", 1));
    };
    t["lr_physics"] = [](const json& v, RunConfig& c) { c.gan.lr_physics = positive(v, "lr_physics"); };
    t["lr_disc_stage1"] = [](const json& v, RunConfig& c) { c.gan.lr_disc_stage1 = positive(v, "lr_disc_stage1"); };
    t["lr_generator"] = [](const json& v, RunConfig& c) { c.gan.lr_generator = positive(v, "lr_generator"); };
    t["lr_disc_stage2"] = [](const json& v, RunConfig& c) { c.gan.lr_disc_stage2 = positive(v, "lr_disc_stage2"); };
    t["stage1_iters"] = [](const json& v, RunConfig& c) { c.gan.stage1_iters = static_cast<int>(integer(v, "stage1_iters", 0)); };
    t["stage2_iters"] = [](const json& v, RunConfig& c) { c.gan.stage2_iters = static_cast<int>(integer(v, "stage2_iters", 0)); };
    t["disc_period_stage1"] = [](const json& v, RunConfig& c) {
      c.gan.disc_period_stage1 = static_cast<int>(integer(v, "disc_period_stage1", 1));
    };
    t["disc_period_stage2"] = [](const json& v, RunConfig& c) {
      c.gan.disc_period_stage2 = static_cast<int>(integer(v, "disc_period_stage2", 1));
    };
    t["init_beta"] = [](const json& v, RunConfig& c) {
      c.gan.init.beta = triple(v, "init_beta");
      for (double b : c.gan.init.beta)
        if (!(b >= 0.0)) throw BadValue{"init_beta entries must be ≥ 0"};
    };
    t["init_binf"] = [](const json& v, RunConfig& c) {
      c.gan.init.binf = triple(v, "init_binf");
      for (double b : c.gan.init.binf)
        if (!(b >= 0.0 && b <= 1.0)) throw BadValue{"init_binf entries must lie in [0, 1]"};
    };
    t["init_sigma_k"] = [](const json& v, RunConfig& c) { c.gan.init.sigma_k = at_least(v, "init_sigma_k", 0.0); };
    t["alpha_kd"] = [](const json& v, RunConfig& c) { c.distill.alpha_kd = at_least(v, "alpha_kd", 0.0); };
    t["gamma1"] = [](const json& v, RunConfig& c) { c.distill.gamma1 = at_least(v, "gamma1", 0.0); };
    t["gamma2"] = [](const json& v, RunConfig& c) { c.distill.gamma2 = at_least(v, "gamma2", 0.0); };
    t["P"] = [](const json& v, RunConfig& c) { c.P = at_least(v, "P", 0.0); };
    t["Q"] = [](const json& v, RunConfig& c) { c.Q = positive(v, "Q"); };
    t["Z"] = [](const json& v, RunConfig& c) { c.Z = positive(v, "Z"); };
    t["S"] = [](const json& v, RunConfig& c) {
      const auto s = integer(v, "S", 1);
      if (s % 2 == 0) throw BadValue{"S must be odd"};
      c.distill.S = static_cast<int>(s);
    };
    t["n_points"] = [](const json& v, RunConfig& c) { c.distill.n_points = static_cast<int>(integer(v, "n_points", 1)); };
    t["nms_radius"] = [](const json& v, RunConfig& c) { c.distill.nms_radius = static_cast<int>(integer(v, "nms_radius", 0)); };
    t["match_radius"] = [](const json& v, RunConfig& c) { c.distill.match_radius = at_least(v, "match_radius", 0.0); };
    t["f_x"] = [](const json& v, RunConfig& c) {
      const auto s = text(v, "f_x");
      if (s == "mse") c.distill.f_x = Similarity::kMeanSquare;
      else if (s == "kl") c.distill.f_x = Similarity::kKL;
      else throw BadValue{"f_x must be \"mse\" or \"kl\""};
    };
    t["ransac_threshold"] = [](const json& v, RunConfig& c) { c.ransac.threshold = positive(v, "ransac_threshold"); };
    t["ransac_iters"] = [](const json& v, RunConfig& c) { c.ransac.iters = static_cast<int>(integer(v, "ransac_iters", 1)); };
    t["mutual_check"] = [](const json& v, RunConfig& c) {
      if (!v.is_boolean()) throw BadValue{"mutual_check must be true or false"};
      c.mutual_check = v.get<bool>();
    };
    t["gradcheck_eps"] = [](const json& v, RunConfig& c) { c.gradcheck_eps = positive(v, "gradcheck_eps"); };
    t["seed"] = [](const json& v, RunConfig& c) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw BadValue{"seed must be a non-negative integer"};
      }
      c.seed = v.get<std::uint64_t>();
    };
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ParseError("config line " + std::to_string(line) + ": " + msg);
}

}  // namespace

DistillConfig RunConfig::distill_for(DescFormat format, int dim) const {
  DistillConfig d = DistillConfig::for_format(format, dim);
  const DistillConfig base = distill;
  d.alpha_kd = base.alpha_kd;
  d.gamma1 = base.gamma1;
  d.gamma2 = base.gamma2;
  d.S = base.S;
  d.n_points = base.n_points;
  d.nms_radius = base.nms_radius;
  d.match_radius = base.match_radius;
  d.f_x = base.f_x;
  if (P) d.P = *P;
  if (Q) d.Q = *Q;
  if (Z) d.Z = *Z;
  d.validate();
  return d;
}

RunConfig parse_config_text(const std::string& content) {
  RunConfig cfg;
  std::istringstream in(content);
  std::string raw;
  std::map<std::string, int> seen;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected `key = value`");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) fail(line, "unknown key '" + key + "'");
    if (seen.count(key)) fail(line, "key '" + key + "' repeated (first on line " + std::to_string(seen[key]) + ")");
    seen[key] = line;
    json v;
    try {
      v = json::parse(value);
    } catch (const json::parse_error&) {
      fail(line, "value of '" + key + "' is not valid JSON: " + value);
    }
    try {
      it->second(v, cfg);
    } catch (const BadValue& e) {
      fail(line, e.message);
    }
  }
  if (cfg.P && cfg.Q && !(*cfg.Q > *cfg.P)) fail(std::max(seen["P"], seen["Q"]), "Q must be > P");
  try {
    cfg.gan.validate();
    cfg.distill.validate();
  } catch (const DomainError& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace uwsynth
