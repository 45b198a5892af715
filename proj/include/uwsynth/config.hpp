#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "uwsynth/adversarial.hpp"
#include "uwsynth/distill.hpp"
#include "uwsynth/imgcore.hpp"
#include "uwsynth/matcheval.hpp"

namespace uwsynth {

/// Every tunable the command-line tool exposes.
struct RunConfig {
  DepthRange depth_range{kDepthMin, kDepthMax};
  DepthMode depth_mode = DepthMode::kClamp;
  int kernel = kPsfSize;
  GanConfig gan;
  DistillConfig distill;
  // Descriptor margins and scale; format defaults apply when unset.
  std::optional<double> P, Q, Z;
  RansacConfig ransac;
  bool mutual_check = true;
  double gradcheck_eps = 1e-5;
  std::uint64_t seed = 0;

  /// Distill settings with P, Q, Z resolved for a descriptor format.
  DistillConfig distill_for(DescFormat format, int dim) const;
};

/// Flat `key = value` lines, values in JSON. Blank lines and lines starting
/// with '#' are ignored. Throws ParseError naming the line and key for
/// unknown or repeated keys, malformed values and out-of-domain values.
RunConfig parse_config_text(const std::string& text);
/// IoError when the file cannot be read.
RunConfig parse_config(const std::filesystem::path& path);

}  // namespace uwsynth
