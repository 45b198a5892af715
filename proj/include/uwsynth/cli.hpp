#pragma once

#include <filesystem>
#include <ostream>

#include "uwsynth/formation.hpp"

namespace uwsynth {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // domain, parse, validation or estimation failure
inline constexpr int kExitIo = 2;

/// Runs one subcommand: synth | fit | gradcheck | distill-loss | eval-matching.
/// Results go to `out`, diagnostics and usage to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Parameter files: {"beta": [r, g, b], "binf": [r, g, b], "sigma_k": s}.
WaterParams read_water_params(const std::filesystem::path& path);
void write_water_params(const WaterParams& p, const std::filesystem::path& path);

}  // namespace uwsynth
