#pragma once

#include "codiff/config.hpp"

#include <optional>
#include <string>

namespace codiff::cli {

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, numeric_failure = 3 };

/// Command-line overrides applied on top of the run configuration.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 0;
  bool timing = true;
};

/// Seed precedence: --seed, then CODIFF_SEED, then the config file.
void apply_overrides(RunConfig& cfg, const Overrides& over);
int effective_threads(int requested);

/// With `timing` off every wall_ms field is written as 0 so repeated runs compare byte for byte.
int run_static(const RunConfig& cfg, int threads, bool timing = true);
int run_sequential(const RunConfig& cfg, int threads, const std::optional<std::string>& resume, bool timing = true);
int diagnose(const RunConfig& cfg, int threads, bool timing = true);
int eval_spce(const RunConfig& cfg, int threads, const std::optional<std::string>& sequence);

}  // namespace codiff::cli
