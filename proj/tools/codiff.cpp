#include "commands.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <functional>
#include <iostream>

using namespace codiff;

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based sequential Bayesian experimental design with particle and diffusion samplers"};
  app.require_subcommand(1);

  std::string config_path;
  cli::Overrides over;
  std::string log_level = "info";
  std::optional<std::string> resume;
  std::optional<std::string> sequence;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", over.seed, "Root seed; overrides CODIFF_SEED and the config");
    sub->add_option("--out", over.out, "Output directory");
    sub->add_option("--threads", over.threads, "OpenMP threads (0 keeps the runtime default)")
        ->check(CLI::NonNegativeNumber);
    sub->add_flag("--timing,!--no-timing", over.timing, "Write 0 in wall_ms fields for byte-comparable outputs");
    sub->add_option("--log-level", log_level, "trace, debug, info, warn, error or off");
  };
  auto* run_static = app.add_subcommand("run-static", "Optimize one design against the current prior");
  auto* run_seq = app.add_subcommand("run-sequential", "Run K greedy sequential experiments");
  auto* diagnose = app.add_subcommand("diagnose", "Bias and variance of the EIG gradient estimators");
  auto* eval = app.add_subcommand("eval-spce", "SPCE and SNMC bounds for an external design sequence");
  for (auto* sub : {run_static, run_seq, diagnose, eval}) common(sub);
  run_seq->add_option("--resume", resume, "designs.csv from an earlier run")->check(CLI::ExistingFile);
  eval->add_option("--sequence", sequence, "Design sequence CSV with k, xi_*, y_* columns")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::ok : cli::config_error;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    RunConfig cfg = load_run_config(config_path);
    cli::apply_overrides(cfg, over);
    const int threads = cli::effective_threads(over.threads);
    if (*run_static) return cli::run_static(cfg, threads, over.timing);
    if (*run_seq) return cli::run_sequential(cfg, threads, resume, over.timing);
    if (*diagnose) return cli::diagnose(cfg, threads, over.timing);
    return cli::eval_spce(cfg, threads, sequence);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::config_error;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure at iteration " << e.iteration() << ": " << e.what() << '\n';
    return cli::numeric_failure;
  } catch (const DegenerateWeightsError& e) {
    std::cerr << "numeric failure: degenerate weights in row " << e.row() << ": " << e.what() << '\n';
    return cli::numeric_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::failure;
  }
}
