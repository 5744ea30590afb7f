#include "commands.hpp"

#include "codiff/csv.hpp"

#include <nlohmann/json.hpp>
#include <omp.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace codiff::cli {

namespace {

constexpr std::uint64_t kDiagnosticsSalt = 0x1006;

std::vector<double> to_list(const Vec& v) { return {v.data(), v.data() + v.size()}; }

std::filesystem::path prepare_output(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out.good()) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

nlohmann::json run_header(const RunConfig& cfg, const std::string& command, int threads) {
  return {{"schema_version", 1}, {"command", command}, {"model", cfg.model.id}, {"seed", cfg.seed},
          {"threads", threads}};
}

History load_history(const std::string& path, const Model& model) {
  return read_design_sequence(read_csv_file(path), model.design_dim(), model.outcome_dim());
}

std::vector<ExperimentRecord> with_history(const History& before, const std::vector<ExperimentRecord>& records) {
  std::vector<ExperimentRecord> out;
  for (std::size_t i = 0; i < before.size(); ++i) {
    ExperimentRecord r;
    r.metrics.k = i + 1;
    r.xi = before[i].xi;
    r.y = before[i].y;
    out.push_back(std::move(r));
  }
  out.insert(out.end(), records.begin(), records.end());
  return out;
}

}  // namespace

void apply_overrides(RunConfig& cfg, const Overrides& over) {
  if (over.seed) {
    cfg.seed = *over.seed;
  } else if (const char* env = std::getenv("CODIFF_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto value = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      cfg.seed = value;
    } catch (const std::exception&) {
      throw ConfigError(std::string("CODIFF_SEED: not an unsigned integer: '") + env + "'");
    }
  }
  if (over.out) cfg.output_dir = *over.out;
}

int effective_threads(int requested) {
  if (requested > 0) omp_set_num_threads(requested);
  return omp_get_max_threads();
}

int run_static(const RunConfig& cfg, int threads, bool timing) {
  const auto model = make_model(cfg.model);
  const Box box = design_bounds(cfg, *model);
  const RngStreams rng(cfg.seed);
  const History hist = cfg.sequence_csv ? load_history(*cfg.sequence_csv, *model) : History{};
  Vec start;
  if (cfg.initial_design) {
    start = *cfg.initial_design;
  } else {
    CounterRng init = rng.stream(Stream::design_init, 0, 0);
    start = uniform_in_box(box, init);
  }
  const LoopConfig loop = loop_config(cfg);
  OptimizerState opt(cfg.adam, box);
  spdlog::info("run-static: model {} seed {} threads {} t_outer {}", cfg.model.id, cfg.seed, threads, loop.t_outer);
  const auto started = std::chrono::steady_clock::now();
  const LoopResult res = cfg.algorithm == LoopAlgorithm::nested
                             ? run_nested_loop(*model, hist, Design(start, box), loop, opt, rng)
                             : run_single_loop(*model, hist, Design(start, box), loop, opt, rng);
  const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  std::vector<TraceRow> trace = res.trace;
  if (!timing)
    for (auto& row : trace) row.wall_ms = 0.0;
  const auto dir = prepare_output(cfg);
  write_csv_file((dir / "trace.csv").string(), trace_table(trace, model->design_dim()));
  nlohmann::json state = run_header(cfg, "run-static", threads);
  state["algorithm"] = cfg.algorithm == LoopAlgorithm::nested ? "nested" : "single";
  state["estimator"] = to_string(loop.estimator);
  state["iterations"] = res.trace.size();
  state["initial_design"] = to_list(start);
  state["design"] = to_list(res.design.xi);
  state["optimizer_steps"] = opt.steps();
  state["history_size"] = hist.size();
  state["wall_ms"] = timing ? wall : 0.0;
  write_json(dir / "final_state.json", state);
  spdlog::info("run-static: final design written to {}", (dir / "final_state.json").string());
  return ok;
}

int run_sequential(const RunConfig& cfg, int threads, const std::optional<std::string>& resume, bool timing) {
  const auto model = make_model(cfg.model);
  const RngStreams rng(cfg.seed);
  SequentialRun start;
  start.theta_star = resolve_theta_star(cfg, *model);
  const auto history_path = resume ? resume : cfg.sequence_csv;
  if (history_path) start.history = load_history(*history_path, *model);
  const History before = start.history;
  const auto dir = prepare_output(cfg);
  spdlog::info("run-sequential: model {} seed {} threads {} experiments {} resumed {}", cfg.model.id, cfg.seed,
               threads, cfg.experiments, before.size());

  nlohmann::json state = run_header(cfg, "run-sequential", threads);
  state["theta_star"] = to_list(start.theta_star);
  state["resumed_from"] = before.size();
  const auto run_one = [&](bool random, const std::string& suffix) {
    SequentialRun run = codiff::run_sequential(*model, start, sequential_config(cfg, random), rng);
    if (!timing)
      for (auto& r : run.records) r.metrics.wall_ms = 0.0;
    write_csv_file((dir / ("metrics" + suffix + ".csv")).string(), metrics_table(run.records));
    write_csv_file((dir / ("designs" + suffix + ".csv")).string(),
                   designs_table(with_history(before, run.records), model->design_dim(), model->outcome_dim()));
    if (!run.records.empty()) state["final_w2" + suffix] = run.records.back().metrics.w2;
  };
  run_one(false, "");
  if (cfg.random_baseline) run_one(true, "_random");
  write_json(dir / "final_state.json", state);
  return ok;
}

int diagnose(const RunConfig& cfg, int threads, bool timing) {
  const auto model = make_model(cfg.model);
  spdlog::info("diagnose: model {} seed {} threads {}", cfg.model.id, cfg.seed, threads);
  auto rows = gradient_diagnostics(*model, cfg.diagnostics, RngStreams(cfg.seed).derive(kDiagnosticsSalt));
  if (!timing)
    for (auto& r : rows) r.wall_ms = 0.0;
  const auto dir = prepare_output(cfg);
  write_csv_file((dir / "diagnostics.csv").string(), diagnostics_table(rows));
  write_json(dir / "final_state.json", run_header(cfg, "diagnose", threads));
  return ok;
}

int eval_spce(const RunConfig& cfg, int threads, const std::optional<std::string>& sequence) {
  const auto model = make_model(cfg.model);
  const auto path = sequence ? sequence : cfg.sequence_csv;
  if (!path) throw ConfigError("evaluation.sequence_csv: eval-spce needs a design sequence (--sequence)");
  if (!cfg.theta_star) throw ConfigError("sequential.theta_star: eval-spce needs the true parameter");
  const History hist = load_history(*path, *model);
  spdlog::info("eval-spce: {} experiments, L = {}", hist.size(), cfg.metrics.contrastive);
  const BoundPair b = spce_snmc(*model, hist, *cfg.theta_star, cfg.metrics, RngStreams(cfg.seed));
  const auto dir = prepare_output(cfg);
  write_csv_file((dir / "spce.csv").string(), spce_table(b, hist.size(), cfg.metrics.contrastive));
  nlohmann::json state = run_header(cfg, "eval-spce", threads);
  state["spce"] = b.spce;
  state["snmc"] = b.snmc;
  write_json(dir / "final_state.json", state);
  return ok;
}

}  // namespace codiff::cli
