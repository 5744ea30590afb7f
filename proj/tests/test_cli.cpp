#include "codiff/csv.hpp"
#include "support.hpp"

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "codiff_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << doc.dump(2);
  return path;
}

// Runs the CLI and returns its exit status.
int run(const std::string& args, const std::string& env = "") {
  const std::string cmd =
      env + (env.empty() ? "" : " ") + "'" CODIFF_CLI "' " + args + " --log-level off > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

codiff::CsvTable table(const fs::path& path) { return codiff::read_csv_file(path.string()); }

json small_sequential(int experiments) {
  json doc = json::parse(R"({
    "schema_version": 1, "seed": 4, "model": {"id": "linear_gaussian"},
    "loop": {"t_outer": 15, "n_joint": 32, "n_contrastive": 32},
    "sampler": {"joint_step": {"gamma0": 0.05}, "contrastive_step": {"gamma0": 0.05}, "posterior_steps": 20,
                "posterior_step": {"gamma0": 0.05}},
    "sequential": {"random_baseline": true},
    "evaluation": {"contrastive": 200}
  })");
  doc["sequential"]["experiments"] = experiments;
  return doc;
}

std::string common(const fs::path& config, const fs::path& out) {
  return "--config '" + config.string() + "' --out '" + out.string() + "' --threads 1";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("run-static with zero outer iterations writes an empty trace") {
    const fs::path dir = scratch("zero");
    CHECK(run("run-static " + common(CODIFF_SOURCE_DIR "/configs/linear_gaussian_zero_iterations.json", dir)) == 0);
    const auto trace = table(dir / "trace.csv");
    CHECK(trace.schema == "trace");
    CHECK(trace.rows.empty());
    const json state = json::parse(slurp(dir / "final_state.json"));
    CHECK(state.at("iterations") == 0);
    CHECK(state.at("design").at(0) == 0.5);
    CHECK(state.at("threads") == 1);
  }

  TEST_CASE("invalid configurations exit with code 2") {
    const fs::path dir = scratch("invalid");
    std::ofstream(dir / "broken.json") << "{\"schema_version\": 1,";
    CHECK(run("run-static --config '" + (dir / "broken.json").string() + "'") == 2);
    const fs::path unknown = write_config(dir, json{{"schema_version", 1}, {"loop", {{"bogus", 1}}}});
    CHECK(run("run-static " + common(unknown, dir)) == 2);
    CHECK(run("run-static --config '" + (dir / "absent.json").string() + "'") == 2);
    CHECK(run("run-static " + common(write_config(dir, small_sequential(1)), dir), "CODIFF_SEED=abc") == 2);
  }

  TEST_CASE("run-sequential with zero experiments writes header-only metrics") {
    const fs::path dir = scratch("k0");
    CHECK(run("run-sequential " + common(write_config(dir, small_sequential(0)), dir)) == 0);
    CHECK(slurp(dir / "metrics.csv") == "# schema: metrics v1\nk,spce,snmc,w2,wall_ms\n");
    CHECK(table(dir / "metrics_random.csv").rows.empty());
    CHECK(table(dir / "designs.csv").rows.empty());
  }

  TEST_CASE("fixed seeds give byte-identical CSV outputs, and the seed override takes effect") {
    const fs::path dir = scratch("bytes");
    const fs::path config = write_config(dir, small_sequential(2));
    REQUIRE(run("run-sequential --no-timing " + common(config, dir / "a")) == 0);
    REQUIRE(run("run-sequential --no-timing " + common(config, dir / "b")) == 0);
    for (const char* f : {"metrics.csv", "designs.csv", "metrics_random.csv", "designs_random.csv"}) {
      CAPTURE(f);
      CHECK(!slurp(dir / "a" / f).empty());
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    CHECK(table(dir / "a" / "metrics.csv").rows.size() == 2);

    REQUIRE(run("run-sequential --no-timing " + common(config, dir / "env"), "CODIFF_SEED=99") == 0);
    REQUIRE(run("run-sequential --no-timing --seed 99 " + common(config, dir / "flag"), "CODIFF_SEED=5") == 0);
    CHECK(slurp(dir / "env" / "designs.csv") == slurp(dir / "flag" / "designs.csv"));
    CHECK(slurp(dir / "env" / "designs.csv") != slurp(dir / "a" / "designs.csv"));
    CHECK(json::parse(slurp(dir / "env" / "final_state.json")).at("seed") == 99);

    const fs::path static_cfg = CODIFF_SOURCE_DIR "/configs/linear_gaussian_static.json";
    json quick = json::parse(slurp(static_cfg));
    quick["loop"]["t_outer"] = 20;
    const fs::path quick_cfg = write_config(dir / "a", quick);
    REQUIRE(run("run-static --no-timing " + common(quick_cfg, dir / "s1")) == 0);
    REQUIRE(run("run-static --no-timing " + common(quick_cfg, dir / "s2")) == 0);
    CHECK(slurp(dir / "s1" / "trace.csv") == slurp(dir / "s2" / "trace.csv"));
    CHECK(table(dir / "s1" / "trace.csv").rows.size() == 20);
  }

  TEST_CASE("resuming from a design history replays identically") {
    const fs::path dir = scratch("resume");
    REQUIRE(run("run-sequential --no-timing " + common(write_config(dir, small_sequential(2)), dir / "first")) == 0);
    const fs::path history = dir / "first" / "designs.csv";
    const fs::path next = write_config(dir, small_sequential(1));
    const std::string resume = " --resume '" + history.string() + "'";
    REQUIRE(run("run-sequential --no-timing" + resume + " " + common(next, dir / "r1")) == 0);
    REQUIRE(run("run-sequential --no-timing" + resume + " " + common(next, dir / "r2")) == 0);
    CHECK(slurp(dir / "r1" / "designs.csv") == slurp(dir / "r2" / "designs.csv"));
    CHECK(slurp(dir / "r1" / "metrics.csv") == slurp(dir / "r2" / "metrics.csv"));

    const auto before = table(history);
    const auto after = table(dir / "r1" / "designs.csv");
    REQUIRE(after.rows.size() == 3);
    CHECK(after.rows[0] == before.rows[0]);
    CHECK(after.rows[1] == before.rows[1]);
    CHECK(table(dir / "r1" / "metrics.csv").number(0, "k") == 3.0);
  }

  TEST_CASE("diagnose on a single oracle cell writes one zero-bias row") {
    const fs::path dir = scratch("diagnose");
    const json doc = json::parse(R"({
      "schema_version": 1, "seed": 2, "model": {"id": "linear_gaussian"},
      "evaluation": {"diagnostics": {"estimators": ["oracle"], "designs": [1.0], "budgets": [32], "replications": 4}}
    })");
    CHECK(run("diagnose " + common(write_config(dir, doc), dir)) == 0);
    const auto t = table(dir / "diagnostics.csv");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.number(0, "bias") == 0.0);
    CHECK(t.rows[0][t.column("estimator")] == "oracle");
  }

  TEST_CASE("eval-spce scores an external design sequence") {
    const fs::path dir = scratch("eval");
    std::ofstream(dir / "sequence.csv") << "# schema: designs v1\nk,xi_1,y_1\n2,-1,0.3\n1,1,0.5\n";
    json doc = json::parse(R"({"schema_version": 1, "seed": 3, "model": {"id": "linear_gaussian"},
                               "sequential": {"theta_star": [0.4]}, "evaluation": {"contrastive": 1000}})");
    const fs::path config = write_config(dir, doc);
    CHECK(run("eval-spce --sequence '" + (dir / "sequence.csv").string() + "' " + common(config, dir)) == 0);
    const auto t = table(dir / "spce.csv");
    REQUIRE(t.rows.size() == 1);
    CHECK(t.number(0, "experiments") == 2.0);
    CHECK(t.number(0, "spce") <= std::log(1001.0));
    CHECK(t.number(0, "spce") <= t.number(0, "snmc") + 1.0);
    doc["sequential"].erase("theta_star");
    CHECK(run("eval-spce --sequence '" + (dir / "sequence.csv").string() + "' " +
              common(write_config(dir, doc), dir)) == 2);
  }
}
