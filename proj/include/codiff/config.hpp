#pragma once

#include "codiff/diffusion.hpp"
#include "codiff/driver.hpp"
#include "codiff/evaluation.hpp"
#include "codiff/models.hpp"

#include <nlohmann/json_fwd.hpp>

#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>

namespace codiff {

inline constexpr int kRunConfigSchemaVersion = 1;

/// Invalid run configuration; the message names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::string id = "linear_gaussian";
  LinearGaussian1D::Params linear_gaussian{};
  SourceLocation::Params source{};
  SmoothMaskInverse::Params mask{};
  std::vector<GaussianMixture::Component> mask_prior;
};

enum class LoopAlgorithm { single, nested };

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  ModelConfig model;

  LoopAlgorithm algorithm = LoopAlgorithm::single;
  LoopConfig loop{};
  std::optional<Vec> initial_design;

  AdamConfig adam{};
  std::optional<Box> bounds;

  std::size_t posterior_steps = 200;
  StepSchedule posterior_step{};

  bool diffusion_enabled = false;
  VpSchedule schedule{};
  PassConfig pass{};

  std::size_t experiments = 30;
  std::optional<Vec> theta_star;
  bool random_baseline = false;

  SpceConfig metrics{};
  std::optional<std::string> sequence_csv;
  DiagnosticsConfig diagnostics{};
};

/// Strict parse: unknown keys, wrong types and out-of-range values raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

/// Accepted keys per section ("" is the top level); kept in step with schemas/run_config.schema.json.
const std::map<std::string, std::set<std::string>>& config_keys();

std::unique_ptr<Model> make_model(const ModelConfig& cfg);
/// Closed-form score oracle for the model's prior; null when the prior is not a Gaussian mixture.
std::shared_ptr<const ScoreOracle> make_oracle(const ModelConfig& cfg);

/// Loop settings with the diffusion sampler attached when enabled.
LoopConfig loop_config(const RunConfig& cfg);
SequentialConfig sequential_config(const RunConfig& cfg, bool random_designs);
Box design_bounds(const RunConfig& cfg, const Model& model);
/// The configured true parameter, else a prior draw keyed by the seed.
Vec resolve_theta_star(const RunConfig& cfg, const Model& model);

}  // namespace codiff
