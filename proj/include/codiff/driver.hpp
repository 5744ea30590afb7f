#pragma once

#include "codiff/diffusion.hpp"
#include "codiff/evaluation.hpp"
#include "codiff/gradients.hpp"
#include "codiff/samplers.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace codiff {

/// Adam with learning rate lr0 · decay^(step / transition_steps).
struct AdamConfig {
  double lr0 = 1e-2;
  double decay = 0.98;
  double transition_steps = 100.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

class OptimizerState {
 public:
  OptimizerState(AdamConfig cfg, Box bounds);

  const AdamConfig& config() const { return cfg_; }
  const Box& bounds() const { return bounds_; }
  std::size_t steps() const { return steps_; }
  /// Learning rate the next update will use.
  double learning_rate() const;
  const Vec& first_moment() const { return m_; }
  const Vec& second_moment() const { return v_; }

  /// Adam ascent step followed by projection onto the bounds.
  Vec step(const Vec& xi, const Vec& grad);

 private:
  AdamConfig cfg_;
  Box bounds_;
  std::size_t steps_ = 0;
  Vec m_;
  Vec v_;
};

/// Ascent step on ξ; the result carries the optimizer's bounds.
Design update_design(OptimizerState& opt, const Design& xi, const GradEstimate& grad);

/// none: never resample inside the loop.
/// incremental: weight each cloud by the ratio of its new to its old target at the current
/// particles and resample systematically when ESS < size/2.
enum class ResamplePolicy { none, incremental };

/// Contrastive clouds drawn by a conditional reverse-diffusion pass instead of Langevin steps. Needs a
/// model with a diagonal linear observation and a score oracle for its prior.
struct DiffusionSampler {
  std::shared_ptr<const ScoreOracle> oracle;
  VpSchedule schedule{};
  PassConfig pass{};
};

struct LoopConfig {
  std::size_t t_outer = 5000;
  /// Joint and contrastive sampler steps per outer iteration of the nested loop.
  std::size_t joint_steps = 50;
  std::size_t contrastive_steps = 50;
  std::size_t n_joint = 200;
  std::size_t n_contrastive = 200;
  EstimatorKind estimator = EstimatorKind::pooled;
  ResamplePolicy resample = ResamplePolicy::none;
  JointMode joint_mode = JointMode::split;
  StepSchedule joint_step{};
  StepSchedule contrastive_step{};
  /// Replace ULA on the contrastive cloud by DiGS sweeps.
  std::optional<DigsConfig> digs;
  std::optional<DiffusionSampler> diffusion;
  DegenerateRowPolicy row_policy = DegenerateRowPolicy::uniform_fallback;
  /// Nested loop only: redraw both clouds from the prior at every outer step.
  bool reinitialize = true;
  /// Consecutive skipped updates tolerated before the run fails.
  std::size_t max_consecutive_skips = 50;

  void validate() const;
};

struct TraceRow {
  std::size_t iter = 0;
  Vec xi;
  double grad_norm = 0.0;
  double ess_min = 0.0;
  double wall_ms = 0.0;
  /// Version of the clouds and of the design the gradient was computed from.
  std::size_t cloud_stamp = 0;
  std::size_t design_stamp = 0;
  bool joint_resampled = false;
  bool contrastive_resampled = false;
  bool skipped = false;
};

/// Optional warm start; empty clouds are drawn from the prior.
struct LoopInit {
  std::optional<JointCloud> joint;
  std::optional<ContrastiveCloud> contrastive;
};

struct LoopResult {
  Design design;
  JointCloud joint;
  ContrastiveCloud contrastive;
  std::vector<TraceRow> trace;
};

/// Uniform draw on the box, one variate per coordinate.
Vec uniform_in_box(const Box& box, CounterRng& rng);

LoopResult run_single_loop(const Model& model, const History& hist, const Design& start, const LoopConfig& cfg,
                           OptimizerState& opt, const RngStreams& rng, LoopInit init = {});

LoopResult run_nested_loop(const Model& model, const History& hist, const Design& start, const LoopConfig& cfg,
                           OptimizerState& opt, const RngStreams& rng, LoopInit init = {});

struct SequentialConfig {
  std::size_t experiments = 30;
  LoopConfig loop{};
  AdamConfig adam{};
  /// Box for designs; the model's default box when unset.
  std::optional<Box> bounds;
  /// ULA steps on the joint cloud after each new outcome.
  std::size_t posterior_steps = 200;
  StepSchedule posterior_step{};
  SpceConfig metrics{};
  /// Designs drawn uniformly on the box instead of optimized.
  bool random_designs = false;

  void validate() const;
};

struct ExperimentRecord {
  MetricRecord metrics;
  Vec xi;
  Vec y;
};

struct SequentialRun {
  Vec theta_star;
  History history;
  std::vector<ExperimentRecord> records;
};

/// Greedy sequential design: for k = 1..K optimize ξ_k against the history, observe y_k ~ p(y|θ*, ξ_k),
/// update the particle clouds and record metrics. Continues from a non-empty history.
SequentialRun run_sequential(const Model& model, SequentialRun run, const SequentialConfig& cfg, const RngStreams& rng);

}  // namespace codiff
