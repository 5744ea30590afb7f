#include "codiff/driver.hpp"

#include "codiff/numerics.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace codiff {

void AdamConfig::validate() const {
  require(lr0 > 0.0, "AdamConfig: lr0 must be positive");
  require(decay > 0.0 && decay <= 1.0, "AdamConfig: decay must lie in (0, 1]");
  require(transition_steps > 0.0, "AdamConfig: transition_steps must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "AdamConfig: betas must lie in [0, 1)");
  require(epsilon > 0.0, "AdamConfig: epsilon must be positive");
}

OptimizerState::OptimizerState(AdamConfig cfg, Box bounds) : cfg_(cfg), bounds_(std::move(bounds)) {
  cfg_.validate();
  require(bounds_.dim() >= 1, "OptimizerState: empty bounds");
  m_ = Vec::Zero(bounds_.dim());
  v_ = Vec::Zero(bounds_.dim());
}

double OptimizerState::learning_rate() const {
  return cfg_.lr0 * std::pow(cfg_.decay, static_cast<double>(steps_) / cfg_.transition_steps);
}

Vec OptimizerState::step(const Vec& xi, const Vec& grad) {
  require(xi.size() == bounds_.dim() && grad.size() == bounds_.dim(), "OptimizerState::step: dimension mismatch");
  require(grad.allFinite(), "OptimizerState::step: non-finite gradient");
  const double lr = learning_rate();
  ++steps_;
  const double t = static_cast<double>(steps_);
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
  const Vec m_hat = m_ / (1.0 - std::pow(cfg_.beta1, t));
  const Vec v_hat = v_ / (1.0 - std::pow(cfg_.beta2, t));
  const Vec moved = xi + lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.epsilon)).matrix();
  return bounds_.project(moved);
}

Design update_design(OptimizerState& opt, const Design& xi, const GradEstimate& grad) {
  return Design(opt.step(xi.xi, grad.grad), opt.bounds());
}

void LoopConfig::validate() const {
  require(joint_steps >= 1 && contrastive_steps >= 1, "LoopConfig: sampler step counts must be positive");
  require(n_joint >= 1 && n_contrastive >= 1, "LoopConfig: cloud sizes must be positive");
  joint_step.validate();
  contrastive_step.validate();
  if (digs) digs->validate();
  if (diffusion) {
    require(diffusion->oracle != nullptr, "LoopConfig: diffusion sampler needs a score oracle");
    diffusion->schedule.validate();
  }
}

void SequentialConfig::validate() const {
  loop.validate();
  adam.validate();
  posterior_step.validate();
  metrics.validate();
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Salts separating the random streams of independent sub-tasks.
constexpr std::uint64_t kInnerCloudSalt = 0x1001;
constexpr std::uint64_t kBoundarySalt = 0x1002;
constexpr std::uint64_t kEvaluationSalt = 0x1003;
constexpr std::uint64_t kDiffusionSalt = 0x1004;

DiagonalObservation observation_of(const Model& model, const Vec& xi) {
  const auto obs = model.linear_observation(xi);
  require(obs.has_value(), "diffusion sampler: model '" + model.name() + "' has no linear observation");
  return *obs;
}

struct Clouds {
  JointCloud joint;
  ContrastiveCloud contrastive;
  /// One posterior cloud per joint particle; nested estimator only.
  std::vector<ContrastiveCloud> inner;
};

std::vector<ContrastiveCloud> inner_prior_clouds(const Model& model, const LoopConfig& cfg, const RngStreams& rng,
                                                 std::uint64_t step) {
  const StepRng draws = rng.derive(kInnerCloudSalt).step(Stream::prior_init, step);
  std::vector<ContrastiveCloud> out;
  out.reserve(cfg.n_joint);
  for (std::size_t i = 0; i < cfg.n_joint; ++i) {
    const std::uint64_t first = i * cfg.n_contrastive;
    std::vector<Vec> thetas(cfg.n_contrastive);
    for (std::size_t j = 0; j < cfg.n_contrastive; ++j) {
      CounterRng r = draws.particle(first + j);
      thetas[j] = model.sample_prior(r);
    }
    out.emplace_back(std::move(thetas), first);
  }
  return out;
}

Clouds initial_clouds(const Model& model, const Vec& xi, const LoopConfig& cfg, const RngStreams& rng,
                      std::uint64_t step, LoopInit& init) {
  Clouds c{init.joint ? std::move(*init.joint)
                      : sample_joint_prior(model, xi, cfg.n_joint, rng.step(Stream::prior_init, 2 * step)),
           init.contrastive ? std::move(*init.contrastive)
                            : sample_contrastive_prior(model, cfg.n_contrastive, rng.step(Stream::prior_init, 2 * step + 1)),
           {}};
  init.joint.reset();
  init.contrastive.reset();
  require(c.joint.size() == cfg.n_joint, "loop: warm-start joint cloud size differs from n_joint");
  require(c.contrastive.size() == cfg.n_contrastive, "loop: warm-start contrastive cloud size differs from n_contrastive");
  if (cfg.estimator == EstimatorKind::nested) c.inner = inner_prior_clouds(model, cfg, rng, step);
  return c;
}

LogTarget pooled_target(const Model& model, const History& hist, const OutcomeMeasure& rho, const Vec& xi) {
  return {[&model, &hist, &rho, &xi](const Vec& th) { return pooled_log_density_unnorm(model, hist, rho, xi, th); },
          [&model, &hist, &rho, &xi](const Vec& th) { return pooled_score(model, hist, rho, xi, th); }};
}

LogTarget prior_target(const Model& model, const History& hist) {
  return {[&model, &hist](const Vec& th) { return current_prior_log_density(model, hist, th); },
          [&model, &hist](const Vec& th) { return current_prior_score(model, hist, th); }};
}

std::vector<LikelihoodTerm> history_terms(const Model& model, const History& hist) {
  std::vector<LikelihoodTerm> terms;
  for (const Experiment& e : hist.entries()) terms.push_back({observation_of(model, e.xi), e.y, 1.0});
  return terms;
}

// Equally weighted cloud of the cloud's size from one conditional pass.
void diffusion_refill(ContrastiveCloud& cloud, const std::vector<LikelihoodTerm>& terms, const DiffusionSampler& ds,
                      const RngStreams& rng) {
  PassConfig pass = ds.pass;
  pass.particles = cloud.size();
  WeightedSample sample = terms.empty() ? unconditional_pass(*ds.oracle, ds.schedule, pass.particles, rng)
                                        : conditional_pass(*ds.oracle, terms, ds.schedule, pass, rng);
  CounterRng r = rng.stream(Stream::resample, 0, 2);
  apply_ancestors(sample.particles, systematic_resample(sample.weights, cloud.size(), r));
  cloud.theta = std::move(sample.particles);
}

void diffusion_update(const Model& model, const History& hist, const Vec& xi, const OutcomeMeasure& rho,
                      const LoopConfig& cfg, Clouds& c, const RngStreams& rng, std::uint64_t step) {
  const DiffusionSampler& ds = *cfg.diffusion;
  const RngStreams pass_rng = rng.derive(kDiffusionSalt).derive(step);
  std::vector<LikelihoodTerm> terms = history_terms(model, hist);
  switch (cfg.estimator) {
    case EstimatorKind::pooled: {
      const DiagonalObservation obs = observation_of(model, xi);
      for (std::size_t i = 0; i < rho.size(); ++i)
        terms.push_back({obs, rho.atoms[i], rho.weights.nu[static_cast<Eigen::Index>(i)]});
      diffusion_refill(c.contrastive, terms, ds, pass_rng);
      break;
    }
    case EstimatorKind::prior_is:
      diffusion_refill(c.contrastive, terms, ds, pass_rng);
      break;
    case EstimatorKind::nested: {
      const DiagonalObservation obs = observation_of(model, xi);
      for (std::size_t i = 0; i < c.inner.size(); ++i) {
        std::vector<LikelihoodTerm> own = terms;
        own.push_back({obs, c.joint.y[i], 1.0});
        diffusion_refill(c.inner[i], own, ds, pass_rng.derive(i));
      }
      break;
    }
  }
}

void contrastive_update(const Model& model, const History& hist, const Vec& xi, const OutcomeMeasure& rho,
                        const LoopConfig& cfg, Clouds& c, double gamma, const RngStreams& rng, std::uint64_t step) {
  if (cfg.diffusion) {
    diffusion_update(model, hist, xi, rho, cfg, c, rng, step);
    return;
  }
  const StepRng srng = rng.step(Stream::contrastive, step);
  switch (cfg.estimator) {
    case EstimatorKind::pooled:
      if (cfg.digs)
        digs_sweep(c.contrastive.theta, c.contrastive.stream_ids, pooled_target(model, hist, rho, xi), *cfg.digs, srng);
      else
        pooled_langevin_step(c.contrastive, model, hist, xi, rho, gamma, srng);
      break;
    case EstimatorKind::prior_is:
      if (cfg.digs)
        digs_sweep(c.contrastive.theta, c.contrastive.stream_ids, prior_target(model, hist), *cfg.digs, srng);
      else
        posterior_langevin_step(c.contrastive.theta, c.contrastive.stream_ids, model, hist, gamma, srng);
      break;
    case EstimatorKind::nested: {
      const StepRng irng = rng.step(Stream::inner, step);
      for (std::size_t i = 0; i < c.inner.size(); ++i) {
        const OutcomeMeasure single({c.joint.y[i]}, PoolingWeights::uniform(1));
        if (cfg.digs)
          digs_sweep(c.inner[i].theta, c.inner[i].stream_ids, pooled_target(model, hist, single, xi), *cfg.digs, irng);
        else
          pooled_langevin_step(c.inner[i], model, hist, xi, single, gamma, irng);
      }
      break;
    }
  }
}

GradEstimate estimate(const Model& model, const Vec& xi, const LoopConfig& cfg, const Clouds& c) {
  switch (cfg.estimator) {
    case EstimatorKind::pooled:
      return grad_pooled_snis(model, xi, c.joint, c.contrastive, PoolingWeights::uniform(c.joint.size()),
                              cfg.row_policy);
    case EstimatorKind::prior_is:
      return grad_prior_is(model, xi, c.joint, c.contrastive, cfg.row_policy);
    case EstimatorKind::nested:
      return grad_nested_mc(model, xi, c.joint, c.inner);
  }
  throw std::logic_error("estimate: unknown estimator");
}

// Resamples when the incremental weights' ESS drops below half the cloud size.
template <class Cloud>
bool resample_if_degenerate(Cloud& cloud, const Vec& log_w, const RngStreams& rng, std::uint64_t step,
                            std::uint64_t which) {
  Vec w;
  if (!normalize_log_weights(log_w, w)) {
    spdlog::warn("incremental resampling skipped: no finite weight");
    return false;
  }
  if (ess(w) >= 0.5 * static_cast<double>(cloud.size())) return false;
  CounterRng r = rng.stream(Stream::resample, step, which);
  apply_ancestors(cloud, systematic_resample(w, cloud.size(), r));
  return true;
}

// Weights p(y|θ, ξ_new)/p(y|θ, ξ_old) for the joint cloud. With exact outcome redraws the θ target
// does not depend on ξ, so only the full-joint mode needs them.
bool joint_incremental(const Model& model, const Vec& xi, const Vec& prev_xi, const LoopConfig& cfg, Clouds& c,
                       const RngStreams& rng, std::uint64_t step) {
  if (cfg.joint_mode != JointMode::full_joint) return false;
  Vec log_w(static_cast<Eigen::Index>(c.joint.size()));
  for (std::size_t i = 0; i < c.joint.size(); ++i)
    log_w[static_cast<Eigen::Index>(i)] =
        model.log_lik(c.joint.y[i], c.joint.theta[i], xi) - model.log_lik(c.joint.y[i], c.joint.theta[i], prev_xi);
  return resample_if_degenerate(c.joint, log_w, rng, step, 0);
}

// Weights q_new/q_old for the pooled cloud; the history factors cancel.
bool contrastive_incremental(const Model& model, const Vec& xi, const OutcomeMeasure& rho, const Vec& prev_xi,
                             const OutcomeMeasure& prev_rho, const LoopConfig& cfg, Clouds& c, const RngStreams& rng,
                             std::uint64_t step) {
  if (cfg.estimator != EstimatorKind::pooled) return false;
  const History none;
  Vec log_w(static_cast<Eigen::Index>(c.contrastive.size()));
  for (std::size_t j = 0; j < c.contrastive.size(); ++j) {
    const Vec& th = c.contrastive.theta[j];
    log_w[static_cast<Eigen::Index>(j)] = pooled_log_density_unnorm(model, none, rho, xi, th) -
                                          pooled_log_density_unnorm(model, none, prev_rho, prev_xi, th);
  }
  return resample_if_degenerate(c.contrastive, log_w, rng, step, 1);
}

struct Previous {
  Vec xi;
  OutcomeMeasure rho;
};

// Shared outer loop; the nested variant runs blocks of sampler steps and may reinitialize.
LoopResult run_loop(const Model& model, const History& hist, const Design& start, const LoopConfig& cfg,
                    OptimizerState& opt, const RngStreams& rng, LoopInit init, std::size_t joint_steps,
                    std::size_t contrastive_steps, bool reinitialize) {
  cfg.validate();
  require(start.xi.size() == model.design_dim(), "loop: design dimension mismatch");
  require(opt.bounds().contains(start.xi), "loop: initial design outside the optimizer bounds");
  Design design(start.xi, opt.bounds());
  Clouds c = initial_clouds(model, design.xi, cfg, rng, 0, init);
  std::optional<Previous> prev;
  std::vector<TraceRow> trace;
  trace.reserve(cfg.t_outer);
  std::size_t consecutive_skips = 0;
  for (std::size_t t = 0; t < cfg.t_outer; ++t) {
    const auto started = Clock::now();
    const Vec xi = design.xi;
    if (reinitialize && t > 0) {
      c = initial_clouds(model, xi, cfg, rng, t, init);
      prev.reset();
    }
    TraceRow row;
    row.iter = t;
    row.design_stamp = t;
    row.cloud_stamp = t + 1;
    if (cfg.resample == ResamplePolicy::incremental && prev)
      row.joint_resampled = joint_incremental(model, xi, prev->xi, cfg, c, rng, t);
    for (std::size_t s = 0; s < joint_steps; ++s) {
      const std::size_t step = t * joint_steps + s;
      joint_langevin_step(c.joint, model, hist, xi, cfg.joint_step.at(step), rng.step(Stream::joint, step),
                          cfg.joint_mode);
    }
    OutcomeMeasure rho = OutcomeMeasure::empirical(c.joint.y);
    if (cfg.resample == ResamplePolicy::incremental && prev)
      row.contrastive_resampled = contrastive_incremental(model, xi, rho, prev->xi, prev->rho, cfg, c, rng, t);
    // A diffusion pass draws a fresh cloud, so repeating it within a block adds nothing.
    const std::size_t block = cfg.diffusion ? 1 : contrastive_steps;
    for (std::size_t s = 0; s < block; ++s) {
      const std::size_t step = t * contrastive_steps + s;
      contrastive_update(model, hist, xi, rho, cfg, c, cfg.contrastive_step.at(step), rng, step);
    }
    const GradEstimate grad = estimate(model, xi, cfg, c);
    row.ess_min = grad.ess_min;
    row.grad_norm = grad.grad.norm();
    if (grad.finite()) {
      design = update_design(opt, design, grad);
      consecutive_skips = 0;
    } else {
      row.skipped = true;
      spdlog::warn("iteration {}: non-finite gradient, design update skipped", t);
      if (++consecutive_skips > cfg.max_consecutive_skips)
        throw NumericFailure(t, "too many consecutive non-finite gradients at iteration " + std::to_string(t));
    }
    if (!opt.bounds().contains(design.xi)) throw std::logic_error("loop: projected design left the bounds");
    row.xi = design.xi;
    prev = Previous{xi, std::move(rho)};
    row.wall_ms = elapsed_ms(started);
    trace.push_back(std::move(row));
  }
  return {std::move(design), std::move(c.joint), std::move(c.contrastive), std::move(trace)};
}

}  // namespace

Vec uniform_in_box(const Box& box, CounterRng& rng) {
  Vec out(box.dim());
  for (Eigen::Index i = 0; i < box.dim(); ++i) out[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform();
  return out;
}

LoopResult run_single_loop(const Model& model, const History& hist, const Design& start, const LoopConfig& cfg,
                           OptimizerState& opt, const RngStreams& rng, LoopInit init) {
  return run_loop(model, hist, start, cfg, opt, rng, std::move(init), 1, 1, false);
}

LoopResult run_nested_loop(const Model& model, const History& hist, const Design& start, const LoopConfig& cfg,
                           OptimizerState& opt, const RngStreams& rng, LoopInit init) {
  return run_loop(model, hist, start, cfg, opt, rng, std::move(init), cfg.joint_steps, cfg.contrastive_steps,
                  cfg.reinitialize);
}

SequentialRun run_sequential(const Model& model, SequentialRun run, const SequentialConfig& cfg,
                             const RngStreams& rng) {
  cfg.validate();
  require(run.theta_star.size() == model.theta_dim(), "run_sequential: theta_star dimension mismatch");
  const Box box = cfg.bounds.value_or(model.default_bounds());
  require(box.dim() == model.design_dim(), "run_sequential: bounds dimension mismatch");
  const RngStreams eval_rng = rng.derive(kEvaluationSalt);
  const std::size_t first = run.history.size() + 1;
  const std::size_t last = run.history.size() + cfg.experiments;
  std::optional<JointCloud> joint;
  std::optional<ContrastiveCloud> contrastive;
  const std::size_t refresh_steps = cfg.posterior_steps + (cfg.random_designs ? cfg.loop.t_outer : 0);

  for (std::size_t k = first; k <= last; ++k) {
    const auto started = Clock::now();
    const RngStreams step_rng = rng.derive(k);
    CounterRng init_rng = step_rng.stream(Stream::design_init, 0, 0);
    Vec xi = uniform_in_box(box, init_rng);
    if (!cfg.random_designs) {
      OptimizerState opt(cfg.adam, box);
      LoopResult res = run_single_loop(model, run.history, Design(xi, box), cfg.loop, opt, step_rng,
                                       LoopInit{std::move(joint), std::move(contrastive)});
      xi = res.design.xi;
      joint = std::move(res.joint);
      contrastive = std::move(res.contrastive);
    }
    if (!joint) joint = sample_joint_prior(model, xi, cfg.loop.n_joint, step_rng.step(Stream::prior_init, 0));

    CounterRng outcome_rng = step_rng.stream(Stream::outcome, 0, 0);
    Vec y = sample_outcome(model, run.theta_star, xi, outcome_rng);
    run.history.append(xi, y);

    // Move the joint cloud from p(θ|D_{k-1}) to p(θ|D_k): reweight, resample if degenerate, refresh.
    const RngStreams boundary = step_rng.derive(kBoundarySalt);
    Vec log_w(static_cast<Eigen::Index>(joint->size()));
    for (std::size_t i = 0; i < joint->size(); ++i)
      log_w[static_cast<Eigen::Index>(i)] = model.log_lik(y, joint->theta[i], xi);
    Vec w;
    if (!normalize_log_weights(log_w, w))
      throw NumericFailure(k, "run_sequential: new outcome has zero likelihood under every particle");
    if (ess(w) < 0.5 * static_cast<double>(joint->size())) {
      CounterRng r = boundary.stream(Stream::resample, 0, 0);
      apply_ancestors(*joint, systematic_resample(w, joint->size(), r));
    }
    for (std::size_t s = 0; s < refresh_steps; ++s)
      posterior_langevin_step(joint->theta, joint->stream_ids, model, run.history, cfg.posterior_step.at(s),
                              boundary.step(Stream::refresh, s));
    resample_outcomes(*joint, model, xi, boundary.step(Stream::outcome, 0));

    ExperimentRecord rec;
    rec.xi = xi;
    rec.y = y;
    rec.metrics.k = k;
    const BoundPair b = spce_snmc(model, run.history, run.theta_star, cfg.metrics, eval_rng);
    rec.metrics.spce = b.spce;
    rec.metrics.snmc = b.snmc;
    rec.metrics.w2 = w2_to_truth(joint->theta, run.theta_star);
    rec.metrics.wall_ms = elapsed_ms(started);
    spdlog::info("experiment {}: spce {:.4f} snmc {:.4f} w2 {:.4f}", k, b.spce, b.snmc, rec.metrics.w2);
    run.records.push_back(std::move(rec));
  }
  return run;
}

}  // namespace codiff
