#include "codiff/samplers.hpp"

#include "codiff/numerics.hpp"
#include "codiff/parallel.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>

namespace codiff {

namespace {

void report_resets(const char* where, std::size_t resets) {
  if (resets > 0) spdlog::warn("{}: {} particle(s) reset after a non-finite update", where, resets);
}

}  // namespace

double StepSchedule::at(std::size_t step) const {
  return std::max(floor, gamma0 * std::pow(decay, static_cast<double>(step)));
}

void StepSchedule::validate() const {
  require(gamma0 > 0.0, "StepSchedule: gamma0 must be positive");
  require(decay > 0.0 && decay <= 1.0, "StepSchedule: decay must lie in (0, 1]");
  require(floor >= 0.0, "StepSchedule: floor must be non-negative");
}

void DigsConfig::validate() const {
  require(noise_scale > 0.0, "DigsConfig: noise_scale must be positive");
  require(denoise_steps > 0, "DigsConfig: denoise_steps must be positive");
  require(denoise_step_size > 0.0, "DigsConfig: denoise_step_size must be positive");
}

StepStats langevin_step(std::vector<Vec>& particles, const std::vector<std::uint64_t>& stream_ids,
                        const std::function<Vec(const Vec&)>& score, double gamma, const StepRng& rng) {
  require(gamma > 0.0, "langevin_step: step size must be positive");
  require(particles.size() == stream_ids.size(), "langevin_step: stream id count mismatch");
  const double noise = std::sqrt(2.0 * gamma);
  std::atomic<std::size_t> resets{0};
  parallel_for(particles.size(), [&](std::size_t i) {
    CounterRng r = rng.particle(stream_ids[i]);
    const Vec& x = particles[i];
    Vec next = x + gamma * score(x) + noise * r.normal_vec(x.size());
    if (next.allFinite())
      particles[i] = std::move(next);
    else
      ++resets;
  });
  return {resets.load(), 0};
}

StepStats joint_langevin_step(JointCloud& cloud, const Model& model, const History& hist, const Vec& xi, double gamma,
                              const StepRng& rng, JointMode mode) {
  require(gamma > 0.0, "joint_langevin_step: step size must be positive");
  require(xi.size() == model.design_dim(), "joint_langevin_step: design dimension mismatch");
  const double noise = std::sqrt(2.0 * gamma);
  std::atomic<std::size_t> resets{0};
  parallel_for(cloud.size(), [&](std::size_t i) {
    CounterRng r = rng.particle(cloud.stream_ids[i]);
    Vec& theta = cloud.theta[i];
    Vec& y = cloud.y[i];
    if (mode == JointMode::split) {
      Vec next = theta + gamma * current_prior_score(model, hist, theta) + noise * r.normal_vec(theta.size());
      if (next.allFinite())
        theta = std::move(next);
      else
        ++resets;
      y = sample_outcome(model, theta, xi, r);
      return;
    }
    const Vec drift_theta = current_prior_score(model, hist, theta) + model.grad_theta_log_lik(y, theta, xi);
    const Vec drift_y = model.grad_y_log_lik(y, theta, xi);
    Vec next_theta = theta + gamma * drift_theta + noise * r.normal_vec(theta.size());
    Vec next_y = y + gamma * drift_y + noise * r.normal_vec(y.size());
    if (next_theta.allFinite() && next_y.allFinite() && std::isfinite(model.log_lik(next_y, next_theta, xi))) {
      theta = std::move(next_theta);
      y = std::move(next_y);
    } else {
      ++resets;
    }
  });
  report_resets("joint_langevin_step", resets.load());
  return {resets.load(), 0};
}

StepStats pooled_langevin_step(ContrastiveCloud& cloud, const Model& model, const History& hist, const Vec& xi,
                               const OutcomeMeasure& rho, double gamma, const StepRng& rng) {
  require(rho.size() >= 1, "pooled_langevin_step: empty outcome measure");
  const auto score = [&](const Vec& theta) { return pooled_score(model, hist, rho, xi, theta); };
  const StepStats stats = langevin_step(cloud.theta, cloud.stream_ids, score, gamma, rng);
  report_resets("pooled_langevin_step", stats.resets);
  return stats;
}

StepStats posterior_langevin_step(std::vector<Vec>& particles, const std::vector<std::uint64_t>& stream_ids,
                                  const Model& model, const History& hist, double gamma, const StepRng& rng) {
  const auto score = [&](const Vec& theta) { return current_prior_score(model, hist, theta); };
  const StepStats stats = langevin_step(particles, stream_ids, score, gamma, rng);
  report_resets("posterior_langevin_step", stats.resets);
  return stats;
}

StepStats digs_sweep(std::vector<Vec>& particles, const std::vector<std::uint64_t>& stream_ids, const LogTarget& target,
                     const DigsConfig& cfg, const StepRng& rng) {
  cfg.validate();
  require(particles.size() == stream_ids.size(), "digs_sweep: stream id count mismatch");
  const double sigma = cfg.noise_scale;
  const double inv_var = 1.0 / (sigma * sigma);
  const double eta = cfg.denoise_step_size;
  const double noise = std::sqrt(2.0 * eta);
  std::atomic<std::size_t> resets{0};
  std::atomic<std::size_t> accepted{0};
  parallel_for(particles.size(), [&](std::size_t i) {
    CounterRng r = rng.particle(stream_ids[i]);
    const Vec start = particles[i];
    const Vec noised = start + sigma * r.normal_vec(start.size());
    // The proposal N(x̃, σ²) cancels the Gaussian coupling, leaving the ratio π(x')/π(x).
    Vec x = start;
    const Vec proposal = noised + sigma * r.normal_vec(start.size());
    const double log_ratio = target.log_density(proposal) - target.log_density(start);
    if (std::log(r.uniform()) < log_ratio) {
      x = proposal;
      ++accepted;
    }
    for (int s = 0; s < cfg.denoise_steps; ++s) {
      const Vec drift = target.score(x) - (x - noised) * inv_var;
      Vec next = x + eta * drift + noise * r.normal_vec(x.size());
      if (!next.allFinite()) {
        ++resets;
        return;
      }
      x = std::move(next);
    }
    particles[i] = std::move(x);
  });
  report_resets("digs_sweep", resets.load());
  return {resets.load(), accepted.load()};
}

double ess(const Vec& w) {
  require(w.size() >= 1, "ess: empty weights");
  const double total = w.sum();
  require(total > 0.0 && std::isfinite(total), "ess: weights must have positive finite mass");
  return total * total / w.squaredNorm();
}

std::vector<std::size_t> systematic_resample(const Vec& w, std::size_t n_out, CounterRng& rng) {
  require(w.size() >= 1 && n_out >= 1, "systematic_resample: empty input");
  require((w.array() >= 0.0).all() && w.allFinite(), "systematic_resample: weights must be finite and non-negative");
  const double total = w.sum();
  if (!(total > 0.0)) throw DegenerateWeightsError(0, "systematic_resample: all weights are zero");
  std::vector<std::size_t> ancestors(n_out);
  const double step = 1.0 / static_cast<double>(n_out);
  const double offset = rng.uniform() * step;
  double cumulative = w[0] / total;
  std::size_t j = 0;
  auto last = static_cast<std::size_t>(w.size() - 1);
  while (last > 0 && w[static_cast<Eigen::Index>(last)] == 0.0) --last;  // rounding must never select a zero-weight tail
  for (std::size_t k = 0; k < n_out; ++k) {
    const double position = offset + static_cast<double>(k) * step;
    while (position > cumulative && j < last) cumulative += w[static_cast<Eigen::Index>(++j)] / total;
    ancestors[k] = j;
  }
  return ancestors;
}

std::vector<std::size_t> systematic_resample_log(const Vec& log_w, std::size_t n_out, CounterRng& rng) {
  Vec w;
  if (!normalize_log_weights(log_w, w)) throw DegenerateWeightsError(0, "systematic_resample: no finite log weight");
  return systematic_resample(w, n_out, rng);
}

void apply_ancestors(std::vector<Vec>& particles, const std::vector<std::size_t>& ancestors) {
  std::vector<Vec> next;
  next.reserve(ancestors.size());
  for (std::size_t a : ancestors) {
    require(a < particles.size(), "apply_ancestors: ancestor index out of range");
    next.push_back(particles[a]);
  }
  particles = std::move(next);
}

void apply_ancestors(JointCloud& cloud, const std::vector<std::size_t>& ancestors) {
  require(ancestors.size() == cloud.size(), "apply_ancestors: cloud size must be preserved");
  apply_ancestors(cloud.theta, ancestors);
  apply_ancestors(cloud.y, ancestors);
}

void apply_ancestors(ContrastiveCloud& cloud, const std::vector<std::size_t>& ancestors) {
  require(ancestors.size() == cloud.size(), "apply_ancestors: cloud size must be preserved");
  apply_ancestors(cloud.theta, ancestors);
}

}  // namespace codiff
