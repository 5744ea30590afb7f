#include "codiff/diffusion.hpp"

#include "codiff/numerics.hpp"
#include "codiff/parallel.hpp"
#include "codiff/samplers.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace codiff {

void VpSchedule::validate() const {
  require(beta_min > 0.0 && beta_max >= beta_min, "VpSchedule: need 0 < beta_min <= beta_max");
  require(horizon > t0, "VpSchedule: horizon must exceed t0");
  require(n_steps >= 1, "VpSchedule: n_steps must be positive");
}

double VpSchedule::beta(double t) const { return beta_min + (beta_max - beta_min) * (t - t0) / (horizon - t0); }

double VpSchedule::integrated_beta(double t) const {
  const double u = t - t0;
  return beta_min * u + (beta_max - beta_min) * u * u / (2.0 * (horizon - t0));
}

double VpSchedule::alpha_bar(double t) const { return std::exp(-integrated_beta(t)); }

double VpSchedule::time_for_alpha_bar(double ab) const {
  require(ab > 0.0 && ab <= 1.0, "VpSchedule::time_for_alpha_bar: alpha_bar must lie in (0, 1]");
  const double target = -std::log(ab);
  const double quad = (beta_max - beta_min) / (2.0 * (horizon - t0));
  if (quad == 0.0) return t0 + target / beta_min;
  return t0 + (-beta_min + std::sqrt(beta_min * beta_min + 4.0 * quad * target)) / (2.0 * quad);
}

double alpha_bar(const VpSchedule& sched, double t) { return sched.alpha_bar(t); }

Vec forward_noise(const Vec& x0, double t, const Vec& eps, const VpSchedule& sched) {
  require(x0.size() == eps.size(), "forward_noise: dimension mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Vec noise_observation(const Vec& y, double t, const Vec& eps, const DiagonalObservation& obs, const VpSchedule& sched) {
  require(y.size() == obs.a.size() && eps.size() == obs.a.size(), "noise_observation: dimension mismatch");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * y + std::sqrt(1.0 - ab) * obs.a.cwiseProduct(eps);
}

Vec reverse_step_with_score(const Vec& x, const Vec& score, double t, double dt, const VpSchedule& sched,
                            CounterRng& rng) {
  require(dt > 0.0, "reverse_step: dt must be positive");
  require(x.size() == score.size(), "reverse_step: score dimension mismatch");
  const double b = sched.beta(t);
  return x + (0.5 * b * x + b * score) * dt + std::sqrt(b * dt) * rng.normal_vec(x.size());
}

Vec reverse_step(const Vec& x, double t, double dt, const ScoreOracle& oracle, const VpSchedule& sched,
                 CounterRng& rng) {
  return reverse_step_with_score(x, oracle.score(x, sched.alpha_bar(t)), t, dt, sched, rng);
}

Vec fps_likelihood_score(const Vec& x, const Vec& y_t, double t, const DiagonalObservation& obs,
                         const VpSchedule& sched) {
  require(x.size() == obs.a.size() && y_t.size() == obs.a.size(), "fps_likelihood_score: dimension mismatch");
  const double var = obs.sigma * obs.sigma * sched.alpha_bar(t);
  return obs.a.cwiseProduct(y_t - obs.a.cwiseProduct(x)) / var;
}

Vec fps_conditional_reverse(const Vec& x, double t, double dt, const ScoreOracle& oracle, const Vec& y_t,
                            const DiagonalObservation& obs, const VpSchedule& sched, CounterRng& rng) {
  const Vec score = oracle.score(x, sched.alpha_bar(t)) + fps_likelihood_score(x, y_t, t, obs, sched);
  return reverse_step_with_score(x, score, t, dt, sched, rng);
}

Vec fps_pooled_reverse(const Vec& x, double t, double dt, const ScoreOracle& oracle, const std::vector<Vec>& y_ts,
                       const PoolingWeights& nu, const DiagonalObservation& obs, const VpSchedule& sched,
                       CounterRng& rng) {
  require(y_ts.size() == nu.size(), "fps_pooled_reverse: one pooling weight per observation");
  Vec score = oracle.score(x, sched.alpha_bar(t));
  for (std::size_t i = 0; i < y_ts.size(); ++i)
    score += nu.nu[static_cast<Eigen::Index>(i)] * fps_likelihood_score(x, y_ts[i], t, obs, sched);
  return reverse_step_with_score(x, score, t, dt, sched, rng);
}

Vec tweedie_predict(const Vec& x, double t, const ScoreOracle& oracle, const VpSchedule& sched) {
  const double ab = sched.alpha_bar(t);
  return (x + (1.0 - ab) * oracle.score(x, ab)) / std::sqrt(ab);
}

Vec fps_resample_weights(const std::vector<Vec>& particles, const std::vector<Vec>& y_ts, const PoolingWeights& nu,
                         const DiagonalObservation& obs, const VpSchedule& sched, double t) {
  require(!particles.empty(), "fps_resample_weights: no particles");
  require(y_ts.size() == nu.size(), "fps_resample_weights: one pooling weight per observation");
  const double sd = obs.sigma * std::sqrt(sched.alpha_bar(t));
  Vec log_w(static_cast<Eigen::Index>(particles.size()));
  for (std::size_t j = 0; j < particles.size(); ++j) {
    const Vec mean = obs.a.cwiseProduct(particles[j]);
    double lw = 0.0;
    for (std::size_t i = 0; i < y_ts.size(); ++i)
      lw += nu.nu[static_cast<Eigen::Index>(i)] * normal_log_density(y_ts[i], mean, sd);
    log_w[static_cast<Eigen::Index>(j)] = lw;
  }
  Vec w;
  if (!normalize_log_weights(log_w, w)) throw DegenerateWeightsError(0, "fps_resample_weights: no finite weight");
  return w;
}

namespace {

std::vector<Vec> initial_noise(Eigen::Index dim, std::size_t particles, const RngStreams& rng) {
  std::vector<Vec> x(particles);
  const StepRng init = rng.step(Stream::prior_init, 0);
  parallel_for(particles, [&](std::size_t j) {
    CounterRng r = init.particle(j);
    x[j] = r.normal_vec(dim);
  });
  return x;
}

WeightedSample uniform_result(std::vector<Vec> particles, std::size_t resamples) {
  WeightedSample out;
  const auto n = static_cast<Eigen::Index>(particles.size());
  out.particles = std::move(particles);
  out.weights = Vec::Constant(n, 1.0 / static_cast<double>(n));
  out.resample_count = resamples;
  out.final_ess = static_cast<double>(n);
  return out;
}

// Twist at forward time τ: Π_k N(y_k; A_k θ̂, σ_k² + A_k² c)^{w_k}, with θ̂ the Tweedie mean and c the
// Tweedie variance diagonal. At ᾱ = 1 it is the exact likelihood.
struct TwistValue {
  double log_value = 0.0;
  Vec grad;
  Vec score;
};

class Twist {
 public:
  Twist(const ScoreOracle& oracle, const std::vector<LikelihoodTerm>& terms) : oracle_(oracle), terms_(terms) {}

  TwistValue operator()(const Vec& x, double ab) const {
    TwistValue out;
    out.score = oracle_.score(x, ab);
    const double root = std::sqrt(ab);
    const Eigen::ArrayXd mean = ((x + (1.0 - ab) * out.score) / root).array();
    Eigen::ArrayXd cov = Eigen::ArrayXd::Zero(x.size());
    if (ab < 1.0) cov = (((1.0 - ab) / ab) * (1.0 + (1.0 - ab) * oracle_.hessian_diagonal(x, ab).array())).max(0.0);
    Eigen::ArrayXd pull = Eigen::ArrayXd::Zero(x.size());
    double log_value = 0.0;
    for (const LikelihoodTerm& term : terms_) {
      const Eigen::ArrayXd a = term.obs.a.array();
      const Eigen::ArrayXd var = term.obs.sigma * term.obs.sigma + a.square() * cov;
      const Eigen::ArrayXd r = term.y.array() - a * mean;
      log_value += term.weight * (-0.5 * (r.square() / var).sum() - 0.5 * (2.0 * kLogSqrt2Pi + var.log()).sum());
      pull += term.weight * a * r / var;
    }
    // Chain rule through θ̂ only; the variance term is held fixed.
    const Vec r = pull.matrix();
    out.grad = (ab < 1.0) ? Vec((r + (1.0 - ab) * oracle_.hessian_vector(x, ab, r)) / root) : r;
    out.log_value = log_value;
    return out;
  }

 private:
  const ScoreOracle& oracle_;
  const std::vector<LikelihoodTerm>& terms_;
};

WeightedSample twisted_pass(const ScoreOracle& oracle, const std::vector<LikelihoodTerm>& terms,
                            const VpSchedule& sched, const PassConfig& cfg, const RngStreams& rng) {
  const std::size_t m = cfg.particles;
  const Twist twist(oracle, terms);
  std::vector<Vec> x = initial_noise(oracle.dim(), m, rng);
  std::vector<TwistValue> current(m);
  Vec log_w(static_cast<Eigen::Index>(m));
  const double ab_top = sched.alpha_bar(sched.grid_time(sched.n_steps));
  parallel_for(m, [&](std::size_t j) {
    current[j] = twist(x[j], ab_top);
    log_w[static_cast<Eigen::Index>(j)] = current[j].log_value;
  });
  std::size_t resamples = 0;
  const double dt = sched.dt();
  Vec w;
  for (int k = sched.n_steps; k >= 1; --k) {
    const double t = sched.grid_time(k);
    const double ab_next = sched.alpha_bar(sched.grid_time(k - 1));
    if (!normalize_log_weights(log_w, w)) throw DegenerateWeightsError(0, "twisted_pass: all weights vanished");
    if (ess(w) < cfg.ess_fraction * static_cast<double>(m)) {
      CounterRng r = rng.stream(Stream::resample, static_cast<std::uint64_t>(k), 0);
      const auto ancestors = systematic_resample(w, m, r);
      std::vector<Vec> nx;
      std::vector<TwistValue> nc;
      nx.reserve(m);
      nc.reserve(m);
      for (std::size_t a : ancestors) {
        nx.push_back(x[a]);
        nc.push_back(current[a]);
      }
      x = std::move(nx);
      current = std::move(nc);
      log_w.setZero();
      ++resamples;
    }
    const double b = sched.beta(t);
    const double step_var = b * dt;
    const StepRng step = rng.step(Stream::diffusion, static_cast<std::uint64_t>(k));
    parallel_for(m, [&](std::size_t j) {
      CounterRng r = step.particle(j);
      const Vec& xj = x[j];
      const TwistValue& tv = current[j];
      const Vec base_mean = xj + (0.5 * b * xj + b * tv.score) * dt;
      const Vec prop_mean = base_mean + step_var * tv.grad;
      Vec next = prop_mean + std::sqrt(step_var) * r.normal_vec(xj.size());
      TwistValue nv = twist(next, ab_next);
      // Unconditional Euler kernel over the guided proposal, times the twist ratio.
      const double log_kernel_ratio =
          (-(next - base_mean).squaredNorm() + (next - prop_mean).squaredNorm()) / (2.0 * step_var);
      double& lw = log_w[static_cast<Eigen::Index>(j)];
      lw += log_kernel_ratio + nv.log_value - tv.log_value;
      if (!std::isfinite(lw)) lw = -std::numeric_limits<double>::infinity();
      x[j] = std::move(next);
      current[j] = std::move(nv);
    });
  }
  if (!normalize_log_weights(log_w, w)) throw DegenerateWeightsError(0, "twisted_pass: all weights vanished");
  WeightedSample out;
  out.particles = std::move(x);
  out.final_ess = ess(w);
  out.weights = std::move(w);
  out.resample_count = resamples;
  spdlog::debug("twisted_pass: {} resamples, final ESS {:.1f}", resamples, out.final_ess);
  return out;
}

WeightedSample literal_pass(const ScoreOracle& oracle, const std::vector<LikelihoodTerm>& terms,
                            const VpSchedule& sched, const PassConfig& cfg, const RngStreams& rng) {
  const std::size_t m = cfg.particles;
  std::vector<ObservationPath> paths(terms.size());
  for (std::size_t i = 0; i < terms.size(); ++i) {
    CounterRng r = rng.stream(Stream::observation_path, 0, i);
    paths[i] = {terms[i].y, r.normal_vec(terms[i].y.size())};
  }
  const auto path_values = [&](double t) {
    std::vector<Vec> out(paths.size());
    for (std::size_t i = 0; i < paths.size(); ++i) out[i] = paths[i].at(t, terms[i].obs, sched);
    return out;
  };
  std::vector<Vec> x = initial_noise(oracle.dim(), m, rng);
  std::size_t resamples = 0;
  const double dt = sched.dt();
  for (int k = sched.n_steps; k >= 1; --k) {
    const double t = sched.grid_time(k);
    if (cfg.method == ConditionalMethod::fps_resampled) {
      const double t_next = sched.grid_time(k - 1);
      const std::vector<Vec> y_next = path_values(t_next);
      const double ab_next = sched.alpha_bar(t_next);
      Vec log_w = Vec::Zero(static_cast<Eigen::Index>(m));
      for (std::size_t i = 0; i < terms.size(); ++i) {
        const double sd = terms[i].obs.sigma * std::sqrt(ab_next);
        for (std::size_t j = 0; j < m; ++j)
          log_w[static_cast<Eigen::Index>(j)] +=
              terms[i].weight * normal_log_density(y_next[i], terms[i].obs.a.cwiseProduct(x[j]), sd);
      }
      Vec w;
      if (!normalize_log_weights(log_w, w)) throw DegenerateWeightsError(0, "fps resampling: no finite weight");
      if (ess(w) < cfg.ess_fraction * static_cast<double>(m)) {
        CounterRng r = rng.stream(Stream::resample, static_cast<std::uint64_t>(k), 0);
        apply_ancestors(x, systematic_resample(w, m, r));
        ++resamples;
      }
    }
    const std::vector<Vec> y_t = path_values(t);
    const StepRng step = rng.step(Stream::diffusion, static_cast<std::uint64_t>(k));
    parallel_for(m, [&](std::size_t j) {
      CounterRng r = step.particle(j);
      Vec score = oracle.score(x[j], sched.alpha_bar(t));
      for (std::size_t i = 0; i < terms.size(); ++i)
        score += terms[i].weight * fps_likelihood_score(x[j], y_t[i], t, terms[i].obs, sched);
      x[j] = reverse_step_with_score(x[j], score, t, dt, sched, r);
    });
  }
  return uniform_result(std::move(x), resamples);
}

}  // namespace

WeightedSample unconditional_pass(const ScoreOracle& oracle, const VpSchedule& sched, std::size_t particles,
                                  const RngStreams& rng) {
  sched.validate();
  require(particles >= 1, "unconditional_pass: need at least one particle");
  std::vector<Vec> x = initial_noise(oracle.dim(), particles, rng);
  const double dt = sched.dt();
  for (int k = sched.n_steps; k >= 1; --k) {
    const double t = sched.grid_time(k);
    const StepRng step = rng.step(Stream::diffusion, static_cast<std::uint64_t>(k));
    parallel_for(particles, [&](std::size_t j) {
      CounterRng r = step.particle(j);
      x[j] = reverse_step(x[j], t, dt, oracle, sched, r);
    });
  }
  return uniform_result(std::move(x), 0);
}

WeightedSample conditional_pass(const ScoreOracle& oracle, const std::vector<LikelihoodTerm>& terms,
                                const VpSchedule& sched, const PassConfig& cfg, const RngStreams& rng) {
  sched.validate();
  require(cfg.particles >= 1, "conditional_pass: need at least one particle");
  require(cfg.ess_fraction >= 0.0 && cfg.ess_fraction <= 1.0, "conditional_pass: ess_fraction must lie in [0, 1]");
  for (const LikelihoodTerm& term : terms) {
    require(term.obs.sigma > 0.0, "conditional_pass: observation noise must be positive");
    require(term.obs.a.size() == oracle.dim() && term.y.size() == oracle.dim(),
            "conditional_pass: observation does not match the oracle dimension");
    require(term.weight >= 0.0, "conditional_pass: negative likelihood weight");
  }
  if (cfg.method == ConditionalMethod::twisted) return twisted_pass(oracle, terms, sched, cfg, rng);
  return literal_pass(oracle, terms, sched, cfg, rng);
}

WeightedSample conditional_pass(const ScoreOracle& oracle, const DiagonalObservation& obs, const std::vector<Vec>& ys,
                                const PoolingWeights& nu, const VpSchedule& sched, const PassConfig& cfg,
                                const RngStreams& rng) {
  require(!ys.empty() && ys.size() == nu.size(), "conditional_pass: one pooling weight per observation");
  std::vector<LikelihoodTerm> terms;
  terms.reserve(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) terms.push_back({obs, ys[i], nu.nu[static_cast<Eigen::Index>(i)]});
  return conditional_pass(oracle, terms, sched, cfg, rng);
}

}  // namespace codiff
