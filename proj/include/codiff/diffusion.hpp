#pragma once

#include "codiff/gaussian_mixture.hpp"
#include "codiff/model.hpp"
#include "codiff/pooled_posterior.hpp"

#include <vector>

namespace codiff {

/// Variance-preserving noise schedule with linear β(t) = β_min + (β_max − β_min)(t − t0)/(T − t0).
/// Time runs forward (noising); reverse passes step from T down to t0.
struct VpSchedule {
  double beta_min = 0.2;
  double beta_max = 5.0;
  double t0 = 0.0;
  double horizon = 2.0;
  int n_steps = 200;

  void validate() const;
  double beta(double t) const;
  /// ∫_{t0}^{t} β(s) ds.
  double integrated_beta(double t) const;
  double alpha_bar(double t) const;
  double dt() const { return (horizon - t0) / n_steps; }
  /// t0 + k·dt for k = 0..n_steps.
  double grid_time(int k) const { return t0 + k * dt(); }
  /// The forward time whose ᾱ equals the argument.
  double time_for_alpha_bar(double alpha_bar) const;
  /// Maps a time that flows backwards from T (reverse-process clock) to forward time.
  double backward_to_forward(double s) const { return t0 + horizon - s; }
};

double alpha_bar(const VpSchedule& sched, double t);

/// Score of the VP-noised prior, ∇ log p_t, indexed by the noise level ᾱ(t).
class ScoreOracle {
 public:
  virtual ~ScoreOracle() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vec score(const Vec& x, double alpha_bar) const = 0;
  /// (∇² log p_t)(x) · v.
  virtual Vec hessian_vector(const Vec& x, double alpha_bar, const Vec& v) const = 0;
  virtual Vec hessian_diagonal(const Vec& x, double alpha_bar) const = 0;
};

/// Closed-form oracle for a Gaussian-mixture prior (a single Gaussian is a one-component mixture).
class GaussianMixtureOracle final : public ScoreOracle {
 public:
  explicit GaussianMixtureOracle(GaussianMixture prior) : prior_(std::move(prior)) {}
  static GaussianMixtureOracle gaussian(Vec mean, double sd) { return GaussianMixtureOracle(GaussianMixture::isotropic(std::move(mean), sd)); }

  const GaussianMixture& prior() const { return prior_; }
  Eigen::Index dim() const override { return prior_.dim(); }
  Vec score(const Vec& x, double alpha_bar) const override { return prior_.noised(alpha_bar).score(x); }
  Vec hessian_vector(const Vec& x, double alpha_bar, const Vec& v) const override {
    return prior_.noised(alpha_bar).hessian_vector(x, v);
  }
  Vec hessian_diagonal(const Vec& x, double alpha_bar) const override {
    return prior_.noised(alpha_bar).hessian_diagonal(x);
  }

 private:
  GaussianMixture prior_;
};

/// √ᾱ x0 + √(1−ᾱ) ε.
Vec forward_noise(const Vec& x0, double t, const Vec& eps, const VpSchedule& sched);
/// √ᾱ y + √(1−ᾱ) A ε.
Vec noise_observation(const Vec& y, double t, const Vec& eps, const DiagonalObservation& obs, const VpSchedule& sched);

/// One Euler–Maruyama step of the reverse SDE from forward time t to t − dt:
/// x + [β/2·x + β·score]dt + √(β dt) ε with β = β(t).
Vec reverse_step_with_score(const Vec& x, const Vec& score, double t, double dt, const VpSchedule& sched, CounterRng& rng);
Vec reverse_step(const Vec& x, double t, double dt, const ScoreOracle& oracle, const VpSchedule& sched, CounterRng& rng);

/// (1/(σ²ᾱ)) Aᵀ(y_t − A x): score of the noised-observation likelihood N(y_t; A x, σ²ᾱ).
Vec fps_likelihood_score(const Vec& x, const Vec& y_t, double t, const DiagonalObservation& obs, const VpSchedule& sched);
/// Reverse step with score = oracle score + fps_likelihood_score at the current time.
Vec fps_conditional_reverse(const Vec& x, double t, double dt, const ScoreOracle& oracle, const Vec& y_t,
                            const DiagonalObservation& obs, const VpSchedule& sched, CounterRng& rng);
/// Reverse step with score = oracle score + Σ_i ν_i fps_likelihood_score(·, y_i(t)).
Vec fps_pooled_reverse(const Vec& x, double t, double dt, const ScoreOracle& oracle, const std::vector<Vec>& y_ts,
                       const PoolingWeights& nu, const DiagonalObservation& obs, const VpSchedule& sched,
                       CounterRng& rng);

/// (x + (1−ᾱ)·score)/√ᾱ: posterior mean of the clean variable given x at time t.
Vec tweedie_predict(const Vec& x, double t, const ScoreOracle& oracle, const VpSchedule& sched);

/// w_j ∝ Π_i N(y_i(t); A θ_j, σ²ᾱ(t))^{ν_i}, normalized.
Vec fps_resample_weights(const std::vector<Vec>& particles, const std::vector<Vec>& y_ts, const PoolingWeights& nu,
                         const DiagonalObservation& obs, const VpSchedule& sched, double t);

/// Noised observation path t ↦ √ᾱ y + √(1−ᾱ) A ε with one stored ε.
struct ObservationPath {
  Vec y;
  Vec eps;

  Vec at(double t, const DiagonalObservation& obs, const VpSchedule& sched) const {
    return noise_observation(y, t, eps, obs, sched);
  }
};

enum class ConditionalMethod {
  /// Euler steps with the FPS likelihood score on stored observation paths.
  fps,
  /// As fps, plus resampling with fps_resample_weights whenever their ESS falls below the threshold.
  fps_resampled,
  /// Sequential Monte Carlo with a Tweedie-based twist; exact likelihood at t0, asymptotically exact.
  twisted,
};

struct PassConfig {
  std::size_t particles = 10000;
  ConditionalMethod method = ConditionalMethod::twisted;
  /// Resample when ESS < ess_fraction · particles.
  double ess_fraction = 0.5;
};

struct WeightedSample {
  std::vector<Vec> particles;
  Vec weights;
  std::size_t resample_count = 0;
  double final_ess = 0.0;
};

/// Reverse pass from N(0, I) with the oracle score only.
WeightedSample unconditional_pass(const ScoreOracle& oracle, const VpSchedule& sched, std::size_t particles,
                                  const RngStreams& rng);

/// Likelihood factor N(y; A θ, σ² I)^{weight}.
struct LikelihoodTerm {
  DiagonalObservation obs;
  Vec y;
  double weight = 1.0;
};

/// Samples ∝ p(θ) Π_k N(y_k; A_k θ, σ_k²)^{w_k}. Terms may use different operators, so a history of
/// past experiments and a pooled set of new outcomes fit in one call.
WeightedSample conditional_pass(const ScoreOracle& oracle, const std::vector<LikelihoodTerm>& terms,
                                const VpSchedule& sched, const PassConfig& cfg, const RngStreams& rng);

/// Samples ∝ p(θ) Π_i p(y_i|θ)^{ν_i} for observations y_i = A θ + σ η. A single outcome gives the
/// ordinary posterior; several outcomes give the pooled posterior.
WeightedSample conditional_pass(const ScoreOracle& oracle, const DiagonalObservation& obs, const std::vector<Vec>& ys,
                                const PoolingWeights& nu, const VpSchedule& sched, const PassConfig& cfg,
                                const RngStreams& rng);

}  // namespace codiff
