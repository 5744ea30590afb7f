#pragma once

#include "codiff/clouds.hpp"
#include "codiff/pooled_posterior.hpp"

#include <functional>
#include <vector>

namespace codiff {

/// γ_s = max(floor, γ0 · decay^s).
struct StepSchedule {
  double gamma0 = 1e-2;
  double decay = 1.0;
  double floor = 0.0;

  double at(std::size_t step) const;
  void validate() const;
};

/// split: ULA on θ under the current prior, then y drawn exactly from p(y|θ, ξ).
/// full_joint: one ULA step on (y, θ) under the joint potential.
enum class JointMode { split, full_joint };

struct DigsConfig {
  double noise_scale = 1.0;
  int denoise_steps = 20;
  double denoise_step_size = 1e-2;

  void validate() const;
};

/// Unnormalized log density and its gradient.
struct LogTarget {
  std::function<double(const Vec&)> log_density;
  std::function<Vec(const Vec&)> score;
};

struct StepStats {
  /// Particles kept at their previous state because the update was not finite.
  std::size_t resets = 0;
  /// DiGS Metropolis initialisations that were accepted.
  std::size_t accepted = 0;
};

/// x ← x + γ·score(x) + √(2γ)·ε for every particle, with per-slot noise streams.
StepStats langevin_step(std::vector<Vec>& particles, const std::vector<std::uint64_t>& stream_ids,
                        const std::function<Vec(const Vec&)>& score, double gamma, const StepRng& rng);

StepStats joint_langevin_step(JointCloud& cloud, const Model& model, const History& hist, const Vec& xi, double gamma,
                              const StepRng& rng, JointMode mode = JointMode::split);

/// One ULA step targeting the pooled posterior q ∝ p(θ|hist) Π_i p(y_i|θ, ξ)^{ν_i}.
StepStats pooled_langevin_step(ContrastiveCloud& cloud, const Model& model, const History& hist, const Vec& xi,
                               const OutcomeMeasure& rho, double gamma, const StepRng& rng);

/// One ULA step targeting the current prior p(θ|hist).
StepStats posterior_langevin_step(std::vector<Vec>& particles, const std::vector<std::uint64_t>& stream_ids,
                                  const Model& model, const History& hist, double gamma, const StepRng& rng);

/// Diffusive Gibbs sweep: noise x̃ = x + σε, Metropolis move from N(x̃, σ²) targeting
/// p(x|x̃) ∝ π(x) N(x̃; x, σ²), then ULA denoising steps on the same conditional.
StepStats digs_sweep(std::vector<Vec>& particles, const std::vector<std::uint64_t>& stream_ids, const LogTarget& target,
                     const DigsConfig& cfg, const StepRng& rng);

/// 1 / Σ w_i² for weights on the simplex.
double ess(const Vec& w);

/// Ancestor indices by systematic resampling; weights are normalized internally.
std::vector<std::size_t> systematic_resample(const Vec& w, std::size_t n_out, CounterRng& rng);
/// Ancestors from unnormalized log weights.
std::vector<std::size_t> systematic_resample_log(const Vec& log_w, std::size_t n_out, CounterRng& rng);

/// Replaces particle values by their ancestors; stream ids stay with their slots.
void apply_ancestors(JointCloud& cloud, const std::vector<std::size_t>& ancestors);
void apply_ancestors(ContrastiveCloud& cloud, const std::vector<std::size_t>& ancestors);
void apply_ancestors(std::vector<Vec>& particles, const std::vector<std::size_t>& ancestors);

}  // namespace codiff
