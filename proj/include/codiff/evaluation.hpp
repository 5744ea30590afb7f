#pragma once

#include "codiff/gradients.hpp"

#include <optional>
#include <string>
#include <vector>

namespace codiff {

struct SpceConfig {
  /// Contrastive prior draws L.
  std::size_t contrastive = 10000;
  /// Independent sets of L draws averaged per call.
  std::size_t replications = 1;

  void validate() const;
};

struct BoundPair {
  double spce = 0.0;
  double snmc = 0.0;
};

struct MetricRecord {
  std::size_t k = 0;
  double spce = 0.0;
  double snmc = 0.0;
  double w2 = 0.0;
  double wall_ms = 0.0;
};

/// Sequential prior contrastive estimate (lower bound on total EIG) and sequential nested Monte
/// Carlo estimate (upper bound), computed on the same contrastive prior draws.
/// Draws use Stream::evaluation with step = replication index.
BoundPair spce_snmc(const Model& model, const History& hist, const Vec& theta_star, const SpceConfig& cfg,
                    const RngStreams& rng);
double spce(const Model& model, const History& hist, const Vec& theta_star, const SpceConfig& cfg, const RngStreams& rng);
double snmc(const Model& model, const History& hist, const Vec& theta_star, const SpceConfig& cfg, const RngStreams& rng);

/// Both bounds from precomputed log-likelihood sums: log_star = Σ_k log p(y_k|θ*, ξ_k) and
/// log_contrastive[ℓ] = Σ_k log p(y_k|θ_ℓ, ξ_k).
BoundPair bounds_from_loglik(double log_star, const Vec& log_contrastive);

/// (Σ_i w_i ‖θ_i − θ*‖²)^{1/2}: the 2-Wasserstein distance from the weighted cloud to δ_{θ*}.
double w2_to_truth(const std::vector<Vec>& particles, const Vec& weights, const Vec& theta_star);
double w2_to_truth(const std::vector<Vec>& particles, const Vec& theta_star);

/// Nested Monte Carlo EIG with prior draws θ_i, θ'_j and noise u_i shared across designs, so the
/// estimate is a smooth function of ξ for fixed rng.
double nested_mc_eig(const Model& model, const Vec& xi, std::size_t n_outer, std::size_t n_inner,
                     const RngStreams& rng);
/// Central finite differences of nested_mc_eig with common random numbers.
Vec nested_mc_eig_gradient(const Model& model, const Vec& xi, std::size_t n_outer, std::size_t n_inner, double step,
                           const RngStreams& rng);

/// Analytic EIG gradient, when the model has one.
std::optional<Vec> analytic_eig_gradient(const Model& model, const Vec& xi);

enum class DiagnosticEstimator { pooled, nested, prior_is, oracle };

std::string to_string(DiagnosticEstimator e);
DiagnosticEstimator diagnostic_estimator_from_string(const std::string& name);
std::string to_string(EstimatorKind e);
EstimatorKind estimator_kind_from_string(const std::string& name);

struct DiagnosticsConfig {
  std::vector<DiagnosticEstimator> estimators{DiagnosticEstimator::pooled, DiagnosticEstimator::nested,
                                              DiagnosticEstimator::prior_is};
  std::vector<Vec> designs;
  /// Cloud sizes; each cell uses N = M = budget.
  std::vector<std::size_t> budgets{64, 256};
  std::size_t replications = 50;
  /// ULA burn-in for posterior and pooled clouds when no exact sampler exists.
  std::size_t ula_steps = 500;
  double ula_gamma = 1e-2;
  /// Finite-difference oracle settings for models without a closed form.
  std::size_t fd_outer = 20000;
  std::size_t fd_inner = 2000;
  double fd_step = 1e-3;

  void validate() const;
};

struct DiagnosticRow {
  std::string estimator;
  Vec xi;
  std::size_t component = 0;
  std::size_t budget = 0;
  std::size_t replications = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  double oracle = 0.0;
  double bias = 0.0;
  double wall_ms = 0.0;
};

/// Replicated gradient estimates per (estimator, design, budget) cell, one row per design component.
/// The conjugate model uses exact samplers and the closed-form oracle.
std::vector<DiagnosticRow> gradient_diagnostics(const Model& model, const DiagnosticsConfig& cfg,
                                                const RngStreams& rng);

}  // namespace codiff
