#pragma once

#include "codiff/model.hpp"

#include <vector>

namespace codiff {

/// Pooling exponents ν on the simplex.
struct PoolingWeights {
  Vec nu;

  PoolingWeights() = default;
  explicit PoolingWeights(Vec weights);
  static PoolingWeights uniform(std::size_t n);
  std::size_t size() const { return static_cast<std::size_t>(nu.size()); }
};

/// Discrete outcome measure ρ = Σ_i ν_i δ_{y_i}.
struct OutcomeMeasure {
  std::vector<Vec> atoms;
  PoolingWeights weights;

  OutcomeMeasure() = default;
  OutcomeMeasure(std::vector<Vec> ys, PoolingWeights nu);
  static OutcomeMeasure empirical(std::vector<Vec> ys);
  std::size_t size() const { return atoms.size(); }
};

/// Row-stochastic N×M importance weights with per-row diagnostics.
struct WeightMatrix {
  Mat w;
  Vec row_ess;
  std::vector<std::size_t> degenerate_rows;

  double ess_min() const;
};

enum class DegenerateRowPolicy { raise, uniform_fallback };

/// log p(θ|hist) + Σ_i ν_i log p(y_i|θ, ξ), up to the normalizing constant of the current prior.
double pooled_log_density_unnorm(const Model& model, const History& hist, const OutcomeMeasure& rho, const Vec& xi,
                                 const Vec& theta);
/// Gradient in θ of pooled_log_density_unnorm.
Vec pooled_score(const Model& model, const History& hist, const OutcomeMeasure& rho, const Vec& xi, const Vec& theta);

/// L(i, j) = log p(y_i | θ_j, ξ), computed in parallel over rows.
Mat log_likelihood_matrix(const Model& model, const Vec& xi, const std::vector<Vec>& ys, const std::vector<Vec>& thetas);

/// Normalizes each row of log weights. Non-finite entries carry zero mass; rows without any
/// finite entry raise DegenerateWeightsError or become uniform, per the policy.
WeightMatrix normalize_rows(const Mat& log_w, DegenerateRowPolicy policy);

/// w_ij ∝ p(y_i|θ'_j, ξ) / Π_l p(y_l|θ'_j, ξ)^{ν_l}. History factors cancel between target and
/// proposal, so they are not needed.
WeightMatrix snis_weights(const Model& model, const Vec& xi, const std::vector<Vec>& ys,
                          const std::vector<Vec>& contrastive, const PoolingWeights& nu,
                          DegenerateRowPolicy policy = DegenerateRowPolicy::raise);
/// Same weights from a precomputed log-likelihood matrix.
WeightMatrix snis_weights_from_loglik(const Mat& loglik, const PoolingWeights& nu, DegenerateRowPolicy policy);

/// Gaussian with full covariance.
struct GaussianDensity {
  Vec mean;
  Mat cov;
};

/// Precision-weighted pooling: Λ = Σ ν_i Λ_i, m = Λ⁻¹ Σ ν_i Λ_i m_i.
GaussianDensity gaussian_pool(const std::vector<GaussianDensity>& parts, const PoolingWeights& nu);
/// Σ_i ν_i KL(q ‖ p_i) for Gaussians.
double pooled_kl_objective(const GaussianDensity& q, const std::vector<GaussianDensity>& parts, const PoolingWeights& nu);

}  // namespace codiff
