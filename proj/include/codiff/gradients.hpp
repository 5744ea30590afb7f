#pragma once

#include "codiff/clouds.hpp"
#include "codiff/models.hpp"
#include "codiff/pooled_posterior.hpp"

#include <vector>

namespace codiff {

enum class EstimatorKind { pooled, nested, prior_is };

struct GradEstimate {
  Vec grad;
  std::size_t n_joint = 0;
  std::size_t n_contrastive = 0;
  double ess_min = 0.0;
  /// Rows whose weights were replaced by the uniform fallback.
  std::size_t degenerate_rows = 0;

  bool fallback_used() const { return degenerate_rows > 0; }
  bool finite() const { return grad.allFinite(); }
};

/// Γ: (1/N) Σ_i [ g(ξ, y_i, θ_i, θ_i) − Σ_j w_ij g(ξ, y_i, θ_i, θ'_j) ].
GradEstimate gamma(const Model& model, const Vec& xi, const JointCloud& joint, const ContrastiveCloud& contrastive,
                   const WeightMatrix& w);

/// Pooled-posterior SNIS estimator: snis_weights followed by gamma.
GradEstimate grad_pooled_snis(const Model& model, const Vec& xi, const JointCloud& joint,
                              const ContrastiveCloud& contrastive, const PoolingWeights& nu,
                              DegenerateRowPolicy policy = DegenerateRowPolicy::uniform_fallback);

/// Nested estimator with one posterior cloud per joint particle, equally weighted.
GradEstimate grad_nested_mc(const Model& model, const Vec& xi, const JointCloud& joint,
                            const std::vector<ContrastiveCloud>& per_outcome);

/// Prior-contrastive ratio estimator: weights ∝ p(y_i|θ'_j, ξ) with θ'_j from the (current) prior.
GradEstimate grad_prior_is(const Model& model, const Vec& xi, const JointCloud& joint,
                           const ContrastiveCloud& prior_contrastive,
                           DegenerateRowPolicy policy = DegenerateRowPolicy::raise);

struct EigValue {
  double eig;
  double grad;
};

/// Closed-form EIG of y = aξθ + σu with a standard normal prior, and its ξ-derivative.
EigValue analytic_linear_gaussian(double xi, double sigma, double a = 1.0);

/// Exact samplers for the conjugate model, used as oracles.
namespace conjugate {

JointCloud sample_joint(const LinearGaussian1D& model, const History& hist, double xi, std::size_t n,
                        const StepRng& rng);
ContrastiveCloud sample_pooled(const LinearGaussian1D& model, const History& hist, double xi, const JointCloud& joint,
                               const PoolingWeights& nu, std::size_t m, const StepRng& rng);
ContrastiveCloud sample_posterior(const LinearGaussian1D& model, const History& hist, double xi, double y,
                                  std::size_t m, const StepRng& rng);

}  // namespace conjugate

}  // namespace codiff
