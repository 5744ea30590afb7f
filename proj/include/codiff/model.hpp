#pragma once

#include "codiff/rng.hpp"
#include "codiff/types.hpp"

#include <optional>
#include <string>

namespace codiff {

/// Observation y = a ⊙ θ + σ·η with η ~ N(0, I): a diagonal (masked-weight) linear operator.
struct DiagonalObservation {
  Vec a;
  double sigma = 1.0;
};

/// A design problem: prior p(θ), likelihood p(y|θ,ξ), and the reparameterization
/// y = T_{ξ,θ}(u) with u ~ N(0, I). Implementations are immutable and thread-safe.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index theta_dim() const = 0;
  virtual Eigen::Index outcome_dim() const = 0;
  virtual Eigen::Index design_dim() const = 0;
  virtual Box default_bounds() const = 0;

  virtual double log_prior(const Vec& theta) const = 0;
  virtual Vec grad_log_prior(const Vec& theta) const = 0;
  virtual Vec sample_prior(CounterRng& rng) const = 0;

  virtual double log_lik(const Vec& y, const Vec& theta, const Vec& xi) const = 0;
  virtual Vec grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const = 0;
  virtual Vec grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const = 0;
  virtual Vec grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const = 0;

  /// T_{ξ,θ}(u).
  virtual Vec forward(const Vec& u, const Vec& theta, const Vec& xi) const = 0;
  /// T⁻¹_{ξ,θ}(y); throws SingularMapError outside the image of T.
  virtual Vec inverse(const Vec& y, const Vec& theta, const Vec& xi) const = 0;
  /// ∂T_{ξ,θ}(u)/∂ξ as an outcome_dim × design_dim matrix.
  virtual Mat jacobian_xi(const Vec& u, const Vec& theta, const Vec& xi) const = 0;

  /// Writes ∇_ξ log p(y|θ,ξ) and ∇_y log p(y|θ,ξ) into caller-owned buffers. Hot loops use this;
  /// models may override it to avoid temporaries.
  virtual void lik_gradients(const Vec& y, const Vec& theta, const Vec& xi, Eigen::Ref<Vec> grad_xi,
                             Eigen::Ref<Vec> grad_y) const {
    grad_xi = grad_xi_log_lik(y, theta, xi);
    grad_y = grad_y_log_lik(y, theta, xi);
  }

  /// Draw from p_U. All built-in models use standard normal noise.
  virtual Vec sample_noise(CounterRng& rng) const { return rng.normal_vec(outcome_dim()); }

  /// Set for models whose outcome is a diagonal linear map of θ plus Gaussian noise.
  virtual std::optional<DiagonalObservation> linear_observation(const Vec& /*xi*/) const { return std::nullopt; }
};

/// y = T_{ξ,θ}(u) with dimension checks.
Vec sample_outcome(const Model& model, const Vec& theta, const Design& design, const Vec& u);
Vec sample_outcome(const Model& model, const Vec& theta, const Vec& xi, CounterRng& rng);

/// V(y, θ, ξ) = −log p(θ) − log p(y|θ, ξ).
double potential(const Model& model, const Vec& y, const Vec& theta, const Vec& xi);

/// log p(θ) + Σ_n log p(y_n|θ, ξ_n) over the history.
double current_prior_log_density(const Model& model, const History& hist, const Vec& theta);
Vec current_prior_score(const Model& model, const History& hist, const Vec& theta);

/// Quantities that depend only on the path particle (ξ, y, θ_path) in g(ξ, y, θ_path, θ_eval).
struct PathTerms {
  Vec u;
  Mat jacobian;
};

PathTerms path_terms(const Model& model, const Vec& xi, const Vec& y, const Vec& theta_path);

/// ∇_ξ log p(y|θ_eval, ξ) + J^T ∇_y log p(y|θ_eval, ξ), with J taken from the path terms.
Vec g_from_path(const Model& model, const Vec& xi, const Vec& y, const Vec& theta_eval, const PathTerms& path);

/// Allocation-free form of g_from_path for inner loops; scratch must have outcome_dim entries.
void g_from_path_into(const Model& model, const Vec& xi, const Vec& y, const Vec& theta_eval, const PathTerms& path,
                      Eigen::Ref<Vec> out, Eigen::Ref<Vec> scratch);

/// g(ξ, y, θ_path, θ_eval) = ∇_ξ log p(T_{ξ,θ_path}(u) | θ_eval, ξ) at u = T⁻¹_{ξ,θ_path}(y).
Vec g_score(const Model& model, const Design& design, const Vec& y, const Vec& theta_path, const Vec& theta_eval);

}  // namespace codiff
