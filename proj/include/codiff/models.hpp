#pragma once

#include "codiff/gaussian_mixture.hpp"
#include "codiff/model.hpp"

namespace codiff {

/// y = a·ξ·θ + σ·u with θ ~ N(prior_mean, prior_sd²). Conjugate reference model.
class LinearGaussian1D final : public Model {
 public:
  struct Params {
    double a = 1.0;
    double sigma = 1.0;
    double prior_mean = 0.0;
    double prior_sd = 1.0;
    double bound = 2.0;
  };

  LinearGaussian1D() : LinearGaussian1D(Params{}) {}
  explicit LinearGaussian1D(Params p);

  const Params& params() const { return p_; }

  std::string name() const override { return "linear_gaussian"; }
  Eigen::Index theta_dim() const override { return 1; }
  Eigen::Index outcome_dim() const override { return 1; }
  Eigen::Index design_dim() const override { return 1; }
  Box default_bounds() const override;

  double log_prior(const Vec& theta) const override;
  Vec grad_log_prior(const Vec& theta) const override;
  Vec sample_prior(CounterRng& rng) const override;

  double log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  void lik_gradients(const Vec& y, const Vec& theta, const Vec& xi, Eigen::Ref<Vec> grad_xi,
                     Eigen::Ref<Vec> grad_y) const override;

  Vec forward(const Vec& u, const Vec& theta, const Vec& xi) const override;
  Vec inverse(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Mat jacobian_xi(const Vec& u, const Vec& theta, const Vec& xi) const override;

  std::optional<DiagonalObservation> linear_observation(const Vec& xi) const override;

  /// Gaussian posterior of θ given outcomes y_n observed at designs ξ_n.
  struct Gaussian {
    double mean;
    double variance;
  };
  Gaussian posterior(const History& hist) const;
  /// Pooled posterior ∝ p(θ|hist) Π_i p(y_i|θ, ξ)^{ν_i}.
  Gaussian pooled_posterior(const History& hist, double xi, const std::vector<double>& ys, const Vec& nu) const;

 private:
  Params p_;
};

struct SourceConstants {
  Vec alpha = Vec::Ones(2);
  double background = 0.1;
  double max_signal = 1e-4;

  Eigen::Index sources() const { return alpha.size(); }
};

/// μ(θ, ξ) = b + Σ_c α_c / (m + ‖θ_c − ξ‖²) with θ = (θ_1, …, θ_C) stacked 2-vectors.
double signal_strength(const Vec& theta, const Vec& xi, const SourceConstants& consts);
Vec signal_strength_grad_xi(const Vec& theta, const Vec& xi, const SourceConstants& consts);
Vec signal_strength_grad_theta(const Vec& theta, const Vec& xi, const SourceConstants& consts);

/// Log-normal source location: log y = log μ(θ, ξ) + σ·u; each source has prior N(mean, sd² I).
class SourceLocation final : public Model {
 public:
  struct Params {
    SourceConstants consts{};
    double sigma = 0.5;
    Vec prior_mean = Vec::Zero(4);
    double prior_sd = 1.0;
    double bound = 4.0;
  };

  SourceLocation() : SourceLocation(Params{}) {}
  explicit SourceLocation(Params p);

  const Params& params() const { return p_; }

  std::string name() const override { return "source_location"; }
  Eigen::Index theta_dim() const override { return 2 * p_.consts.sources(); }
  Eigen::Index outcome_dim() const override { return 1; }
  Eigen::Index design_dim() const override { return 2; }
  Box default_bounds() const override;

  double log_prior(const Vec& theta) const override;
  Vec grad_log_prior(const Vec& theta) const override;
  Vec sample_prior(CounterRng& rng) const override;

  double log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  void lik_gradients(const Vec& y, const Vec& theta, const Vec& xi, Eigen::Ref<Vec> grad_xi,
                     Eigen::Ref<Vec> grad_y) const override;

  Vec forward(const Vec& u, const Vec& theta, const Vec& xi) const override;
  Vec inverse(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Mat jacobian_xi(const Vec& u, const Vec& theta, const Vec& xi) const override;

 private:
  Params p_;
};

struct MaskShape {
  double half_width = 3.0;
  double scale_x = 0.1;
  double scale_y = 0.1;
};

/// Product of two smoothed box indicators of half-width h centred at ξ, evaluated at grid point x.
double smooth_mask(const Vec& xi, const Vec& x, const MaskShape& shape);
Vec smooth_mask_grad_xi(const Vec& xi, const Vec& x, const MaskShape& shape);

/// y = μ_ξ ⊙ θ + σ·u on a G×G grid (θ flattened row-major, pixel (col, row) at index row·G + col)
/// with a Gaussian-mixture prior on θ.
class SmoothMaskInverse final : public Model {
 public:
  struct Params {
    int grid = 16;
    MaskShape shape{};
    double sigma = 0.1;
  };

  SmoothMaskInverse(Params p, GaussianMixture prior);

  const Params& params() const { return p_; }
  const GaussianMixture& prior() const { return prior_; }

  /// Mask values μ_ξ over the grid, and their ξ-derivatives as a G²×2 matrix.
  Vec mask(const Vec& xi) const;
  Mat mask_grad(const Vec& xi) const;

  std::string name() const override { return "smooth_mask"; }
  Eigen::Index theta_dim() const override { return static_cast<Eigen::Index>(p_.grid) * p_.grid; }
  Eigen::Index outcome_dim() const override { return theta_dim(); }
  Eigen::Index design_dim() const override { return 2; }
  Box default_bounds() const override;

  double log_prior(const Vec& theta) const override;
  Vec grad_log_prior(const Vec& theta) const override;
  Vec sample_prior(CounterRng& rng) const override;

  double log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Vec grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const override;

  Vec forward(const Vec& u, const Vec& theta, const Vec& xi) const override;
  Vec inverse(const Vec& y, const Vec& theta, const Vec& xi) const override;
  Mat jacobian_xi(const Vec& u, const Vec& theta, const Vec& xi) const override;

  std::optional<DiagonalObservation> linear_observation(const Vec& xi) const override;

 private:
  Params p_;
  GaussianMixture prior_;
};

}  // namespace codiff
