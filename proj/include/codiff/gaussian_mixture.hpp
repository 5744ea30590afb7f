#pragma once

#include "codiff/rng.hpp"
#include "codiff/types.hpp"

#include <vector>

namespace codiff {

/// Mixture of Gaussians with diagonal covariances.
class GaussianMixture {
 public:
  struct Component {
    double weight = 1.0;
    Vec mean;
    Vec sd;
  };

  explicit GaussianMixture(std::vector<Component> components);
  static GaussianMixture isotropic(Vec mean, double sd);

  Eigen::Index dim() const { return components_.front().mean.size(); }
  std::size_t size() const { return components_.size(); }
  const std::vector<Component>& components() const { return components_; }

  double log_density(const Vec& x) const;
  Vec score(const Vec& x) const;
  /// Posterior component probabilities given x.
  Vec responsibilities(const Vec& x) const;
  /// (∇² log p)(x) · v.
  Vec hessian_vector(const Vec& x, const Vec& v) const;
  Vec hessian_diagonal(const Vec& x) const;
  Vec sample(CounterRng& rng) const;
  std::size_t sample_component(CounterRng& rng) const;

  /// Law of √ᾱ X + √(1−ᾱ) ε for X from this mixture.
  GaussianMixture noised(double alpha_bar) const;

 private:
  Vec component_log_terms(const Vec& x) const;

  std::vector<Component> components_;
  Vec log_weights_;
};

}  // namespace codiff
