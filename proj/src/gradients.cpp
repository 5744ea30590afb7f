#include "codiff/gradients.hpp"

#include "codiff/numerics.hpp"
#include "codiff/parallel.hpp"

#include <cmath>

namespace codiff {

namespace {

// (1/N) Σ_i [ g(θ_i, θ_i) − Σ_j w_i(j) g(θ_i, θ'_{i,j}) ] where the contrastive set and its
// weights may differ per row.
template <class RowContrast>
Vec contrastive_average(const Model& model, const Vec& xi, const JointCloud& joint, RowContrast&& row_contrast) {
  const std::size_t n = joint.size();
  require(n >= 1, "gradient estimator: empty joint cloud");
  const Eigen::Index d = model.design_dim();
  const Eigen::Index p = model.outcome_dim();
  std::vector<Vec> terms(n);
  parallel_for(n, [&](std::size_t i) {
    const PathTerms path = path_terms(model, xi, joint.y[i], joint.theta[i]);
    Vec g(d);
    Vec scratch(p);
    g_from_path_into(model, xi, joint.y[i], joint.theta[i], path, g, scratch);
    Vec term = g;
    row_contrast(i, path, term, g, scratch);
    terms[i] = std::move(term);
  });
  return pairwise_sum(terms) / static_cast<double>(n);
}

}  // namespace

GradEstimate gamma(const Model& model, const Vec& xi, const JointCloud& joint, const ContrastiveCloud& contrastive,
                   const WeightMatrix& w) {
  const auto n = static_cast<Eigen::Index>(joint.size());
  const auto m = static_cast<Eigen::Index>(contrastive.size());
  require(m >= 1, "gamma: empty contrastive cloud");
  require(w.w.rows() == n && w.w.cols() == m, "gamma: weight matrix shape does not match the clouds");
  GradEstimate out;
  out.grad = contrastive_average(model, xi, joint, [&](std::size_t i, const PathTerms& path, Vec& term, Vec& g, Vec& scratch) {
    const auto row = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double wij = w.w(row, j);
      if (wij == 0.0) continue;
      g_from_path_into(model, xi, joint.y[i], contrastive.theta[static_cast<std::size_t>(j)], path, g, scratch);
      term -= wij * g;
    }
  });
  out.n_joint = joint.size();
  out.n_contrastive = contrastive.size();
  out.ess_min = w.ess_min();
  out.degenerate_rows = w.degenerate_rows.size();
  return out;
}

GradEstimate grad_pooled_snis(const Model& model, const Vec& xi, const JointCloud& joint,
                              const ContrastiveCloud& contrastive, const PoolingWeights& nu, DegenerateRowPolicy policy) {
  const WeightMatrix w = snis_weights(model, xi, joint.y, contrastive.theta, nu, policy);
  return gamma(model, xi, joint, contrastive, w);
}

GradEstimate grad_nested_mc(const Model& model, const Vec& xi, const JointCloud& joint,
                            const std::vector<ContrastiveCloud>& per_outcome) {
  require(per_outcome.size() == joint.size(), "grad_nested_mc: need one inner cloud per joint particle");
  std::size_t smallest = per_outcome.empty() ? 0 : per_outcome.front().size();
  for (const auto& inner : per_outcome) {
    require(inner.size() >= 1, "grad_nested_mc: empty inner cloud");
    smallest = std::min(smallest, inner.size());
  }
  GradEstimate out;
  out.grad = contrastive_average(model, xi, joint, [&](std::size_t i, const PathTerms& path, Vec& term, Vec& g, Vec& scratch) {
    const auto& inner = per_outcome[i].theta;
    Vec inner_sum = Vec::Zero(term.size());
    for (const auto& theta_eval : inner) {
      g_from_path_into(model, xi, joint.y[i], theta_eval, path, g, scratch);
      inner_sum += g;
    }
    term -= inner_sum / static_cast<double>(inner.size());
  });
  out.n_joint = joint.size();
  out.n_contrastive = smallest;
  out.ess_min = static_cast<double>(smallest);
  return out;
}

GradEstimate grad_prior_is(const Model& model, const Vec& xi, const JointCloud& joint,
                           const ContrastiveCloud& prior_contrastive, DegenerateRowPolicy policy) {
  require(prior_contrastive.size() >= 1, "grad_prior_is: empty contrastive cloud");
  const WeightMatrix w = normalize_rows(log_likelihood_matrix(model, xi, joint.y, prior_contrastive.theta), policy);
  return gamma(model, xi, joint, prior_contrastive, w);
}

EigValue analytic_linear_gaussian(double xi, double sigma, double a) {
  require(sigma > 0.0, "analytic_linear_gaussian: sigma must be positive");
  const double s2 = sigma * sigma;
  const double gain2 = a * a * xi * xi;
  return {0.5 * std::log1p(gain2 / s2), a * a * xi / (s2 + gain2)};
}

namespace conjugate {

JointCloud sample_joint(const LinearGaussian1D& model, const History& hist, double xi, std::size_t n,
                        const StepRng& rng) {
  require(n >= 1, "conjugate::sample_joint: n must be positive");
  const auto post = model.posterior(hist);
  const Vec design = Vec::Constant(1, xi);
  std::vector<Vec> thetas(n);
  std::vector<Vec> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng r = rng.particle(i);
    thetas[i] = Vec::Constant(1, post.mean + std::sqrt(post.variance) * r.normal());
    ys[i] = sample_outcome(model, thetas[i], design, r);
  }
  return JointCloud(std::move(thetas), std::move(ys));
}

ContrastiveCloud sample_pooled(const LinearGaussian1D& model, const History& hist, double xi, const JointCloud& joint,
                               const PoolingWeights& nu, std::size_t m, const StepRng& rng) {
  require(m >= 1, "conjugate::sample_pooled: m must be positive");
  std::vector<double> ys(joint.size());
  for (std::size_t i = 0; i < joint.size(); ++i) ys[i] = joint.y[i][0];
  const auto pooled = model.pooled_posterior(hist, xi, ys, nu.nu);
  std::vector<Vec> thetas(m);
  for (std::size_t j = 0; j < m; ++j) {
    CounterRng r = rng.particle(j);
    thetas[j] = Vec::Constant(1, pooled.mean + std::sqrt(pooled.variance) * r.normal());
  }
  return ContrastiveCloud(std::move(thetas));
}

ContrastiveCloud sample_posterior(const LinearGaussian1D& model, const History& hist, double xi, double y,
                                  std::size_t m, const StepRng& rng) {
  require(m >= 1, "conjugate::sample_posterior: m must be positive");
  History extended = hist;
  extended.append(Vec::Constant(1, xi), Vec::Constant(1, y));
  const auto post = model.posterior(extended);
  std::vector<Vec> thetas(m);
  for (std::size_t j = 0; j < m; ++j) {
    CounterRng r = rng.particle(j);
    thetas[j] = Vec::Constant(1, post.mean + std::sqrt(post.variance) * r.normal());
  }
  return ContrastiveCloud(std::move(thetas));
}

}  // namespace conjugate

}  // namespace codiff
