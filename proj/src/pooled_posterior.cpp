#include "codiff/pooled_posterior.hpp"

#include "codiff/numerics.hpp"
#include "codiff/parallel.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

namespace codiff {

PoolingWeights::PoolingWeights(Vec weights) : nu(std::move(weights)) {
  require(nu.size() >= 1, "PoolingWeights: empty");
  require((nu.array() >= 0.0).all(), "PoolingWeights: negative weight");
  require(std::abs(nu.sum() - 1.0) <= 1e-12, "PoolingWeights: weights must sum to 1");
}

PoolingWeights PoolingWeights::uniform(std::size_t n) {
  require(n >= 1, "PoolingWeights::uniform: n must be positive");
  PoolingWeights w;
  w.nu = Vec::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  return w;
}

OutcomeMeasure::OutcomeMeasure(std::vector<Vec> ys, PoolingWeights nu) : atoms(std::move(ys)), weights(std::move(nu)) {
  require(!atoms.empty(), "OutcomeMeasure: no atoms");
  require(atoms.size() == weights.size(), "OutcomeMeasure: atom and weight counts differ");
}

OutcomeMeasure OutcomeMeasure::empirical(std::vector<Vec> ys) {
  const std::size_t n = ys.size();
  return OutcomeMeasure(std::move(ys), PoolingWeights::uniform(n));
}

double WeightMatrix::ess_min() const { return row_ess.size() == 0 ? 0.0 : row_ess.minCoeff(); }

double pooled_log_density_unnorm(const Model& model, const History& hist, const OutcomeMeasure& rho, const Vec& xi,
                                 const Vec& theta) {
  require(rho.size() >= 1, "pooled_log_density_unnorm: empty outcome measure");
  double total = current_prior_log_density(model, hist, theta);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double nu = rho.weights.nu[static_cast<Eigen::Index>(i)];
    if (nu > 0.0) total += nu * model.log_lik(rho.atoms[i], theta, xi);
  }
  return total;
}

Vec pooled_score(const Model& model, const History& hist, const OutcomeMeasure& rho, const Vec& xi, const Vec& theta) {
  require(rho.size() >= 1, "pooled_score: empty outcome measure");
  Vec score = current_prior_score(model, hist, theta);
  for (std::size_t i = 0; i < rho.size(); ++i) {
    const double nu = rho.weights.nu[static_cast<Eigen::Index>(i)];
    if (nu > 0.0) score += nu * model.grad_theta_log_lik(rho.atoms[i], theta, xi);
  }
  return score;
}

Mat log_likelihood_matrix(const Model& model, const Vec& xi, const std::vector<Vec>& ys, const std::vector<Vec>& thetas) {
  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto m = static_cast<Eigen::Index>(thetas.size());
  Mat out(n, m);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    for (Eigen::Index j = 0; j < m; ++j) out(static_cast<Eigen::Index>(i), j) = model.log_lik(ys[i], thetas[j], xi);
  });
  return out;
}

WeightMatrix normalize_rows(const Mat& log_w, DegenerateRowPolicy policy) {
  const Eigen::Index n = log_w.rows();
  const Eigen::Index m = log_w.cols();
  require(m >= 1, "normalize_rows: need at least one column");
  WeightMatrix out;
  out.w.resize(n, m);
  out.row_ess.resize(n);
  Vec logs(m);
  Vec row;
  for (Eigen::Index i = 0; i < n; ++i) {
    logs = log_w.row(i).transpose();
    if (!normalize_log_weights(logs, row)) {
      if (policy == DegenerateRowPolicy::raise)
        throw DegenerateWeightsError(static_cast<std::size_t>(i), "importance weights: row " + std::to_string(i) +
                                                                      " has no finite log weight");
      out.degenerate_rows.push_back(static_cast<std::size_t>(i));
      row = Vec::Constant(m, 1.0 / static_cast<double>(m));
    }
    out.w.row(i) = row.transpose();
    out.row_ess[i] = 1.0 / row.squaredNorm();
  }
  if (!out.degenerate_rows.empty())
    spdlog::warn("importance weights: {} degenerate row(s) replaced by uniform weights", out.degenerate_rows.size());
  spdlog::debug("importance weights: min row ESS {:.2f} of {}", out.ess_min(), m);
  return out;
}

WeightMatrix snis_weights_from_loglik(const Mat& loglik, const PoolingWeights& nu, DegenerateRowPolicy policy) {
  require(static_cast<Eigen::Index>(nu.size()) == loglik.rows(), "snis_weights: pooling weights do not match outcomes");
  require(loglik.cols() >= 1, "snis_weights: need at least one contrastive particle");
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const Eigen::Index n = loglik.rows();
  const Eigen::Index m = loglik.cols();
  // log q̃(θ'_j) = Σ_l ν_l log p(y_l|θ'_j); zero-weight outcomes are skipped so their -inf entries do not leak.
  Vec log_proposal = Vec::Zero(m);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < m; ++j) {
    terms.clear();
    bool dead = false;
    for (Eigen::Index l = 0; l < n; ++l) {
      if (nu.nu[l] == 0.0) continue;
      const double v = loglik(l, j);
      if (!std::isfinite(v)) dead = true;
      terms.push_back(nu.nu[l] * v);
    }
    log_proposal[j] = dead ? neg_inf : pairwise_sum(terms);
  }
  Mat log_w(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double v = loglik(i, j);
      log_w(i, j) = (std::isfinite(v) && std::isfinite(log_proposal[j])) ? v - log_proposal[j] : neg_inf;
    }
  return normalize_rows(log_w, policy);
}

WeightMatrix snis_weights(const Model& model, const Vec& xi, const std::vector<Vec>& ys,
                          const std::vector<Vec>& contrastive, const PoolingWeights& nu, DegenerateRowPolicy policy) {
  require(!contrastive.empty(), "snis_weights: need at least one contrastive particle");
  require(ys.size() == nu.size(), "snis_weights: pooling weights do not match outcomes");
  return snis_weights_from_loglik(log_likelihood_matrix(model, xi, ys, contrastive), nu, policy);
}

GaussianDensity gaussian_pool(const std::vector<GaussianDensity>& parts, const PoolingWeights& nu) {
  require(!parts.empty() && parts.size() == nu.size(), "gaussian_pool: size mismatch");
  const Eigen::Index d = parts.front().mean.size();
  Mat precision = Mat::Zero(d, d);
  Vec shift = Vec::Zero(d);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Mat prec_i = parts[i].cov.inverse();
    precision += nu.nu[static_cast<Eigen::Index>(i)] * prec_i;
    shift += nu.nu[static_cast<Eigen::Index>(i)] * prec_i * parts[i].mean;
  }
  const Mat cov = precision.inverse();
  return {cov * shift, cov};
}

double pooled_kl_objective(const GaussianDensity& q, const std::vector<GaussianDensity>& parts, const PoolingWeights& nu) {
  require(!parts.empty() && parts.size() == nu.size(), "pooled_kl_objective: size mismatch");
  const double d = static_cast<double>(q.mean.size());
  const double logdet_q = Eigen::LLT<Mat>(q.cov).matrixLLT().diagonal().array().log().sum() * 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Eigen::LLT<Mat> llt(parts[i].cov);
    const Mat prec = llt.solve(Mat::Identity(q.mean.size(), q.mean.size()));
    const Vec diff = parts[i].mean - q.mean;
    const double logdet_p = llt.matrixLLT().diagonal().array().log().sum() * 2.0;
    const double kl = 0.5 * ((prec * q.cov).trace() + diff.dot(prec * diff) - d + logdet_p - logdet_q);
    total += nu.nu[static_cast<Eigen::Index>(i)] * kl;
  }
  return total;
}

}  // namespace codiff
