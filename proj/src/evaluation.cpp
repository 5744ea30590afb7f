#include "codiff/evaluation.hpp"

#include "codiff/numerics.hpp"
#include "codiff/parallel.hpp"
#include "codiff/samplers.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace codiff {

void SpceConfig::validate() const {
  require(contrastive >= 1, "SpceConfig: need at least one contrastive draw");
  require(replications >= 1, "SpceConfig: need at least one replication");
}

BoundPair bounds_from_loglik(double log_star, const Vec& log_contrastive) {
  const Eigen::Index l = log_contrastive.size();
  require(l >= 1, "bounds_from_loglik: no contrastive terms");
  Vec with_star(l + 1);
  with_star << log_star, log_contrastive;
  const double log_l = std::log(static_cast<double>(l));
  const double log_l1 = std::log(static_cast<double>(l) + 1.0);
  BoundPair out;
  out.spce = log_star - (log_sum_exp(with_star) - log_l1);
  out.snmc = log_star - (log_sum_exp(log_contrastive) - log_l);
  if (!(out.spce <= log_l1 + 1e-9)) throw std::logic_error("spce exceeded log(L+1)");
  return out;
}

BoundPair spce_snmc(const Model& model, const History& hist, const Vec& theta_star, const SpceConfig& cfg,
                    const RngStreams& rng) {
  cfg.validate();
  require(theta_star.size() == model.theta_dim(), "spce: theta_star dimension mismatch");
  if (hist.empty()) return {};
  const auto history_loglik = [&](const Vec& theta) {
    double s = 0.0;
    for (const Experiment& e : hist.entries()) s += model.log_lik(e.y, theta, e.xi);
    return s;
  };
  const double log_star = history_loglik(theta_star);
  std::vector<double> spces(cfg.replications);
  std::vector<double> snmcs(cfg.replications);
  Vec contrast(static_cast<Eigen::Index>(cfg.contrastive));
  for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
    const StepRng draws = rng.step(Stream::evaluation, rep);
    parallel_for(cfg.contrastive, [&](std::size_t l) {
      CounterRng r = draws.particle(l);
      contrast[static_cast<Eigen::Index>(l)] = history_loglik(model.sample_prior(r));
    });
    const BoundPair b = bounds_from_loglik(log_star, contrast);
    spces[rep] = b.spce;
    snmcs[rep] = b.snmc;
  }
  const double reps = static_cast<double>(cfg.replications);
  return {pairwise_sum(spces) / reps, pairwise_sum(snmcs) / reps};
}

double spce(const Model& model, const History& hist, const Vec& theta_star, const SpceConfig& cfg,
            const RngStreams& rng) {
  return spce_snmc(model, hist, theta_star, cfg, rng).spce;
}

double snmc(const Model& model, const History& hist, const Vec& theta_star, const SpceConfig& cfg,
            const RngStreams& rng) {
  return spce_snmc(model, hist, theta_star, cfg, rng).snmc;
}

double w2_to_truth(const std::vector<Vec>& particles, const Vec& weights, const Vec& theta_star) {
  require(!particles.empty(), "w2_to_truth: no particles");
  require(weights.size() == static_cast<Eigen::Index>(particles.size()), "w2_to_truth: weight count mismatch");
  require((weights.array() >= 0.0).all() && std::abs(weights.sum() - 1.0) <= 1e-9,
          "w2_to_truth: weights must lie on the simplex");
  std::vector<double> terms(particles.size());
  for (std::size_t i = 0; i < particles.size(); ++i) {
    require(particles[i].size() == theta_star.size(), "w2_to_truth: dimension mismatch");
    terms[i] = weights[static_cast<Eigen::Index>(i)] * (particles[i] - theta_star).squaredNorm();
  }
  return std::sqrt(pairwise_sum(terms));
}

double w2_to_truth(const std::vector<Vec>& particles, const Vec& theta_star) {
  const auto n = static_cast<Eigen::Index>(particles.size());
  require(n >= 1, "w2_to_truth: no particles");
  return w2_to_truth(particles, Vec::Constant(n, 1.0 / static_cast<double>(n)), theta_star);
}

double nested_mc_eig(const Model& model, const Vec& xi, std::size_t n_outer, std::size_t n_inner,
                     const RngStreams& rng) {
  require(n_outer >= 1 && n_inner >= 1, "nested_mc_eig: sample counts must be positive");
  std::vector<Vec> inner(n_inner);
  const StepRng inner_rng = rng.step(Stream::diagnostics, 1);
  parallel_for(n_inner, [&](std::size_t j) {
    CounterRng r = inner_rng.particle(j);
    inner[j] = model.sample_prior(r);
  });
  const double log_m = std::log(static_cast<double>(n_inner));
  const StepRng outer_rng = rng.step(Stream::diagnostics, 0);
  std::vector<double> terms(n_outer);
  parallel_for(n_outer, [&](std::size_t i) {
    CounterRng r = outer_rng.particle(i);
    const Vec theta = model.sample_prior(r);
    const Vec u = model.sample_noise(r);
    const Vec y = model.forward(u, theta, xi);
    Vec ll(static_cast<Eigen::Index>(n_inner));
    for (std::size_t j = 0; j < n_inner; ++j) ll[static_cast<Eigen::Index>(j)] = model.log_lik(y, inner[j], xi);
    terms[i] = model.log_lik(y, theta, xi) - (log_sum_exp(ll) - log_m);
  });
  return pairwise_sum(terms) / static_cast<double>(n_outer);
}

Vec nested_mc_eig_gradient(const Model& model, const Vec& xi, std::size_t n_outer, std::size_t n_inner, double step,
                           const RngStreams& rng) {
  require(step > 0.0, "nested_mc_eig_gradient: step must be positive");
  Vec grad(xi.size());
  for (Eigen::Index c = 0; c < xi.size(); ++c) {
    Vec up = xi;
    Vec down = xi;
    up[c] += step;
    down[c] -= step;
    grad[c] = (nested_mc_eig(model, up, n_outer, n_inner, rng) - nested_mc_eig(model, down, n_outer, n_inner, rng)) /
              (2.0 * step);
  }
  return grad;
}

std::optional<Vec> analytic_eig_gradient(const Model& model, const Vec& xi) {
  const auto* lg = dynamic_cast<const LinearGaussian1D*>(&model);
  if (lg == nullptr) return std::nullopt;
  require(xi.size() == 1, "analytic_eig_gradient: design dimension mismatch");
  const auto& p = lg->params();
  // EIG = ½ log(1 + a²ξ²s²/σ²), independent of the prior mean.
  const double gain = p.a * p.a * p.prior_sd * p.prior_sd;
  const double s2 = p.sigma * p.sigma;
  return Vec::Constant(1, gain * xi[0] / (s2 + gain * xi[0] * xi[0]));
}

std::string to_string(DiagnosticEstimator e) {
  switch (e) {
    case DiagnosticEstimator::pooled: return "pooled";
    case DiagnosticEstimator::nested: return "nested";
    case DiagnosticEstimator::prior_is: return "prior_is";
    case DiagnosticEstimator::oracle: return "oracle";
  }
  throw std::logic_error("unknown diagnostic estimator");
}

DiagnosticEstimator diagnostic_estimator_from_string(const std::string& name) {
  if (name == "pooled") return DiagnosticEstimator::pooled;
  if (name == "nested") return DiagnosticEstimator::nested;
  if (name == "prior_is") return DiagnosticEstimator::prior_is;
  if (name == "oracle") return DiagnosticEstimator::oracle;
  throw ContractViolation("unknown estimator '" + name + "'");
}

std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::pooled: return "pooled";
    case EstimatorKind::nested: return "nested";
    case EstimatorKind::prior_is: return "prior_is";
  }
  throw std::logic_error("unknown estimator");
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  if (name == "pooled") return EstimatorKind::pooled;
  if (name == "nested") return EstimatorKind::nested;
  if (name == "prior_is") return EstimatorKind::prior_is;
  throw ContractViolation("unknown estimator '" + name + "'");
}

void DiagnosticsConfig::validate() const {
  require(!estimators.empty(), "DiagnosticsConfig: no estimators");
  require(!designs.empty(), "DiagnosticsConfig: no designs");
  require(!budgets.empty(), "DiagnosticsConfig: no budgets");
  for (std::size_t b : budgets) require(b >= 1, "DiagnosticsConfig: budgets must be positive");
  require(replications >= 2, "DiagnosticsConfig: need at least two replications");
  require(ula_gamma > 0.0 && fd_step > 0.0, "DiagnosticsConfig: step sizes must be positive");
  require(fd_outer >= 1 && fd_inner >= 1, "DiagnosticsConfig: finite-difference sample counts must be positive");
}

namespace {

// Posterior-type cloud for a general model: prior draws moved by ULA on the pooled target.
ContrastiveCloud ula_cloud(const Model& model, const Vec& xi, const OutcomeMeasure& rho, std::size_t m,
                           std::uint64_t first_id, const DiagnosticsConfig& cfg, const RngStreams& rng) {
  std::vector<Vec> thetas(m);
  const StepRng init = rng.step(Stream::prior_init, 0);
  for (std::size_t j = 0; j < m; ++j) {
    CounterRng r = init.particle(first_id + j);
    thetas[j] = model.sample_prior(r);
  }
  ContrastiveCloud cloud(std::move(thetas), first_id);
  const History none;
  for (std::size_t s = 0; s < cfg.ula_steps; ++s)
    pooled_langevin_step(cloud, model, none, xi, rho, cfg.ula_gamma, rng.step(Stream::contrastive, s));
  return cloud;
}

Vec one_estimate(const Model& model, DiagnosticEstimator which, const Vec& xi, std::size_t budget,
                 const DiagnosticsConfig& cfg, const RngStreams& rng, const Vec& oracle) {
  if (which == DiagnosticEstimator::oracle) return oracle;
  const auto* lg = dynamic_cast<const LinearGaussian1D*>(&model);
  const History none;
  const JointCloud joint = lg ? conjugate::sample_joint(*lg, none, xi[0], budget, rng.step(Stream::joint, 0))
                              : sample_joint_prior(model, xi, budget, rng.step(Stream::joint, 0));
  switch (which) {
    case DiagnosticEstimator::pooled: {
      const PoolingWeights nu = PoolingWeights::uniform(budget);
      const ContrastiveCloud q =
          lg ? conjugate::sample_pooled(*lg, none, xi[0], joint, nu, budget, rng.step(Stream::contrastive, 0))
             : ula_cloud(model, xi, OutcomeMeasure::empirical(joint.y), budget, 0, cfg, rng);
      return grad_pooled_snis(model, xi, joint, q, nu).grad;
    }
    case DiagnosticEstimator::prior_is: {
      const ContrastiveCloud prior = sample_contrastive_prior(model, budget, rng.step(Stream::contrastive, 0));
      return grad_prior_is(model, xi, joint, prior).grad;
    }
    case DiagnosticEstimator::nested: {
      std::vector<ContrastiveCloud> inner;
      inner.reserve(budget);
      for (std::size_t i = 0; i < budget; ++i) {
        if (lg) {
          inner.push_back(conjugate::sample_posterior(*lg, none, xi[0], joint.y[i][0], budget, rng.step(Stream::inner, i)));
        } else {
          const OutcomeMeasure single({joint.y[i]}, PoolingWeights::uniform(1));
          inner.push_back(ula_cloud(model, xi, single, budget, i * budget, cfg, rng));
        }
      }
      return grad_nested_mc(model, xi, joint, inner).grad;
    }
    case DiagnosticEstimator::oracle: break;
  }
  return oracle;
}

}  // namespace

std::vector<DiagnosticRow> gradient_diagnostics(const Model& model, const DiagnosticsConfig& cfg,
                                                const RngStreams& rng) {
  cfg.validate();
  std::vector<DiagnosticRow> rows;
  for (std::size_t d = 0; d < cfg.designs.size(); ++d) {
    const Vec& xi = cfg.designs[d];
    require(xi.size() == model.design_dim(), "gradient_diagnostics: design dimension mismatch");
    const std::optional<Vec> exact = analytic_eig_gradient(model, xi);
    const Vec oracle =
        exact ? *exact : nested_mc_eig_gradient(model, xi, cfg.fd_outer, cfg.fd_inner, cfg.fd_step, rng.derive(0xfd00 + d));
    for (DiagnosticEstimator which : cfg.estimators) {
      for (std::size_t budget : cfg.budgets) {
        const auto started = std::chrono::steady_clock::now();
        const RngStreams cell = rng.derive(0xd1a0000 + d).derive(budget);
        Mat draws(xi.size(), static_cast<Eigen::Index>(cfg.replications));
        for (std::size_t rep = 0; rep < cfg.replications; ++rep)
          draws.col(static_cast<Eigen::Index>(rep)) = one_estimate(model, which, xi, budget, cfg, cell.derive(rep), oracle);
        const double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
        for (Eigen::Index c = 0; c < xi.size(); ++c) {
          const Vec comp = draws.row(c).transpose();
          const Moments mo = sample_moments(std::span<const double>(comp.data(), static_cast<std::size_t>(comp.size())));
          const double n = static_cast<double>(cfg.replications);
          DiagnosticRow row;
          row.estimator = to_string(which);
          row.xi = xi;
          row.component = static_cast<std::size_t>(c);
          row.budget = budget;
          row.replications = cfg.replications;
          row.mean = mo.mean;
          row.sd = std::sqrt(mo.variance * n / (n - 1.0));
          row.se = row.sd / std::sqrt(n);
          row.oracle = oracle[c];
          row.bias = which == DiagnosticEstimator::oracle ? 0.0 : mo.mean - oracle[c];
          row.wall_ms = wall;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

}  // namespace codiff
