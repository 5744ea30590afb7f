#include "codiff/model.hpp"

namespace codiff {

Vec sample_outcome(const Model& model, const Vec& theta, const Design& design, const Vec& u) {
  require(theta.size() == model.theta_dim(), "sample_outcome: theta dimension mismatch");
  require(design.dim() == model.design_dim(), "sample_outcome: design dimension mismatch");
  require(u.size() == model.outcome_dim(), "sample_outcome: noise dimension mismatch");
  return model.forward(u, theta, design.xi);
}

Vec sample_outcome(const Model& model, const Vec& theta, const Vec& xi, CounterRng& rng) {
  return model.forward(model.sample_noise(rng), theta, xi);
}

double potential(const Model& model, const Vec& y, const Vec& theta, const Vec& xi) {
  return -model.log_prior(theta) - model.log_lik(y, theta, xi);
}

double current_prior_log_density(const Model& model, const History& hist, const Vec& theta) {
  double total = model.log_prior(theta);
  for (const auto& e : hist.entries()) total += model.log_lik(e.y, theta, e.xi);
  return total;
}

Vec current_prior_score(const Model& model, const History& hist, const Vec& theta) {
  Vec score = model.grad_log_prior(theta);
  for (const auto& e : hist.entries()) score += model.grad_theta_log_lik(e.y, theta, e.xi);
  return score;
}

PathTerms path_terms(const Model& model, const Vec& xi, const Vec& y, const Vec& theta_path) {
  PathTerms terms;
  terms.u = model.inverse(y, theta_path, xi);
  terms.jacobian = model.jacobian_xi(terms.u, theta_path, xi);
  return terms;
}

Vec g_from_path(const Model& model, const Vec& xi, const Vec& y, const Vec& theta_eval, const PathTerms& path) {
  return model.grad_xi_log_lik(y, theta_eval, xi) + path.jacobian.transpose() * model.grad_y_log_lik(y, theta_eval, xi);
}

void g_from_path_into(const Model& model, const Vec& xi, const Vec& y, const Vec& theta_eval, const PathTerms& path,
                      Eigen::Ref<Vec> out, Eigen::Ref<Vec> scratch) {
  model.lik_gradients(y, theta_eval, xi, out, scratch);
  out.noalias() += path.jacobian.transpose() * scratch;
}

Vec g_score(const Model& model, const Design& design, const Vec& y, const Vec& theta_path, const Vec& theta_eval) {
  require(design.dim() == model.design_dim(), "g_score: design dimension mismatch");
  require(y.size() == model.outcome_dim(), "g_score: outcome dimension mismatch");
  require(theta_path.size() == model.theta_dim() && theta_eval.size() == model.theta_dim(),
          "g_score: theta dimension mismatch");
  return g_from_path(model, design.xi, y, theta_eval, path_terms(model, design.xi, y, theta_path));
}

}  // namespace codiff
