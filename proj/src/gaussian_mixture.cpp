#include "codiff/gaussian_mixture.hpp"

#include "codiff/numerics.hpp"

#include <cmath>

namespace codiff {

GaussianMixture::GaussianMixture(std::vector<Component> components) : components_(std::move(components)) {
  require(!components_.empty(), "GaussianMixture: no components");
  const Eigen::Index d = components_.front().mean.size();
  double total = 0.0;
  for (const auto& c : components_) {
    require(c.mean.size() == d && c.sd.size() == d, "GaussianMixture: component dimension mismatch");
    require(c.weight > 0.0 && (c.sd.array() > 0.0).all(), "GaussianMixture: weights and sds must be positive");
    total += c.weight;
  }
  log_weights_.resize(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t k = 0; k < components_.size(); ++k) {
    components_[k].weight /= total;
    log_weights_[static_cast<Eigen::Index>(k)] = std::log(components_[k].weight);
  }
}

GaussianMixture GaussianMixture::isotropic(Vec mean, double sd) {
  Vec sds = Vec::Constant(mean.size(), sd);
  return GaussianMixture({Component{1.0, std::move(mean), std::move(sds)}});
}

Vec GaussianMixture::component_log_terms(const Vec& x) const {
  Vec terms(static_cast<Eigen::Index>(components_.size()));
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const Eigen::ArrayXd z = (x - c.mean).array() / c.sd.array();
    terms[static_cast<Eigen::Index>(k)] = log_weights_[static_cast<Eigen::Index>(k)] - 0.5 * z.square().sum() -
                                          c.sd.array().log().sum() - static_cast<double>(x.size()) * kLogSqrt2Pi;
  }
  return terms;
}

double GaussianMixture::log_density(const Vec& x) const { return log_sum_exp(component_log_terms(x)); }

Vec GaussianMixture::responsibilities(const Vec& x) const {
  Vec r;
  normalize_log_weights(component_log_terms(x), r);
  return r;
}

Vec GaussianMixture::score(const Vec& x) const {
  const Vec r = responsibilities(x);
  Vec s = Vec::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    s.array() -= r[static_cast<Eigen::Index>(k)] * (x - c.mean).array() / c.sd.array().square();
  }
  return s;
}

Vec GaussianMixture::hessian_vector(const Vec& x, const Vec& v) const {
  const Vec r = responsibilities(x);
  Vec out = Vec::Zero(x.size());
  Vec mean_score = Vec::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double rk = r[static_cast<Eigen::Index>(k)];
    const Eigen::ArrayXd prec = c.sd.array().square().inverse();
    const Vec sk = (-(x - c.mean).array() * prec).matrix();
    out.array() -= rk * prec * v.array();
    out += rk * sk * sk.dot(v);
    mean_score += rk * sk;
  }
  out -= mean_score * mean_score.dot(v);
  return out;
}

Vec GaussianMixture::hessian_diagonal(const Vec& x) const {
  const Vec r = responsibilities(x);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(x.size());
  Eigen::ArrayXd mean_score = Eigen::ArrayXd::Zero(x.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    const double rk = r[static_cast<Eigen::Index>(k)];
    const Eigen::ArrayXd prec = c.sd.array().square().inverse();
    const Eigen::ArrayXd sk = -(x - c.mean).array() * prec;
    out += rk * (sk.square() - prec);
    mean_score += rk * sk;
  }
  return (out - mean_score.square()).matrix();
}

std::size_t GaussianMixture::sample_component(CounterRng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    acc += components_[k].weight;
    if (u < acc) return k;
  }
  return components_.size() - 1;
}

Vec GaussianMixture::sample(CounterRng& rng) const {
  const auto& c = components_[sample_component(rng)];
  return c.mean + (c.sd.array() * rng.normal_vec(c.mean.size()).array()).matrix();
}

GaussianMixture GaussianMixture::noised(double alpha_bar) const {
  require(alpha_bar > 0.0 && alpha_bar <= 1.0, "GaussianMixture::noised: alpha_bar outside (0, 1]");
  std::vector<Component> out;
  out.reserve(components_.size());
  const double scale = std::sqrt(alpha_bar);
  for (const auto& c : components_) {
    Vec sd = (alpha_bar * c.sd.array().square() + (1.0 - alpha_bar)).sqrt().matrix();
    out.push_back({c.weight, scale * c.mean, std::move(sd)});
  }
  return GaussianMixture(std::move(out));
}

}  // namespace codiff
