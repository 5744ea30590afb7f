#include "codiff/models.hpp"

#include "codiff/numerics.hpp"

#include <cmath>
#include <limits>

namespace codiff {

namespace {

void check_dims(const Model& m, const Vec& y, const Vec& theta, const Vec& xi) {
  if (y.size() != m.outcome_dim() || theta.size() != m.theta_dim() || xi.size() != m.design_dim())
    throw ContractViolation(m.name() + ": dimension mismatch");
}

Vec scalar(double v) { return Vec::Constant(1, v); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct MaskFactor {
  double value;
  double d_center;
};

// S((x − c + h)/s) + S((c + h − x)/s) − 1 and its derivative in the centre c.
MaskFactor mask_factor(double x, double center, double h, double s) {
  const double left = sigmoid((x - center + h) / s);
  const double right = sigmoid((center + h - x) / s);
  return {left + right - 1.0, (-left * (1.0 - left) + right * (1.0 - right)) / s};
}

}  // namespace

// ---------------------------------------------------------------- LinearGaussian1D

LinearGaussian1D::LinearGaussian1D(Params p) : p_(p) {
  require(p_.sigma > 0.0 && p_.prior_sd > 0.0, "LinearGaussian1D: sigma and prior_sd must be positive");
  require(p_.bound > 0.0, "LinearGaussian1D: bound must be positive");
}

Box LinearGaussian1D::default_bounds() const { return Box(scalar(-p_.bound), scalar(p_.bound)); }

double LinearGaussian1D::log_prior(const Vec& theta) const {
  return normal_log_density(theta, scalar(p_.prior_mean), p_.prior_sd);
}

Vec LinearGaussian1D::grad_log_prior(const Vec& theta) const {
  return scalar(-(theta[0] - p_.prior_mean) / (p_.prior_sd * p_.prior_sd));
}

Vec LinearGaussian1D::sample_prior(CounterRng& rng) const { return scalar(p_.prior_mean + p_.prior_sd * rng.normal()); }

double LinearGaussian1D::log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  check_dims(*this, y, theta, xi);
  const double r = y[0] - p_.a * xi[0] * theta[0];
  return -0.5 * r * r / (p_.sigma * p_.sigma) - std::log(p_.sigma) - kLogSqrt2Pi;
}

Vec LinearGaussian1D::grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const double r = y[0] - p_.a * xi[0] * theta[0];
  return scalar(p_.a * xi[0] * r / (p_.sigma * p_.sigma));
}

Vec LinearGaussian1D::grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const double r = y[0] - p_.a * xi[0] * theta[0];
  return scalar(-r / (p_.sigma * p_.sigma));
}

Vec LinearGaussian1D::grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const double r = y[0] - p_.a * xi[0] * theta[0];
  return scalar(p_.a * theta[0] * r / (p_.sigma * p_.sigma));
}

void LinearGaussian1D::lik_gradients(const Vec& y, const Vec& theta, const Vec& xi, Eigen::Ref<Vec> grad_xi,
                                     Eigen::Ref<Vec> grad_y) const {
  const double scaled = (y[0] - p_.a * xi[0] * theta[0]) / (p_.sigma * p_.sigma);
  grad_xi[0] = p_.a * theta[0] * scaled;
  grad_y[0] = -scaled;
}

Vec LinearGaussian1D::forward(const Vec& u, const Vec& theta, const Vec& xi) const {
  check_dims(*this, u, theta, xi);
  return scalar(p_.a * xi[0] * theta[0] + p_.sigma * u[0]);
}

Vec LinearGaussian1D::inverse(const Vec& y, const Vec& theta, const Vec& xi) const {
  check_dims(*this, y, theta, xi);
  return scalar((y[0] - p_.a * xi[0] * theta[0]) / p_.sigma);
}

Mat LinearGaussian1D::jacobian_xi(const Vec& /*u*/, const Vec& theta, const Vec& /*xi*/) const {
  return Mat::Constant(1, 1, p_.a * theta[0]);
}

std::optional<DiagonalObservation> LinearGaussian1D::linear_observation(const Vec& xi) const {
  return DiagonalObservation{scalar(p_.a * xi[0]), p_.sigma};
}

LinearGaussian1D::Gaussian LinearGaussian1D::posterior(const History& hist) const {
  const double s2 = p_.sigma * p_.sigma;
  double precision = 1.0 / (p_.prior_sd * p_.prior_sd);
  double shift = p_.prior_mean * precision;
  for (const auto& e : hist.entries()) {
    const double gain = p_.a * e.xi[0];
    precision += gain * gain / s2;
    shift += gain * e.y[0] / s2;
  }
  return {shift / precision, 1.0 / precision};
}

LinearGaussian1D::Gaussian LinearGaussian1D::pooled_posterior(const History& hist, double xi,
                                                              const std::vector<double>& ys, const Vec& nu) const {
  require(static_cast<Eigen::Index>(ys.size()) == nu.size() && !ys.empty(), "pooled_posterior: size mismatch");
  const Gaussian base = posterior(hist);
  const double s2 = p_.sigma * p_.sigma;
  const double gain = p_.a * xi;
  double precision = 1.0 / base.variance;
  double shift = base.mean * precision;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const double w = nu[static_cast<Eigen::Index>(i)];
    precision += w * gain * gain / s2;
    shift += w * gain * ys[i] / s2;
  }
  return {shift / precision, 1.0 / precision};
}

// ---------------------------------------------------------------- source location

double signal_strength(const Vec& theta, const Vec& xi, const SourceConstants& consts) {
  require(consts.max_signal > 0.0, "signal_strength: m must be positive");
  require(theta.size() == 2 * consts.sources() && xi.size() == 2, "signal_strength: dimension mismatch");
  double mu = consts.background;
  for (Eigen::Index c = 0; c < consts.sources(); ++c) {
    const double d2 = (theta.segment<2>(2 * c) - xi).squaredNorm();
    mu += consts.alpha[c] / (consts.max_signal + d2);
  }
  return mu;
}

Vec signal_strength_grad_xi(const Vec& theta, const Vec& xi, const SourceConstants& consts) {
  Vec grad = Vec::Zero(2);
  for (Eigen::Index c = 0; c < consts.sources(); ++c) {
    const Vec diff = theta.segment<2>(2 * c) - xi;
    const double denom = consts.max_signal + diff.squaredNorm();
    grad += 2.0 * consts.alpha[c] * diff / (denom * denom);
  }
  return grad;
}

Vec signal_strength_grad_theta(const Vec& theta, const Vec& xi, const SourceConstants& consts) {
  Vec grad(theta.size());
  for (Eigen::Index c = 0; c < consts.sources(); ++c) {
    const Vec diff = theta.segment<2>(2 * c) - xi;
    const double denom = consts.max_signal + diff.squaredNorm();
    grad.segment<2>(2 * c) = -2.0 * consts.alpha[c] * diff / (denom * denom);
  }
  return grad;
}

SourceLocation::SourceLocation(Params p) : p_(std::move(p)) {
  require(p_.consts.sources() >= 1, "SourceLocation: need at least one source");
  require(p_.consts.max_signal > 0.0 && p_.consts.background > 0.0, "SourceLocation: b and m must be positive");
  require(p_.sigma > 0.0 && p_.prior_sd > 0.0 && p_.bound > 0.0, "SourceLocation: scales must be positive");
  if (p_.prior_mean.size() != theta_dim()) {
    require(p_.prior_mean.size() == 0 || p_.prior_mean.isZero(), "SourceLocation: prior mean dimension mismatch");
    p_.prior_mean = Vec::Zero(theta_dim());
  }
}

Box SourceLocation::default_bounds() const { return Box(Vec::Constant(2, -p_.bound), Vec::Constant(2, p_.bound)); }

double SourceLocation::log_prior(const Vec& theta) const { return normal_log_density(theta, p_.prior_mean, p_.prior_sd); }

Vec SourceLocation::grad_log_prior(const Vec& theta) const {
  return -(theta - p_.prior_mean) / (p_.prior_sd * p_.prior_sd);
}

Vec SourceLocation::sample_prior(CounterRng& rng) const {
  return p_.prior_mean + p_.prior_sd * rng.normal_vec(theta_dim());
}

double SourceLocation::log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  check_dims(*this, y, theta, xi);
  if (!(y[0] > 0.0)) return -std::numeric_limits<double>::infinity();
  const double log_y = std::log(y[0]);
  const double r = log_y - std::log(signal_strength(theta, xi, p_.consts));
  return -0.5 * r * r / (p_.sigma * p_.sigma) - std::log(p_.sigma) - kLogSqrt2Pi - log_y;
}

Vec SourceLocation::grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const double mu = signal_strength(theta, xi, p_.consts);
  const double r = std::log(y[0]) - std::log(mu);
  return (r / (p_.sigma * p_.sigma) / mu) * signal_strength_grad_theta(theta, xi, p_.consts);
}

Vec SourceLocation::grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const double r = std::log(y[0]) - std::log(signal_strength(theta, xi, p_.consts));
  return scalar(-r / (p_.sigma * p_.sigma * y[0]) - 1.0 / y[0]);
}

Vec SourceLocation::grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const double mu = signal_strength(theta, xi, p_.consts);
  const double r = std::log(y[0]) - std::log(mu);
  return (r / (p_.sigma * p_.sigma) / mu) * signal_strength_grad_xi(theta, xi, p_.consts);
}

void SourceLocation::lik_gradients(const Vec& y, const Vec& theta, const Vec& xi, Eigen::Ref<Vec> grad_xi,
                                   Eigen::Ref<Vec> grad_y) const {
  double mu = p_.consts.background;
  Eigen::Vector2d d_mu = Eigen::Vector2d::Zero();
  for (Eigen::Index c = 0; c < p_.consts.sources(); ++c) {
    const Eigen::Vector2d diff = theta.segment<2>(2 * c) - xi;
    const double denom = p_.consts.max_signal + diff.squaredNorm();
    mu += p_.consts.alpha[c] / denom;
    d_mu += 2.0 * p_.consts.alpha[c] * diff / (denom * denom);
  }
  const double s2 = p_.sigma * p_.sigma;
  const double r = std::log(y[0]) - std::log(mu);
  grad_xi = (r / s2 / mu) * d_mu;
  grad_y[0] = -r / (s2 * y[0]) - 1.0 / y[0];
}

Vec SourceLocation::forward(const Vec& u, const Vec& theta, const Vec& xi) const {
  check_dims(*this, u, theta, xi);
  return scalar(signal_strength(theta, xi, p_.consts) * std::exp(p_.sigma * u[0]));
}

Vec SourceLocation::inverse(const Vec& y, const Vec& theta, const Vec& xi) const {
  check_dims(*this, y, theta, xi);
  if (!(y[0] > 0.0)) throw SingularMapError("source_location: outcome must be strictly positive");
  return scalar((std::log(y[0]) - std::log(signal_strength(theta, xi, p_.consts))) / p_.sigma);
}

Mat SourceLocation::jacobian_xi(const Vec& u, const Vec& theta, const Vec& xi) const {
  // ∂/∂ξ of μ·exp(σu) with u held fixed.
  const Vec grad = std::exp(p_.sigma * u[0]) * signal_strength_grad_xi(theta, xi, p_.consts);
  return grad.transpose();
}

// ---------------------------------------------------------------- smooth mask

double smooth_mask(const Vec& xi, const Vec& x, const MaskShape& shape) {
  require(shape.half_width > 0.0 && shape.scale_x > 0.0 && shape.scale_y > 0.0, "smooth_mask: h and s must be positive");
  return mask_factor(x[0], xi[0], shape.half_width, shape.scale_x).value *
         mask_factor(x[1], xi[1], shape.half_width, shape.scale_y).value;
}

Vec smooth_mask_grad_xi(const Vec& xi, const Vec& x, const MaskShape& shape) {
  const MaskFactor f1 = mask_factor(x[0], xi[0], shape.half_width, shape.scale_x);
  const MaskFactor f2 = mask_factor(x[1], xi[1], shape.half_width, shape.scale_y);
  Vec grad(2);
  grad << f1.d_center * f2.value, f1.value * f2.d_center;
  return grad;
}

SmoothMaskInverse::SmoothMaskInverse(Params p, GaussianMixture prior) : p_(p), prior_(std::move(prior)) {
  require(p_.grid >= 1, "SmoothMaskInverse: grid must be positive");
  require(p_.sigma > 0.0, "SmoothMaskInverse: sigma must be positive");
  require(p_.shape.half_width > 0.0 && p_.shape.scale_x > 0.0 && p_.shape.scale_y > 0.0,
          "SmoothMaskInverse: mask half-width and scales must be positive");
  require(prior_.dim() == theta_dim(), "SmoothMaskInverse: prior dimension must equal grid²");
}

Vec SmoothMaskInverse::mask(const Vec& xi) const {
  require(xi.size() == 2, "SmoothMaskInverse::mask: design must be 2-dimensional");
  const double h = p_.shape.half_width;
  Vec fx(p_.grid);
  Vec fy(p_.grid);
  for (int k = 0; k < p_.grid; ++k) {
    fx[k] = mask_factor(k, xi[0], h, p_.shape.scale_x).value;
    fy[k] = mask_factor(k, xi[1], h, p_.shape.scale_y).value;
  }
  Vec out(theta_dim());
  for (int row = 0; row < p_.grid; ++row)
    for (int col = 0; col < p_.grid; ++col) out[row * p_.grid + col] = fx[col] * fy[row];
  return out;
}

Mat SmoothMaskInverse::mask_grad(const Vec& xi) const {
  require(xi.size() == 2, "SmoothMaskInverse::mask_grad: design must be 2-dimensional");
  const double h = p_.shape.half_width;
  std::vector<MaskFactor> fx;
  std::vector<MaskFactor> fy;
  for (int k = 0; k < p_.grid; ++k) {
    fx.push_back(mask_factor(k, xi[0], h, p_.shape.scale_x));
    fy.push_back(mask_factor(k, xi[1], h, p_.shape.scale_y));
  }
  Mat out(theta_dim(), 2);
  for (int row = 0; row < p_.grid; ++row)
    for (int col = 0; col < p_.grid; ++col) {
      const auto idx = row * p_.grid + col;
      out(idx, 0) = fx[col].d_center * fy[row].value;
      out(idx, 1) = fx[col].value * fy[row].d_center;
    }
  return out;
}

Box SmoothMaskInverse::default_bounds() const {
  return Box(Vec::Zero(2), Vec::Constant(2, static_cast<double>(p_.grid - 1)));
}

double SmoothMaskInverse::log_prior(const Vec& theta) const { return prior_.log_density(theta); }
Vec SmoothMaskInverse::grad_log_prior(const Vec& theta) const { return prior_.score(theta); }
Vec SmoothMaskInverse::sample_prior(CounterRng& rng) const { return prior_.sample(rng); }

double SmoothMaskInverse::log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  check_dims(*this, y, theta, xi);
  const Vec r = y - mask(xi).cwiseProduct(theta);
  return -0.5 * r.squaredNorm() / (p_.sigma * p_.sigma) -
         static_cast<double>(y.size()) * (std::log(p_.sigma) + kLogSqrt2Pi);
}

Vec SmoothMaskInverse::grad_theta_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const Vec mu = mask(xi);
  return mu.cwiseProduct(y - mu.cwiseProduct(theta)) / (p_.sigma * p_.sigma);
}

Vec SmoothMaskInverse::grad_y_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  return -(y - mask(xi).cwiseProduct(theta)) / (p_.sigma * p_.sigma);
}

Vec SmoothMaskInverse::grad_xi_log_lik(const Vec& y, const Vec& theta, const Vec& xi) const {
  const Vec r = y - mask(xi).cwiseProduct(theta);
  return mask_grad(xi).transpose() * r.cwiseProduct(theta) / (p_.sigma * p_.sigma);
}

Vec SmoothMaskInverse::forward(const Vec& u, const Vec& theta, const Vec& xi) const {
  check_dims(*this, u, theta, xi);
  return mask(xi).cwiseProduct(theta) + p_.sigma * u;
}

Vec SmoothMaskInverse::inverse(const Vec& y, const Vec& theta, const Vec& xi) const {
  check_dims(*this, y, theta, xi);
  return (y - mask(xi).cwiseProduct(theta)) / p_.sigma;
}

Mat SmoothMaskInverse::jacobian_xi(const Vec& /*u*/, const Vec& theta, const Vec& xi) const {
  return theta.asDiagonal() * mask_grad(xi);
}

std::optional<DiagonalObservation> SmoothMaskInverse::linear_observation(const Vec& xi) const {
  return DiagonalObservation{mask(xi), p_.sigma};
}

}  // namespace codiff
