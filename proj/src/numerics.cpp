#include "codiff/numerics.hpp"

#include "codiff/parallel.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace codiff {

namespace {

constexpr std::size_t kPairwiseLeaf = 8;

double tree_sum(const double* x, std::size_t n) {
  if (n <= kPairwiseLeaf) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return tree_sum(x, half) + tree_sum(x + half, n - half);
}

Vec tree_sum(const Vec* x, std::size_t n) {
  if (n <= kPairwiseLeaf) {
    Vec s = x[0];
    for (std::size_t i = 1; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return tree_sum(x, half) + tree_sum(x + half, n - half);
}

}  // namespace

void set_thread_count(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

bool all_finite(const Vec& v) { return v.allFinite(); }

double log_sum_exp(std::span<const double> x) {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  double peak = neg_inf;
  for (double v : x)
    if (!std::isnan(v)) peak = std::max(peak, v);
  if (peak == neg_inf) return neg_inf;
  if (std::isinf(peak)) return peak;
  double s = 0.0;
  for (double v : x)
    if (!std::isnan(v)) s += std::exp(v - peak);
  return peak + std::log(s);
}

double log_sum_exp(const Vec& x) { return log_sum_exp(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))); }

double pairwise_sum(std::span<const double> x) { return x.empty() ? 0.0 : tree_sum(x.data(), x.size()); }

Vec pairwise_sum(std::span<const Vec> terms) {
  require(!terms.empty(), "pairwise_sum: empty input");
  return tree_sum(terms.data(), terms.size());
}

bool normalize_log_weights(const Vec& log_w, Vec& out) {
  out.resize(log_w.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < log_w.size(); ++j)
    if (std::isfinite(log_w[j])) peak = std::max(peak, log_w[j]);
  if (!std::isfinite(peak)) return false;
  double total = 0.0;
  for (Eigen::Index j = 0; j < log_w.size(); ++j) {
    const double v = log_w[j];
    out[j] = std::isfinite(v) ? std::exp(v - peak) : 0.0;
    total += out[j];
  }
  out /= total;
  return true;
}

double normal_log_density(const Vec& x, const Vec& mean, double sd) {
  const double n = static_cast<double>(x.size());
  return -0.5 * (x - mean).squaredNorm() / (sd * sd) - n * (std::log(sd) + kLogSqrt2Pi);
}

Moments sample_moments(std::span<const double> x) {
  require(!x.empty(), "sample_moments: empty input");
  const double n = static_cast<double>(x.size());
  const double mean = pairwise_sum(x) / n;
  std::vector<double> sq(x.size());
  std::transform(x.begin(), x.end(), sq.begin(), [mean](double v) { return (v - mean) * (v - mean); });
  return {mean, pairwise_sum(sq) / n};
}

Moments weighted_moments(std::span<const double> x, const Vec& w) {
  require(static_cast<Eigen::Index>(x.size()) == w.size() && !x.empty(), "weighted_moments: size mismatch");
  std::vector<double> terms(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) terms[i] = w[static_cast<Eigen::Index>(i)] * x[i];
  const double total = w.sum();
  const double mean = pairwise_sum(terms) / total;
  for (std::size_t i = 0; i < x.size(); ++i) terms[i] = w[static_cast<Eigen::Index>(i)] * (x[i] - mean) * (x[i] - mean);
  return {mean, pairwise_sum(terms) / total};
}

}  // namespace codiff
