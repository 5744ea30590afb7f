#pragma once

#include "codiff/numerics.hpp"
#include "codiff/rng.hpp"
#include "codiff/types.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

namespace testing {

using codiff::Vec;

/// Central differences of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec up = x;
    Vec dn = x;
    up[i] += h;
    dn[i] -= h;
    g[i] = (f(up) - f(dn)) / (2.0 * h);
  }
  return g;
}

/// Relative error with an absolute floor so near-zero gradients compare sensibly.
inline double rel_err(const Vec& a, const Vec& b, double floor = 1e-3) {
  return (a - b).norm() / std::max(floor, std::max(a.norm(), b.norm()));
}

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline Vec scalar(double x) { return Vec::Constant(1, x); }

struct MeanSe {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

/// Mean, unbiased sd and standard error, computed independently of the library's reductions.
inline MeanSe mean_se(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  long double sum = 0.0L;
  for (double x : xs) sum += x;
  const double mean = static_cast<double>(sum / n);
  long double ss = 0.0L;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(static_cast<double>(ss / (n - 1.0)));
  return {mean, sd, sd / std::sqrt(n)};
}

inline double variance(const std::vector<double>& xs) {
  const double sd = mean_se(xs).sd;
  return sd * sd;
}

inline std::vector<double> first_coords(const std::vector<Vec>& xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x[0]);
  return out;
}

inline std::vector<Vec> normal_draws(std::size_t n, Eigen::Index dim, std::uint64_t seed) {
  codiff::CounterRng rng(seed);
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(rng.normal_vec(dim));
  return out;
}

}  // namespace testing
