#pragma once

#include "codiff/types.hpp"

#include <span>

namespace codiff {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log Σ exp(x_i); returns -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> x);
double log_sum_exp(const Vec& x);

/// Sum in a fixed binary-tree order so the result does not depend on thread layout.
double pairwise_sum(std::span<const double> x);
Vec pairwise_sum(std::span<const Vec> terms);

/// Normalizes log weights onto the simplex; returns false when no entry is finite.
bool normalize_log_weights(const Vec& log_w, Vec& out);

/// Log density of N(mean, sd^2) summed over coordinates.
double normal_log_density(const Vec& x, const Vec& mean, double sd);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

Moments sample_moments(std::span<const double> x);
Moments weighted_moments(std::span<const double> x, const Vec& w);

}  // namespace codiff
