#pragma once

#include "codiff/model.hpp"

#include <cstdint>
#include <vector>

namespace codiff {

/// Joint particles (θ_i, y_i). Stream ids belong to slots, not to particle values, so
/// duplicates created by resampling still draw independent noise afterwards.
struct JointCloud {
  std::vector<Vec> theta;
  std::vector<Vec> y;
  std::vector<std::uint64_t> stream_ids;

  JointCloud() = default;
  JointCloud(std::vector<Vec> thetas, std::vector<Vec> ys, std::uint64_t first_id = 0);
  std::size_t size() const { return theta.size(); }
};

/// Contrastive particles θ'_j.
struct ContrastiveCloud {
  std::vector<Vec> theta;
  std::vector<std::uint64_t> stream_ids;

  ContrastiveCloud() = default;
  explicit ContrastiveCloud(std::vector<Vec> thetas, std::uint64_t first_id = 0);
  std::size_t size() const { return theta.size(); }
};

/// θ_i ~ p(θ), y_i ~ p(y|θ_i, ξ).
JointCloud sample_joint_prior(const Model& model, const Vec& xi, std::size_t n, const StepRng& rng);
/// θ'_j ~ p(θ).
ContrastiveCloud sample_contrastive_prior(const Model& model, std::size_t m, const StepRng& rng);

/// Redraws every y_i exactly from p(y|θ_i, ξ).
void resample_outcomes(JointCloud& cloud, const Model& model, const Vec& xi, const StepRng& rng);

}  // namespace codiff
