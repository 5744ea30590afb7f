#include "codiff/clouds.hpp"

#include "codiff/parallel.hpp"

#include <numeric>

namespace codiff {

namespace {

std::vector<std::uint64_t> consecutive_ids(std::size_t n, std::uint64_t first) {
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), first);
  return ids;
}

}  // namespace

JointCloud::JointCloud(std::vector<Vec> thetas, std::vector<Vec> ys, std::uint64_t first_id)
    : theta(std::move(thetas)), y(std::move(ys)), stream_ids(consecutive_ids(theta.size(), first_id)) {
  require(!theta.empty(), "JointCloud: empty cloud");
  require(theta.size() == y.size(), "JointCloud: theta and outcome counts differ");
}

ContrastiveCloud::ContrastiveCloud(std::vector<Vec> thetas, std::uint64_t first_id)
    : theta(std::move(thetas)), stream_ids(consecutive_ids(theta.size(), first_id)) {
  require(!theta.empty(), "ContrastiveCloud: empty cloud");
}

JointCloud sample_joint_prior(const Model& model, const Vec& xi, std::size_t n, const StepRng& rng) {
  require(n >= 1, "sample_joint_prior: n must be positive");
  std::vector<Vec> thetas(n);
  std::vector<Vec> ys(n);
  parallel_for(n, [&](std::size_t i) {
    CounterRng r = rng.particle(i);
    thetas[i] = model.sample_prior(r);
    ys[i] = sample_outcome(model, thetas[i], xi, r);
  });
  return JointCloud(std::move(thetas), std::move(ys));
}

ContrastiveCloud sample_contrastive_prior(const Model& model, std::size_t m, const StepRng& rng) {
  require(m >= 1, "sample_contrastive_prior: m must be positive");
  std::vector<Vec> thetas(m);
  parallel_for(m, [&](std::size_t j) {
    CounterRng r = rng.particle(j);
    thetas[j] = model.sample_prior(r);
  });
  return ContrastiveCloud(std::move(thetas));
}

void resample_outcomes(JointCloud& cloud, const Model& model, const Vec& xi, const StepRng& rng) {
  const std::size_t n = cloud.size();
  parallel_for(n, [&](std::size_t i) {
    CounterRng r = rng.particle(cloud.stream_ids[i]);
    cloud.y[i] = sample_outcome(model, cloud.theta[i], xi, r);
  });
}

}  // namespace codiff
