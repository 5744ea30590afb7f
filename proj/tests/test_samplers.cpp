#include "codiff/gaussian_mixture.hpp"
#include "codiff/models.hpp"
#include "codiff/samplers.hpp"
#include "support.hpp"

using namespace codiff;
using testing::scalar;

namespace {

const LinearGaussian1D kLg;

std::vector<std::uint64_t> ids(std::size_t n) {
  std::vector<std::uint64_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

/// Runs ULA on a 1-D target and collects thinned samples from every chain after burn-in.
std::vector<double> ula_samples(const std::function<Vec(const Vec&)>& score, std::size_t chains, std::size_t steps,
                                double gamma, std::uint64_t seed) {
  std::vector<Vec> xs(chains, scalar(0.0));
  const auto slot = ids(chains);
  const RngStreams rng(seed);
  std::vector<double> out;
  for (std::size_t s = 0; s < steps; ++s) {
    langevin_step(xs, slot, score, gamma, rng.step(Stream::contrastive, s));
    if (s >= steps / 10 && s % 50 == 0)
      for (const auto& x : xs) out.push_back(x[0]);
  }
  return out;
}

LogTarget mixture_target(const GaussianMixture& gm) {
  return {[gm](const Vec& x) { return gm.log_density(x); }, [gm](const Vec& x) { return gm.score(x); }};
}

}  // namespace

TEST_SUITE("samplers") {
  TEST_CASE("step schedules") {
    const StepSchedule flat;
    CHECK(flat.at(0) == 1e-2);
    CHECK(flat.at(1000) == 1e-2);
    const StepSchedule decaying{0.1, 0.5, 0.02};
    CHECK(decaying.at(1) == doctest::Approx(0.05));
    CHECK(decaying.at(10) == doctest::Approx(0.02));
    CHECK_THROWS_AS((StepSchedule{0.0, 1.0, 0.0}.validate()), ContractViolation);
    CHECK_THROWS_AS((StepSchedule{0.1, 1.5, 0.0}.validate()), ContractViolation);
    CHECK_THROWS_AS((DigsConfig{1.0, 0, 0.1}.validate()), ContractViolation);
  }

  TEST_CASE("frozen noise turns the joint step into its drift") {
    JointCloud cloud({scalar(2.0)}, {scalar(0.0)});
    joint_langevin_step(cloud, kLg, History{}, scalar(1.5), 0.1, StepRng::frozen_noise());
    CHECK(cloud.theta[0][0] == doctest::Approx(1.8).epsilon(1e-14));
    CHECK(cloud.y[0][0] == doctest::Approx(1.5 * 1.8).epsilon(1e-14));  // exact outcome with u = 0

    JointCloud still({scalar(0.6)}, {scalar(0.0)});
    joint_langevin_step(still, kLg, History{}, scalar(1.0), 1e-12, StepRng::frozen_noise());
    CHECK(still.theta[0][0] == doctest::Approx(0.6).epsilon(1e-10));

    ContrastiveCloud c({scalar(0.6)});
    pooled_langevin_step(c, kLg, History{}, scalar(1.0), OutcomeMeasure::empirical({scalar(1.0)}), 1e-12,
                         StepRng::frozen_noise());
    CHECK(c.theta[0][0] == doctest::Approx(0.6).epsilon(1e-10));
  }

  TEST_CASE("full-joint mode moves theta and y together along the joint potential") {
    JointCloud cloud({scalar(0.5)}, {scalar(1.0)});
    const double gamma = 0.05;
    const double xi = 2.0;
    const double r = 1.0 - xi * 0.5;
    joint_langevin_step(cloud, kLg, History{}, scalar(xi), gamma, StepRng::frozen_noise(), JointMode::full_joint);
    CHECK(cloud.theta[0][0] == doctest::Approx(0.5 + gamma * (-0.5 + xi * r)));
    CHECK(cloud.y[0][0] == doctest::Approx(1.0 - gamma * r));
  }

  TEST_CASE("one pooled atom is an ordinary posterior step") {
    const History hist;
    const Vec xi = scalar(1.1);
    const Vec y = scalar(0.4);
    ContrastiveCloud a({scalar(-0.3), scalar(1.2)});
    std::vector<Vec> b = a.theta;
    const RngStreams rng(4);
    pooled_langevin_step(a, kLg, hist, xi, OutcomeMeasure::empirical({y}), 0.05, rng.step(Stream::contrastive, 0));
    History extended;
    extended.append(xi, y);
    posterior_langevin_step(b, ids(2), kLg, extended, 0.05, rng.step(Stream::contrastive, 0));
    CHECK((a.theta[0] - b[0]).norm() < 1e-14);
    CHECK((a.theta[1] - b[1]).norm() < 1e-14);
  }

  TEST_CASE("non-finite updates keep the previous particle") {
    std::vector<Vec> xs{scalar(1.0), scalar(-1.0)};
    const auto score = [](const Vec& x) { return x[0] > 0 ? scalar(INFINITY) : scalar(0.0); };
    const StepStats stats = langevin_step(xs, ids(2), score, 0.1, StepRng::frozen_noise());
    CHECK(stats.resets == 1);
    CHECK(xs[0][0] == 1.0);
    CHECK(xs[1][0] == -1.0);
  }

  TEST_CASE("drift-only steps descend a convex potential") {
    const Vec center = testing::vec({1.0, -2.0});
    const Mat a = (Mat(2, 2) << 3.0, 0.5, 0.5, 1.0).finished();
    const auto potential = [&](const Vec& x) { return 0.5 * (x - center).dot(a * (x - center)); };
    const auto score = [&](const Vec& x) -> Vec { return -a * (x - center); };
    std::vector<Vec> xs{testing::vec({4.0, 3.0})};
    double previous = potential(xs[0]);
    for (int s = 0; s < 50; ++s) {
      langevin_step(xs, ids(1), score, 0.05, StepRng::frozen_noise());
      const double now = potential(xs[0]);
      CHECK(now < previous);
      previous = now;
    }
  }

  TEST_CASE("ULA on a standard normal reaches the stationary moments") {
    const auto xs = ula_samples([](const Vec& x) -> Vec { return -x; }, 100, 50000, 1e-2, 1);
    const auto s = testing::mean_se(xs);
    CHECK(std::abs(s.mean) < 0.05);
    CHECK(std::abs(testing::variance(xs) - 1.0) < 0.1);
  }

  TEST_CASE("pooled ULA reaches the pooled Gaussian N(2, 1)") {
    // Prior N(0, 2), ξ = 1, σ² = 2, outcomes 2 and 6 with ν = (1/2, 1/2).
    const LinearGaussian1D model({1.0, std::sqrt(2.0), 0.0, std::sqrt(2.0), 2.0});
    const OutcomeMeasure rho({scalar(2.0), scalar(6.0)}, PoolingWeights::uniform(2));
    const auto xs = ula_samples(
        [&](const Vec& t) { return pooled_score(model, History{}, rho, scalar(1.0), t); }, 100, 50000, 1e-2, 2);
    CHECK(std::abs(testing::mean_se(xs).mean - 2.0) < 0.05);
    CHECK(std::abs(testing::variance(xs) - 1.0) < 0.1);
  }

  TEST_CASE("DiGS with vanishing noise and frozen randomness is the identity") {
    std::vector<Vec> xs{scalar(0.3), scalar(-1.7)};
    const auto target = mixture_target(GaussianMixture::isotropic(scalar(0.0), 1.0));
    digs_sweep(xs, ids(2), target, DigsConfig{1e-9, 5, 1e-20}, StepRng::frozen_noise());
    CHECK(xs[0][0] == doctest::Approx(0.3).epsilon(1e-8));
    CHECK(xs[1][0] == doctest::Approx(-1.7).epsilon(1e-8));
  }

  TEST_CASE("DiGS switches between well-separated modes where ULA cannot") {
    const GaussianMixture gm({{0.5, scalar(-4.0), scalar(0.5)}, {0.5, scalar(4.0), scalar(0.5)}});
    const auto target = mixture_target(gm);
    const std::size_t n = 500;
    std::vector<Vec> digs(n, scalar(-4.0));
    std::vector<Vec> ula(n, scalar(-4.0));
    const RngStreams rng(12);
    for (std::size_t s = 0; s < 200; ++s) {
      digs_sweep(digs, ids(n), target, DigsConfig{4.0, 20, 1e-2}, rng.step(Stream::digs, s));
      for (int k = 0; k < 21; ++k)
        langevin_step(ula, ids(n), target.score, 1e-2, rng.step(Stream::contrastive, s * 21 + static_cast<std::size_t>(k)));
    }
    const auto right = [](const std::vector<Vec>& xs) {
      double c = 0.0;
      for (const auto& x : xs) c += x[0] > 0.0 ? 1.0 : 0.0;
      return c / static_cast<double>(xs.size());
    };
    CHECK(right(digs) >= 0.2);
    CHECK(right(digs) <= 0.8);
    CHECK(right(ula) < 0.01);
  }

  TEST_CASE("DiGS leaves a standard normal invariant") {
    const auto target = mixture_target(GaussianMixture::isotropic(scalar(0.0), 1.0));
    const std::size_t n = 4000;
    auto xs = testing::normal_draws(n, 1, 77);
    const RngStreams rng(5);
    for (std::size_t s = 0; s < 50; ++s) digs_sweep(xs, ids(n), target, DigsConfig{}, rng.step(Stream::digs, s));
    const auto v = testing::first_coords(xs);
    CHECK(std::abs(testing::mean_se(v).mean) < 0.05);
    CHECK(std::abs(testing::variance(v) - 1.0) < 0.1);
  }

  TEST_CASE("effective sample size") {
    CHECK(ess(Vec::Constant(4, 0.25)) == doctest::Approx(4.0));
    CHECK(ess(testing::vec({0.0, 1.0, 0.0})) == doctest::Approx(1.0));
    CHECK(ess(testing::vec({0.5, 0.25, 0.25})) == doctest::Approx(1.0 / (0.25 + 0.0625 + 0.0625)));
    CHECK(ess(testing::vec({0.5, 0.25, 0.25})) == doctest::Approx(2.6667).epsilon(1e-4));
  }

  TEST_CASE("systematic resampling examples") {
    CounterRng rng(1);
    auto uniform = systematic_resample(Vec::Constant(6, 1.0 / 6.0), 6, rng);
    std::sort(uniform.begin(), uniform.end());
    CHECK(uniform == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});

    const Vec one_hot = testing::vec({0.0, 0.0, 0.0, 1.0, 0.0});
    CHECK(systematic_resample(one_hot, 5, rng) == std::vector<std::size_t>(5, 3));
    CHECK_THROWS_AS(systematic_resample(Vec::Zero(3), 3, rng), DegenerateWeightsError);

    const Vec w = testing::vec({0.5, 0.3, 0.2});
    Vec counts = Vec::Zero(3);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t)
      for (std::size_t a : systematic_resample(w, 10, rng)) counts[static_cast<Eigen::Index>(a)] += 1.0;
    counts /= trials;
    CHECK(counts[0] == doctest::Approx(5.0).epsilon(0.02));
    CHECK(std::abs(counts[1] - 3.0) < 0.1);
    CHECK(std::abs(counts[2] - 2.0) < 0.1);
  }

  TEST_CASE("systematic resampling preserves test-function means in expectation") {
    CounterRng rng(2);
    const std::size_t n = 20;
    Vec w(n);
    Vec f(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[static_cast<Eigen::Index>(i)] = rng.uniform() * rng.uniform();
      f[static_cast<Eigen::Index>(i)] = std::sin(static_cast<double>(i)) + 0.1 * static_cast<double>(i);
    }
    w /= w.sum();
    const double target = w.dot(f);
    std::vector<double> estimates;
    for (int t = 0; t < 10000; ++t) {
      double s = 0.0;
      for (std::size_t a : systematic_resample(w, n, rng)) s += f[static_cast<Eigen::Index>(a)];
      estimates.push_back(s / static_cast<double>(n));
    }
    const auto m = testing::mean_se(estimates);
    CHECK(std::abs(m.mean - target) <= 3.0 * m.se + 1e-12);
  }

  TEST_CASE("resampling keeps stream ids with their slots") {
    JointCloud cloud({scalar(1.0), scalar(2.0), scalar(3.0)}, {scalar(-1.0), scalar(-2.0), scalar(-3.0)}, 10);
    apply_ancestors(cloud, {2, 2, 0});
    CHECK(cloud.theta[0][0] == 3.0);
    CHECK(cloud.y[1][0] == -3.0);
    CHECK(cloud.theta[2][0] == 1.0);
    CHECK(cloud.stream_ids == std::vector<std::uint64_t>{10, 11, 12});
  }

  TEST_CASE("identical seeds give bit-identical clouds") {
    const SourceLocation src;
    const Vec xi = testing::vec({0.5, 0.1});
    const RngStreams rng(42);
    auto run = [&] {
      JointCloud cloud = sample_joint_prior(src, xi, 64, rng.step(Stream::prior_init, 0));
      for (std::size_t s = 0; s < 20; ++s) joint_langevin_step(cloud, src, History{}, xi, 1e-3, rng.step(Stream::joint, s));
      return cloud;
    };
    const JointCloud a = run();
    const JointCloud b = run();
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.theta[i] == b.theta[i]);
      CHECK(a.y[i] == b.y[i]);
    }
  }
}
