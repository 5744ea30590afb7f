#include "codiff/gradients.hpp"
#include "codiff/models.hpp"
#include "support.hpp"

using namespace codiff;
using testing::scalar;

namespace {

const LinearGaussian1D kLg;

struct Draws {
  std::vector<double> pooled;
  std::vector<double> nested;
  std::vector<double> prior_is;
};

Draws replicate(double xi, std::size_t n, std::size_t m, std::size_t reps, std::uint64_t seed) {
  Draws d;
  const History hist;
  const RngStreams root(seed);
  for (std::size_t r = 0; r < reps; ++r) {
    const JointCloud joint = conjugate::sample_joint(kLg, hist, xi, n, root.step(Stream::joint, r));
    const auto nu = PoolingWeights::uniform(n);
    const ContrastiveCloud pooled =
        conjugate::sample_pooled(kLg, hist, xi, joint, nu, m, root.step(Stream::contrastive, r));
    d.pooled.push_back(grad_pooled_snis(kLg, scalar(xi), joint, pooled, nu).grad[0]);

    std::vector<ContrastiveCloud> inner;
    for (std::size_t i = 0; i < n; ++i)
      inner.push_back(conjugate::sample_posterior(kLg, hist, xi, joint.y[i][0], m,
                                                  root.derive(i).step(Stream::inner, r)));
    d.nested.push_back(grad_nested_mc(kLg, scalar(xi), joint, inner).grad[0]);

    std::vector<Vec> prior;
    CounterRng pr = root.stream(Stream::prior_init, r, 0);
    for (std::size_t j = 0; j < m; ++j) prior.push_back(kLg.sample_prior(pr));
    d.prior_is.push_back(grad_prior_is(kLg, scalar(xi), joint, ContrastiveCloud(prior)).grad[0]);
  }
  return d;
}

// Independent brute-force nested Monte Carlo EIG for y = ξθ + u with θ, u ~ N(0, 1).
double brute_force_eig(double xi, std::size_t outer, std::size_t inner, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> contrast(inner);
  for (auto& t : contrast) t = rng.normal();
  long double total = 0.0L;
  for (std::size_t i = 0; i < outer; ++i) {
    const double theta = rng.normal();
    const double u = rng.normal();
    const double y = xi * theta + u;
    double mx = -INFINITY;
    std::vector<double> lw(inner);
    for (std::size_t j = 0; j < inner; ++j) {
      const double r = y - xi * contrast[j];
      lw[j] = -0.5 * r * r;
      mx = std::max(mx, lw[j]);
    }
    double s = 0.0;
    for (double v : lw) s += std::exp(v - mx);
    total += -0.5 * u * u - (mx + std::log(s / static_cast<double>(inner)));
  }
  return static_cast<double>(total / static_cast<long double>(outer));
}

}  // namespace

TEST_SUITE("gradients") {
  TEST_CASE("closed-form conjugate EIG and gradient") {
    const auto at0 = analytic_linear_gaussian(0.0, 1.0);
    CHECK(at0.eig == 0.0);
    CHECK(at0.grad == 0.0);
    const auto at1 = analytic_linear_gaussian(1.0, 1.0);
    CHECK(at1.eig == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
    CHECK(at1.eig == doctest::Approx(0.34657).epsilon(1e-5));
    CHECK(at1.grad == doctest::Approx(0.5).epsilon(1e-14));
    const auto at2 = analytic_linear_gaussian(2.0, 1.0);
    CHECK(at2.eig == doctest::Approx(0.80472).epsilon(1e-5));
    CHECK(at2.grad == doctest::Approx(0.4).epsilon(1e-14));
    for (double xi : {-1.3, 0.2, 0.7, 3.1}) {
      const double h = 1e-5;
      const double fd = (analytic_linear_gaussian(xi + h, 0.8, 1.5).eig - analytic_linear_gaussian(xi - h, 0.8, 1.5).eig) /
                        (2.0 * h);
      CHECK(analytic_linear_gaussian(xi, 0.8, 1.5).grad == doctest::Approx(fd).epsilon(1e-7));
    }
  }

  TEST_CASE("brute-force nested Monte Carlo agrees with the closed-form EIG") {
    for (double xi : {1.0, 2.0}) {
      const double nmc = brute_force_eig(xi, 100000, 200, 77);
      CHECK(nmc == doctest::Approx(analytic_linear_gaussian(xi, 1.0).eig).epsilon(0.02));
    }
  }

  TEST_CASE("gamma is zero when every contrastive particle is the joint particle") {
    const std::vector<Vec> thetas(5, scalar(0.7));
    std::vector<Vec> ys;
    for (double y : {-1.0, 0.2, 0.5, 1.1, 2.3}) ys.push_back(scalar(y));
    const JointCloud joint(thetas, ys);
    const ContrastiveCloud same({scalar(0.7)});
    const auto w = snis_weights(kLg, scalar(1.3), ys, same.theta, PoolingWeights::uniform(5));
    CHECK(std::abs(gamma(kLg, scalar(1.3), joint, same, w).grad[0]) < 1e-14);
    CHECK(std::abs(grad_pooled_snis(kLg, scalar(1.3), joint, same, PoolingWeights::uniform(5)).grad[0]) < 1e-14);

    std::vector<ContrastiveCloud> inner;
    for (std::size_t i = 0; i < 5; ++i) inner.push_back(ContrastiveCloud({thetas[i]}));
    CHECK(std::abs(grad_nested_mc(kLg, scalar(1.3), joint, inner).grad[0]) < 1e-14);
    CHECK_THROWS_AS(grad_nested_mc(kLg, scalar(1.3), joint, {ContrastiveCloud{}, ContrastiveCloud{}}), ContractViolation);
  }

  TEST_CASE("estimators are unbiased at zero design by symmetry") {
    const Draws d = replicate(0.0, 128, 128, 100, 2024);
    for (const auto* xs : {&d.pooled, &d.nested, &d.prior_is}) {
      const auto s = testing::mean_se(*xs);
      CHECK(std::abs(s.mean) <= 3.0 * s.se + 1e-12);
    }
  }

  TEST_CASE("nested estimator with exact posteriors is unbiased at xi = 1") {
    const Draws d = replicate(1.0, 256, 256, 100, 99);
    const auto nested = testing::mean_se(d.nested);
    CHECK(std::abs(nested.mean - 0.5) <= 3.0 * nested.se);
  }

  TEST_CASE("pooled and nested estimators agree in expectation") {
    const Draws d = replicate(0.5, 256, 256, 100, 7);
    const auto pooled = testing::mean_se(d.pooled);
    const auto nested = testing::mean_se(d.nested);
    CHECK(std::abs(pooled.mean - nested.mean) <= 3.0 * (pooled.se + nested.se));
  }

  TEST_CASE("pooled SNIS bias shrinks as the contrastive cloud grows") {
    // At ξ = 2 the per-outcome posteriors are narrow relative to the pool, so the O(1/M) SNIS bias is visible.
    const Draws small = replicate(2.0, 64, 256, 60, 5);
    const Draws large = replicate(2.0, 64, 4096, 60, 5);
    const double bias_small = testing::mean_se(small.pooled).mean - 0.4;
    const double bias_large = testing::mean_se(large.pooled).mean - 0.4;
    CHECK(bias_small > 0.0);
    CHECK(std::abs(bias_large) < bias_small);
  }

  TEST_CASE("prior-contrastive ratio estimator with a large contrastive cloud") {
    const Draws d = replicate(1.0, 64, 4096, 100, 31);
    const auto s = testing::mean_se(d.prior_is);
    CHECK(std::abs(s.mean - 0.5) <= 3.0 * s.se);
  }

  TEST_CASE("prior-contrastive estimator collapses to the single-atom formulas") {
    const RngStreams root(3);
    const JointCloud joint = conjugate::sample_joint(kLg, History{}, 1.2, 16, root.step(Stream::joint, 0));
    const Vec xi = scalar(1.2);
    const Vec atom = scalar(-0.4);
    double expected = 0.0;
    for (std::size_t i = 0; i < joint.size(); ++i)
      expected += g_score(kLg, Design(xi), joint.y[i], joint.theta[i], joint.theta[i])[0] -
                  g_score(kLg, Design(xi), joint.y[i], joint.theta[i], atom)[0];
    expected /= static_cast<double>(joint.size());
    CHECK(grad_prior_is(kLg, xi, joint, ContrastiveCloud({atom})).grad[0] == doctest::Approx(expected).epsilon(1e-12));

    std::vector<ContrastiveCloud> inner(joint.size(), ContrastiveCloud({atom}));
    CHECK(grad_prior_is(kLg, xi, joint, ContrastiveCloud({atom})).grad[0] ==
          doctest::Approx(grad_nested_mc(kLg, xi, joint, inner).grad[0]).epsilon(1e-12));
  }

  TEST_CASE("additive noise: the estimate is minus the weighted contrastive mean") {
    const RngStreams root(8);
    const Vec xi = scalar(0.8);
    const JointCloud joint = conjugate::sample_joint(kLg, History{}, 0.8, 20, root.step(Stream::joint, 0));
    const auto nu = PoolingWeights::uniform(20);
    const ContrastiveCloud c = conjugate::sample_pooled(kLg, History{}, 0.8, joint, nu, 30, root.step(Stream::contrastive, 0));
    const WeightMatrix w = snis_weights(kLg, xi, joint.y, c.theta, nu);
    double expected = 0.0;
    for (std::size_t i = 0; i < joint.size(); ++i) {
      CHECK(g_score(kLg, Design(xi), joint.y[i], joint.theta[i], joint.theta[i])[0] == 0.0);
      for (std::size_t j = 0; j < c.size(); ++j)
        expected -= w.w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
                    g_score(kLg, Design(xi), joint.y[i], joint.theta[i], c.theta[j])[0];
    }
    expected /= static_cast<double>(joint.size());
    const auto est = gamma(kLg, xi, joint, c, w);
    CHECK(est.grad[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(est.n_joint == 20);
    CHECK(est.n_contrastive == 30);
    CHECK(est.ess_min == doctest::Approx(w.ess_min()));
  }

  TEST_CASE("duplicating every joint particle leaves gamma unchanged") {
    const SourceLocation src;
    const RngStreams root(10);
    const Vec xi = testing::vec({0.3, -0.2});
    const JointCloud joint = sample_joint_prior(src, xi, 12, root.step(Stream::joint, 0));
    const ContrastiveCloud c = sample_contrastive_prior(src, 15, root.step(Stream::contrastive, 0));
    JointCloud doubled = joint;
    doubled.theta.insert(doubled.theta.end(), joint.theta.begin(), joint.theta.end());
    doubled.y.insert(doubled.y.end(), joint.y.begin(), joint.y.end());
    doubled.stream_ids.insert(doubled.stream_ids.end(), joint.stream_ids.begin(), joint.stream_ids.end());
    const Mat log_w = log_likelihood_matrix(src, xi, joint.y, c.theta);
    Mat log_w2(24, 15);
    log_w2 << log_w, log_w;
    const auto a = gamma(src, xi, joint, c, normalize_rows(log_w, DegenerateRowPolicy::raise));
    const auto b = gamma(src, xi, doubled, c, normalize_rows(log_w2, DegenerateRowPolicy::raise));
    CHECK((a.grad - b.grad).norm() <= 1e-12 * (1.0 + a.grad.norm()));
  }

  TEST_CASE("degenerate rows are flagged under the fallback policy and raise otherwise") {
    const JointCloud joint({scalar(0.1), scalar(0.2)}, {scalar(0.3), scalar(-0.5)});
    const ContrastiveCloud c({scalar(0.0), scalar(1.0), scalar(-1.0)});
    Mat log_w(2, 3);
    log_w << 0.0, -1.0, -2.0, -INFINITY, -INFINITY, -INFINITY;
    const auto est = gamma(kLg, scalar(1.0), joint, c, normalize_rows(log_w, DegenerateRowPolicy::uniform_fallback));
    CHECK(est.fallback_used());
    CHECK(est.degenerate_rows == 1);
    CHECK(est.finite());

    const SourceLocation src;
    const JointCloud bad({Vec::Zero(4)}, {scalar(-1.0)});
    CHECK_THROWS_AS(grad_prior_is(src, Vec::Zero(2), bad, ContrastiveCloud({Vec::Ones(4)})), DegenerateWeightsError);
  }
}
