#include "codiff/diffusion.hpp"
#include "support.hpp"

using namespace codiff;
using testing::scalar;
using testing::vec;

namespace {

struct PassMoments {
  Vec mean;
  Vec var;
};

PassMoments weighted_moments(const WeightedSample& s) {
  const Eigen::Index d = s.particles.front().size();
  PassMoments m{Vec::Zero(d), Vec::Zero(d)};
  for (std::size_t j = 0; j < s.particles.size(); ++j) m.mean += s.weights[static_cast<Eigen::Index>(j)] * s.particles[j];
  for (std::size_t j = 0; j < s.particles.size(); ++j)
    m.var += s.weights[static_cast<Eigen::Index>(j)] * (s.particles[j] - m.mean).array().square().matrix();
  return m;
}

double normal_logpdf(double x, double mean, double var) {
  return -0.5 * (x - mean) * (x - mean) / var - 0.5 * std::log(2.0 * M_PI * var);
}

const VpSchedule kSched;

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("alpha_bar examples and monotonicity") {
    CHECK(alpha_bar(kSched, kSched.t0) == 1.0);
    const VpSchedule flat{1.0, 1.0, 0.0, 2.0, 200};
    CHECK(alpha_bar(flat, 2.0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
    CHECK(alpha_bar(flat, 2.0) == doctest::Approx(0.13534).epsilon(1e-4));
    CHECK(alpha_bar(kSched, kSched.horizon) == doctest::Approx(std::exp(-5.2)).epsilon(1e-12));
    CHECK(alpha_bar(kSched, kSched.horizon) == doctest::Approx(0.00552).epsilon(1e-3));
    double previous = 1.0;
    for (int k = 1; k <= kSched.n_steps; ++k) {
      const double ab = alpha_bar(kSched, kSched.grid_time(k));
      CHECK(ab < previous);
      CHECK(kSched.beta(kSched.grid_time(k)) > 0.0);
      previous = ab;
    }
    for (double ab : {0.9, 0.5, 0.01})
      CHECK(alpha_bar(kSched, kSched.time_for_alpha_bar(ab)) == doctest::Approx(ab).epsilon(1e-12));
    CHECK(kSched.backward_to_forward(0.0) == kSched.horizon);
    CHECK_THROWS_AS((VpSchedule{0.2, 5.0, 1.0, 1.0, 10}.validate()), ContractViolation);
  }

  TEST_CASE("forward and observation noising examples") {
    const double t = kSched.time_for_alpha_bar(0.25);
    CHECK(forward_noise(scalar(1.0), t, scalar(2.0), kSched)[0] == doctest::Approx(0.5 + std::sqrt(0.75) * 2.0));
    CHECK(forward_noise(scalar(1.0), t, scalar(2.0), kSched)[0] == doctest::Approx(2.2321).epsilon(1e-4));
    CHECK(forward_noise(scalar(1.3), kSched.t0, scalar(2.0), kSched)[0] == 1.3);
    const DiagonalObservation unit{scalar(1.0), 1.0};
    CHECK(noise_observation(scalar(2.0), t, scalar(1.0), unit, kSched)[0] == doctest::Approx(1.8660).epsilon(1e-4));
    CHECK(noise_observation(scalar(2.0), t, scalar(0.0), unit, kSched)[0] == doctest::Approx(1.0));
    CHECK(noise_observation(scalar(2.0), kSched.t0, scalar(1.0), unit, kSched)[0] == 2.0);
  }

  TEST_CASE("reverse Euler step example") {
    const VpSchedule flat{1.0, 1.0, 0.0, 2.0, 20};
    CounterRng frozen(0, true);
    CHECK(reverse_step_with_score(scalar(2.0), scalar(0.0), 1.0, 0.1, flat, frozen)[0] == doctest::Approx(2.1));
    CHECK_THROWS_AS(reverse_step_with_score(scalar(2.0), scalar(0.0), 1.0, 0.0, flat, frozen), ContractViolation);
  }

  TEST_CASE("Gaussian oracle matches the closed-form noised score") {
    const auto oracle = GaussianMixtureOracle::gaussian(vec({1.0, -2.0}), 0.7);
    CounterRng rng(3);
    for (int i = 0; i < 20; ++i) {
      const double ab = rng.uniform();
      const Vec x = 2.0 * rng.normal_vec(2);
      const double var = ab * 0.49 + 1.0 - ab;
      const Vec expected = -(x - std::sqrt(ab) * vec({1.0, -2.0})) / var;
      CHECK((oracle.score(x, ab) - expected).norm() < 1e-8);
      CHECK((oracle.hessian_diagonal(x, ab) + Vec::Constant(2, 1.0 / var)).norm() < 1e-8);
    }
  }

  TEST_CASE("mixture oracle matches finite differences of the noised density") {
    const GaussianMixture gm({{0.3, vec({-2.0, 0.5}), vec({0.5, 1.0})}, {0.7, vec({1.5, -1.0}), vec({0.8, 0.3})}});
    const GaussianMixtureOracle oracle(gm);
    CounterRng rng(4);
    for (int i = 0; i < 20; ++i) {
      const double ab = 0.05 + 0.9 * rng.uniform();
      const Vec x = 2.0 * rng.normal_vec(2);
      // Independent noised density: component means √ᾱ m, variances ᾱ s² + 1 − ᾱ.
      const auto log_p = [&](const Vec& z) {
        double total = 0.0;
        for (const auto& c : gm.components()) {
          double lp = std::log(c.weight);
          for (Eigen::Index d = 0; d < 2; ++d)
            lp += normal_logpdf(z[d], std::sqrt(ab) * c.mean[d], ab * c.sd[d] * c.sd[d] + 1.0 - ab);
          total += std::exp(lp);
        }
        return std::log(total);
      };
      CHECK(testing::rel_err(oracle.score(x, ab), testing::fd_gradient(log_p, x)) < 1e-6);
      const Vec v = rng.normal_vec(2);
      const double h = 1e-5;
      const Vec fd_hv = (oracle.score(x + h * v, ab) - oracle.score(x - h * v, ab)) / (2.0 * h);
      CHECK(testing::rel_err(oracle.hessian_vector(x, ab, v), fd_hv) < 1e-5);
    }
  }

  TEST_CASE("unconditional reverse pass preserves a standard normal") {
    const auto oracle = GaussianMixtureOracle::gaussian(scalar(0.0), 1.0);
    const auto s = unconditional_pass(oracle, kSched, 10000, RngStreams(11));
    const auto xs = testing::first_coords(s.particles);
    CHECK(std::abs(testing::mean_se(xs).mean) < 0.05);
    CHECK(std::abs(testing::variance(xs) - 1.0) < 0.1);
  }

  TEST_CASE("unconditional reverse pass reproduces mixture component frequencies") {
    const GaussianMixtureOracle oracle(GaussianMixture({{0.3, scalar(-3.0), scalar(0.5)}, {0.7, scalar(3.0), scalar(0.5)}}));
    const std::size_t n = 10000;
    const auto s = unconditional_pass(oracle, kSched, n, RngStreams(12));
    std::vector<double> right;
    for (const auto& x : s.particles) right.push_back(x[0] > 0.0 ? 1.0 : 0.0);
    const auto m = testing::mean_se(right);
    CHECK(std::abs(m.mean - 0.7) <= 3.0 * std::sqrt(0.7 * 0.3 / static_cast<double>(n)));
  }

  TEST_CASE("FPS likelihood score examples") {
    const DiagonalObservation unit{scalar(1.0), 1.0};
    const double t = kSched.time_for_alpha_bar(0.5);
    CHECK(fps_likelihood_score(scalar(0.7), scalar(0.7), t, unit, kSched)[0] == 0.0);
    CHECK(fps_likelihood_score(scalar(0.0), scalar(1.0), t, unit, kSched)[0] == doctest::Approx(2.0));
    const DiagonalObservation mask{vec({1.0, 0.0}), 1.0};
    const Vec s = fps_likelihood_score(vec({0.0, 0.0}), vec({1.0, 5.0}), t, mask, kSched);
    CHECK(s[1] == 0.0);
    CHECK(s[0] == doctest::Approx(2.0));
  }

  TEST_CASE("conditional reverse steps reduce to their special cases") {
    const auto oracle = GaussianMixtureOracle::gaussian(vec({0.0, 0.0}), 1.0);
    const Vec x = vec({0.4, -1.1});
    const double t = 1.3;
    const double dt = kSched.dt();
    const RngStreams rng(6);
    const auto step = [&](auto&& f) {
      CounterRng r = rng.stream(Stream::diffusion, 0, 0);
      return f(r);
    };
    const Vec plain = step([&](CounterRng& r) { return reverse_step(x, t, dt, oracle, kSched, r); });

    const DiagonalObservation vague{Vec::Ones(2), 1e9};
    const Vec y = vec({3.0, 3.0});
    CHECK((step([&](CounterRng& r) { return fps_conditional_reverse(x, t, dt, oracle, y, vague, kSched, r); }) - plain)
              .norm() < 1e-12);
    const DiagonalObservation blind{Vec::Zero(2), 1.0};
    CHECK((step([&](CounterRng& r) { return fps_conditional_reverse(x, t, dt, oracle, y, blind, kSched, r); }) - plain)
              .norm() == 0.0);

    const DiagonalObservation unit{Vec::Ones(2), 1.0};
    const Vec single = step([&](CounterRng& r) { return fps_conditional_reverse(x, t, dt, oracle, y, unit, kSched, r); });
    const Vec one = step([&](CounterRng& r) {
      return fps_pooled_reverse(x, t, dt, oracle, {y}, PoolingWeights::uniform(1), unit, kSched, r);
    });
    const Vec twins = step([&](CounterRng& r) {
      return fps_pooled_reverse(x, t, dt, oracle, {y, y, y}, PoolingWeights::uniform(3), unit, kSched, r);
    });
    CHECK((single - one).norm() < 1e-14);
    CHECK((single - twins).norm() < 1e-12);
  }

  TEST_CASE("Tweedie prediction special cases") {
    const auto std_normal = GaussianMixtureOracle::gaussian(scalar(0.0), 1.0);
    CHECK(tweedie_predict(scalar(1.7), kSched.t0, std_normal, kSched)[0] == doctest::Approx(1.7));
    for (double ab : {0.2, 0.5, 0.9}) {
      const double t = kSched.time_for_alpha_bar(ab);
      CHECK(tweedie_predict(scalar(1.7), t, std_normal, kSched)[0] == doctest::Approx(std::sqrt(ab) * 1.7).epsilon(1e-12));
    }
    const auto point = GaussianMixtureOracle::gaussian(scalar(2.5), 1e-3);
    const double t = kSched.time_for_alpha_bar(0.5);
    for (double x : {-3.0, 0.0, 4.0}) CHECK(std::abs(tweedie_predict(scalar(x), t, point, kSched)[0] - 2.5) < 1e-2);
  }

  TEST_CASE("Tweedie prediction matches importance sampling from the prior") {
    const GaussianMixture gm({{0.4, scalar(-1.5), scalar(0.6)}, {0.6, scalar(2.0), scalar(0.9)}});
    const GaussianMixtureOracle oracle(gm);
    CounterRng rng(21);
    std::vector<double> prior(100000);
    for (auto& p : prior) p = gm.sample(rng)[0];
    for (double ab : {0.3, 0.7}) {
      const double t = kSched.time_for_alpha_bar(ab);
      for (double x : {-1.0, 0.4, 1.8}) {
        // E[θ0 | θ_t = x] with θ0 ~ prior, weights N(x; √ᾱ θ0, 1 − ᾱ).
        std::vector<double> lw(prior.size());
        double mx = -INFINITY;
        for (std::size_t i = 0; i < prior.size(); ++i) {
          lw[i] = normal_logpdf(x, std::sqrt(ab) * prior[i], 1.0 - ab);
          mx = std::max(mx, lw[i]);
        }
        double sw = 0.0, sw2 = 0.0, swx = 0.0;
        for (std::size_t i = 0; i < prior.size(); ++i) {
          const double w = std::exp(lw[i] - mx);
          sw += w;
          sw2 += w * w;
          swx += w * prior[i];
        }
        const double est = swx / sw;
        double var_num = 0.0;
        for (std::size_t i = 0; i < prior.size(); ++i) {
          const double w = std::exp(lw[i] - mx) / sw;
          var_num += w * w * (prior[i] - est) * (prior[i] - est);
        }
        const double se = std::sqrt(var_num);
        CHECK(std::abs(tweedie_predict(scalar(x), t, oracle, kSched)[0] - est) <= 3.0 * se);
      }
    }
  }

  TEST_CASE("FPS resampling weights") {
    const DiagonalObservation unit{scalar(1.0), 1.0};
    const double t = kSched.time_for_alpha_bar(0.5);
    const std::vector<Vec> same(4, scalar(0.3));
    const Vec uniform = fps_resample_weights(same, {scalar(1.0)}, PoolingWeights::uniform(1), unit, kSched, t);
    CHECK((uniform.array() - 0.25).abs().maxCoeff() < 1e-15);

    const Vec dominant =
        fps_resample_weights({scalar(1.0), scalar(40.0)}, {scalar(1.0)}, PoolingWeights::uniform(1), unit, kSched, t);
    CHECK(dominant[0] == doctest::Approx(1.0));
    CHECK(dominant[1] < 1e-100);

    const double var = 0.5;
    const double p0 = std::exp(normal_logpdf(0.8, 0.2, var)) * std::exp(normal_logpdf(-0.4, 0.2, var));
    const double p1 = std::exp(normal_logpdf(0.8, -0.9, var)) * std::exp(normal_logpdf(-0.4, -0.9, var));
    const Vec w = fps_resample_weights({scalar(0.2), scalar(-0.9)}, {scalar(0.8), scalar(-0.4)},
                                       PoolingWeights::uniform(2), unit, kSched, t);
    CHECK(w[0] == doctest::Approx(std::sqrt(p0) / (std::sqrt(p0) + std::sqrt(p1))).epsilon(1e-12));
  }

  TEST_CASE("twisted conditional pass matches conjugate posteriors across noise levels and masks") {
    const auto oracle = GaussianMixtureOracle::gaussian(vec({0.0, 0.0}), 1.0);
    const Vec y = vec({1.5, -0.8});
    PassConfig cfg;
    cfg.particles = 4000;
    std::uint64_t seed = 30;
    for (double sigma : {0.25, 1.0, 4.0}) {
      for (const Vec& a : {vec({1.0, 1.0}), vec({1.0, 0.0})}) {
        const auto s = conditional_pass(oracle, DiagonalObservation{a, sigma}, {y}, PoolingWeights::uniform(1), kSched,
                                        cfg, RngStreams(seed++));
        const PassMoments m = weighted_moments(s);
        for (Eigen::Index d = 0; d < 2; ++d) {
          const double precision = 1.0 + a[d] * a[d] / (sigma * sigma);
          const double mean = a[d] * y[d] / (sigma * sigma) / precision;
          CAPTURE(sigma);
          CAPTURE(d);
          CHECK(std::abs(m.mean[d] - mean) < 0.05);
          CHECK(std::abs(m.var[d] / (1.0 / precision) - 1.0) < 0.1);
        }
      }
    }
  }

  TEST_CASE("twisted pooled pass matches the precision-weighted pooled Gaussian") {
    const auto oracle = GaussianMixtureOracle::gaussian(scalar(0.0), 1.0);
    PassConfig cfg;
    cfg.particles = 10000;
    const auto s = conditional_pass(oracle, DiagonalObservation{scalar(1.0), 1.0}, {scalar(0.0), scalar(4.0)},
                                    PoolingWeights::uniform(2), kSched, cfg, RngStreams(41));
    const PassMoments m = weighted_moments(s);
    CHECK(std::abs(m.mean[0] - 1.0) < 0.05);
    CHECK(std::abs(m.var[0] - 0.5) < 0.05);
  }

  TEST_CASE("literal FPS pass with an uninformative observation samples the prior") {
    const auto oracle = GaussianMixtureOracle::gaussian(scalar(0.5), 1.0);
    PassConfig cfg;
    cfg.particles = 10000;
    cfg.method = ConditionalMethod::fps;
    const auto s = conditional_pass(oracle, DiagonalObservation{scalar(1.0), 1e6}, {scalar(2.0)},
                                    PoolingWeights::uniform(1), kSched, cfg, RngStreams(42));
    const auto xs = testing::first_coords(s.particles);
    CHECK(std::abs(testing::mean_se(xs).mean - 0.5) < 0.05);
    CHECK(std::abs(testing::variance(xs) - 1.0) < 0.1);
    CHECK(s.resample_count == 0);
  }

  TEST_CASE("resampled FPS triggers on informative observations") {
    const auto oracle = GaussianMixtureOracle::gaussian(scalar(0.0), 1.0);
    PassConfig cfg;
    cfg.particles = 2000;
    cfg.method = ConditionalMethod::fps_resampled;
    const auto s = conditional_pass(oracle, DiagonalObservation{scalar(1.0), 1.0}, {scalar(2.0)},
                                    PoolingWeights::uniform(1), kSched, cfg, RngStreams(43));
    CHECK(s.resample_count > 0);
    CHECK(s.weights.sum() == doctest::Approx(1.0));
  }

  TEST_CASE("conditional passes are deterministic for a fixed seed") {
    const auto oracle = GaussianMixtureOracle::gaussian(scalar(0.0), 1.0);
    PassConfig cfg;
    cfg.particles = 500;
    for (auto method : {ConditionalMethod::fps, ConditionalMethod::fps_resampled, ConditionalMethod::twisted}) {
      cfg.method = method;
      const auto run = [&] {
        return conditional_pass(oracle, DiagonalObservation{scalar(1.0), 0.5}, {scalar(1.0)}, PoolingWeights::uniform(1),
                                kSched, cfg, RngStreams(44));
      };
      const auto a = run();
      const auto b = run();
      CHECK(a.particles == b.particles);
      CHECK(a.weights == b.weights);
    }
    CHECK_THROWS_AS(conditional_pass(oracle, DiagonalObservation{scalar(1.0), 0.0}, {scalar(1.0)},
                                     PoolingWeights::uniform(1), kSched, cfg, RngStreams(1)),
                    ContractViolation);
  }
}
