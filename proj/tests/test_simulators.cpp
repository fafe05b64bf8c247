#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "emucal/simulators.hpp"

using namespace emucal;

TEST_CASE("bivariate toy closed-form values") {
  const ToyConstants c;
  const OutputSeries z = simulate_bivariate({10.0, 10.0}, c, 10);
  CHECK(z.time_steps == 10);
  CHECK(z.features == 1);
  // t = 5: phi (10 - 5 - 5) = 0 on both factors
  CHECK(z.at(4, 0) == doctest::Approx(1.0).epsilon(1e-15));
  // t = 1: cos(0.4)^2
  CHECK(z.at(0, 0) == doctest::Approx(0.8483533546735827).epsilon(1e-12));

  const OutputSeries z0 = simulate_bivariate({0.0, 0.0}, c, 1);
  CHECK(z0.at(0, 0) == doctest::Approx(0.6811788772383368).epsilon(1e-12));
}

TEST_CASE("bivariate toy symmetry, bounds and purity") {
  const ToyConstants c;
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = rng.uniform(0, 15), b = rng.uniform(0, 15);
    const OutputSeries z1 = simulate_bivariate({a, b}, c, 10);
    const OutputSeries z2 = simulate_bivariate({b, a}, c, 10);
    CHECK(z1.values == z2.values);
    for (double v : z1.values) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
    const OutputSeries z3 = simulate_bivariate({a, b}, c, 10);
    CHECK(z1.values == z3.values);
  }
  CHECK_THROWS_AS(simulate_bivariate({1.0}, c, 10), DimensionError);
}

TEST_CASE("multifeature stand-in closed-form values") {
  ParamVector zero(8, 0.0);
  SUBCASE("both terms vanish") {
    ParamVector theta = zero;
    theta[6] = 1.7;  // phase alone cannot create output
    const OutputSeries z = simulate_multifeature(theta, 10);
    for (double v : z.values) CHECK(v == 0.0);
  }
  SUBCASE("pure decay term") {
    ParamVector theta = zero;
    theta[0] = 1.0;
    const OutputSeries z = simulate_multifeature(theta, 10);
    CHECK(z.at(0, 0) == doctest::Approx(std::exp(-0.1)).epsilon(1e-14));
    CHECK(z.at(0, 1) == 0.0);
  }
  SUBCASE("pure oscillation term") {
    ParamVector theta = zero;
    theta[7] = 1.0;
    const OutputSeries z = simulate_multifeature(theta, 10);
    CHECK(z.at(0, 1) == doctest::Approx(0.3 * std::cos(0.3)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(simulate_multifeature({1.0, 2.0}, 10), DimensionError);
}

TEST_CASE("multifeature sensitivity matches analytic partials") {
  ParamVector theta{1.21, 0.3, 3.0, 0.26, 0.64, 1.0, 0.8, 1.2};
  const double h = 1e-6;
  const int t_steps = 10;
  for (int j : {0, 3, 6, 7}) {
    ParamVector up = theta, down = theta;
    up[j] += h;
    down[j] -= h;
    const OutputSeries zu = simulate_multifeature(up, t_steps);
    const OutputSeries zd = simulate_multifeature(down, t_steps);
    for (int t = 1; t <= t_steps; ++t) {
      for (int m = 1; m <= 6; ++m) {
        const double fd = (zu.at(t - 1, m - 1) - zd.at(t - 1, m - 1)) / (2 * h);
        double an = 0.0;
        const double omega = 0.2 + 0.05 * m;
        if (j < 6)
          an = (j == m - 1) ? std::exp(-0.1 * m * t) : 0.0;
        else if (j == 6)
          an = -0.3 * theta[7] * std::sin(omega * t + theta[6]);
        else
          an = 0.3 * std::cos(omega * t + theta[6]);
        if (std::abs(an) > 1e-8) CHECK(fd == doctest::Approx(an).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("make_observation noise scale and determinism") {
  OutputSeries z(4, 1);
  for (int t = 0; t < 4; ++t) z.at(t, 0) = (t % 2 == 0) ? 2.0 : -2.0;
  Rng rng1(7), rng2(7);
  const ObservedData a = make_observation(z, 0.05, rng1);
  const ObservedData b = make_observation(z, 0.05, rng2);
  for (int t = 0; t < 4; ++t) CHECK(a.noise_sigma.at(t, 0) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(a.data.values == b.data.values);

  // sigma from the toy series at the ground truth
  const OutputSeries toy = simulate_bivariate({10.0, 10.0}, ToyConstants{}, 10);
  double mean_abs = 0.0;
  for (double v : toy.values) mean_abs += std::abs(v);
  mean_abs /= 10.0;
  Rng rng3(9);
  const ObservedData obs = make_observation(toy, 0.05, rng3);
  CHECK(obs.noise_sigma.at(0, 0) == doctest::Approx(0.05 * mean_abs).epsilon(1e-12));

  OutputSeries degenerate(3, 2);  // second feature all zero
  for (int t = 0; t < 3; ++t) degenerate.at(t, 0) = 1.0;
  Rng rng4(1);
  CHECK_THROWS_AS(make_observation(degenerate, 0.05, rng4), ValueError);
  Rng rng5(1);
  CHECK_THROWS_AS(make_observation(z, 0.0, rng5), ValueError);
}

TEST_CASE("timed_call sleeps at least the configured delay") {
  const Simulator fast = make_simulator("toy", 10, 0.0);
  const auto [z0, t0] = timed_call(fast, {10.0, 10.0});
  CHECK(z0.time_steps == 10);
  CHECK(t0 >= 0.0);
  CHECK(t0 < 0.05);

  const Simulator slow = make_simulator("toy", 10, 0.01);
  const auto [z1, t1] = timed_call(slow, {10.0, 10.0});
  CHECK(t1 >= 0.01);

  double total = 0.0;
  for (int i = 0; i < 20; ++i) total += timed_call(slow, {10.0, 10.0}).second;
  CHECK(total >= 0.2);
}

TEST_CASE("simulator factory") {
  const Simulator toy = make_simulator("toy", 10, 0.0);
  CHECK(toy.spec().inputs == 2);
  CHECK(toy.spec().features == 1);
  const Simulator standin = make_simulator("standin", 10, 0.0);
  CHECK(standin.spec().inputs == 8);
  CHECK(standin.spec().features == 6);
  CHECK_THROWS_AS(make_simulator("blackoil", 10, 0.0), UnsupportedError);
}
