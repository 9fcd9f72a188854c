#include <cmath>

#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/quad.hpp"
#include "doctest.h"

using namespace brw;

TEST_CASE("adaptive quadrature integrates smooth functions to tight tolerance") {
  const double third = integrate([](double x) { return x * x; }, 0.0, 1.0);
  CHECK(third == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

  const double gauss = integrate(
      [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }, -8.0, 8.0);
  CHECK(gauss == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("semi-infinite integration handles exponential tails") {
  const double one = integrate_to_inf([](double x) { return std::exp(-x); }, 0.0);
  CHECK(one == doctest::Approx(1.0).epsilon(1e-12));

  const double mean = integrate_to_inf([](double x) { return x * std::exp(-x); }, 0.0);
  CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tanh-sinh quadrature resolves endpoint singularities") {
  // integral over [0,1] of (1-s)^(-2/3) ds = 3 exactly.
  const double val = integrate_tanh_sinh(
      [](double, double, double dist_b) { return std::pow(dist_b, -2.0 / 3.0); }, 0.0, 1.0);
  CHECK(std::abs(val - 3.0) < 1e-12);

  // integral over [0,1] of s^(-1/2) ds = 2 exactly.
  const double two = integrate_tanh_sinh(
      [](double, double dist_a, double) { return 1.0 / std::sqrt(dist_a); }, 0.0, 1.0);
  CHECK(std::abs(two - 2.0) < 1e-12);
}

TEST_CASE("bracketed root solver reaches machine precision") {
  const double root = solve_bracketed([](double x) { return std::cos(x); }, 1.0, 2.0);
  CHECK(root == doctest::Approx(kPi / 2.0).epsilon(1e-14));

  const double cube = solve_bracketed([](double x) { return x * x * x - 2.0; }, 1.0, 2.0);
  CHECK(cube == doctest::Approx(std::cbrt(2.0)).epsilon(1e-14));
}

TEST_CASE("bracketed root solver rejects brackets without a sign change") {
  CHECK_THROWS_AS(solve_bracketed([](double x) { return x * x + 1.0; }, -1.0, 1.0),
                  ConfigError);
}

TEST_CASE("moment accumulator merge matches a single-pass accumulation") {
  MomentAccumulator all, left, right;
  for (int i = 0; i < 1000; ++i) {
    const double x = std::sin(0.1 * i) + 0.01 * i;
    all.add(x);
    (i < 400 ? left : right).add(x);
  }
  left.merge(right);
  CHECK(left.count() == all.count());
  CHECK(left.mean() == doctest::Approx(all.mean()).epsilon(1e-13));
  CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
  CHECK(left.se_variance() == doctest::Approx(all.se_variance()).epsilon(1e-10));
}
