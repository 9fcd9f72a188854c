#include <cmath>
#include <cstdint>
#include <vector>

#include "brw/corridor.hpp"
#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/tail.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace brw;
using namespace brw::corridor;

namespace {

CorridorSpec pm1_unit_band() {
  CorridorSpec spec;
  spec.band = make_constant_band(-1.0, 1.0);
  spec.walk = make_finite_walk({-1.0, 1.0}, {0.5, 0.5});
  return spec;
}

}  // namespace

TEST_CASE("unit-band survival of the +-1 walk has closed-form values") {
  CorridorSpec spec = pm1_unit_band();
  validate(spec);
  // For n <= 6 the discretised band holds states {-1, 0, 1}: the walk must
  // return to 0 every second step, so p_n = 2^{-n/2}.
  CHECK(dp_corridor(spec, 2).estimate == doctest::Approx(0.5).epsilon(1e-13));
  CHECK(dp_corridor(spec, 4).estimate == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(dp_corridor(spec, 6).estimate == doctest::Approx(0.125).epsilon(1e-13));
  for (std::uint64_t n : {2ULL, 4ULL, 6ULL}) {
    CHECK(dp_corridor(spec, n).estimate ==
          doctest::Approx(test_oracles::enumerate_corridor(spec, n)).epsilon(1e-13));
  }
}

TEST_CASE("transfer-matrix DP matches exhaustive path enumeration") {
  std::vector<CorridorSpec> specs;

  {
    CorridorSpec s = pm1_unit_band();
    s.band = make_constant_band(-2.2, 2.2);
    specs.push_back(s);
  }
  {
    CorridorSpec s;
    s.band = make_piecewise_band({0.0, 0.5, 1.0}, {-1.0, -0.5, -1.0}, {1.0, 1.5, 1.0});
    s.walk = make_lattice_walk(std::acosh(2.0));
    s.mark = MarkRule{MarkRule::Kind::BoundedUniform, 2.0, 0.0};
    s.threshold = ThresholdRule{ThresholdRule::Kind::Constant, 1.5};
    specs.push_back(s);
  }
  {
    CorridorSpec s = pm1_unit_band();
    s.band = make_constant_band(-1.8, 1.8);
    s.mark = MarkRule{MarkRule::Kind::TwoPoint, 0.0, 0.7};
    s.threshold = ThresholdRule{ThresholdRule::Kind::Horizon};
    specs.push_back(s);
  }
  {
    CorridorSpec s = pm1_unit_band();
    s.band = make_constant_band(-2.0, 2.0);
    s.has_endpoint_window = true;
    s.y_lo = -0.5;
    s.y_hi = 0.5;
    specs.push_back(s);
  }

  for (std::size_t i = 0; i < specs.size(); ++i) {
    validate(specs[i]);
    for (std::uint64_t n : {4ULL, 7ULL, 10ULL, 12ULL}) {
      const double dp = dp_corridor(specs[i], n).estimate;
      const double brute = test_oracles::enumerate_corridor(specs[i], n);
      INFO("spec " << i << " n " << n);
      CHECK(std::abs(dp - brute) <= 1e-12);
    }
  }
}

TEST_CASE("off-centre starts snap to the intended lattice state") {
  CorridorSpec spec = pm1_unit_band();
  spec.band = make_constant_band(-1.5, 1.5);
  spec.scaling = ScalingRule{ScalingRule::Kind::Table, {{6, 2.0}}};
  validate(spec);
  // z = 0.5 in a_n units with a_6 = 2 starts the walk at lattice state +1.
  const double dp = dp_corridor(spec, 6, 0.5).estimate;
  const double brute = test_oracles::enumerate_corridor(spec, 6, 0.5);
  CHECK(std::abs(dp - brute) <= 1e-12);
  // A start at the band edge (z = 1 is absolute position 2 of reach 3)
  // survives strictly less often than a centred one.
  CHECK(dp_corridor(spec, 6, 1.0).estimate < dp_corridor(spec, 6, 0.0).estimate);
  CHECK(std::abs(dp_corridor(spec, 6, 1.0).estimate -
                 test_oracles::enumerate_corridor(spec, 6, 1.0)) <= 1e-12);
}

TEST_CASE("Monte Carlo and DP agree within statistical error") {
  CorridorSpec spec;
  spec.band = make_constant_band(-1.5, 1.5);
  spec.walk = make_lattice_walk(std::acosh(2.0));
  spec.mark = MarkRule{MarkRule::Kind::BoundedUniform, 1.0, 0.0};
  spec.threshold = ThresholdRule{ThresholdRule::Kind::Constant, 0.9};
  validate(spec);
  const std::uint64_t n = 16;
  const double exact = dp_corridor(spec, n).estimate;
  const EstimateReport mc = mc_corridor(spec, n, 40000, 4);
  CHECK_FALSE(mc.exact);
  CHECK(mc.se > 0.0);
  CHECK(std::abs(mc.estimate - exact) < 4.0 * mc.se);

  const EstimateReport t3 = mc_corridor(spec, n, 40000, 4, 3);
  CHECK(t3.estimate == mc.estimate);  // thread count cannot move the result
}

TEST_CASE("two-point marks factor out of the corridor probability exactly") {
  CorridorSpec plain = pm1_unit_band();
  plain.band = make_constant_band(-2.0, 2.0);

  CorridorSpec marked = plain;
  marked.mark = MarkRule{MarkRule::Kind::TwoPoint, 0.0, 1.0};
  marked.threshold = ThresholdRule{ThresholdRule::Kind::Horizon};

  const std::uint64_t n = 10;
  const double a = plain.scaling.a(n);
  const double lp0 = dp_corridor(plain, n).log_estimate;
  const double lp1 = dp_corridor(marked, n).log_estimate;
  // Marks are independent of the walk: log p(c) = log p(0) + n log(1 - c/a^2).
  CHECK(lp1 == doctest::Approx(lp0 + 10.0 * std::log1p(-1.0 / (a * a))).epsilon(1e-12));

  // c = 0 short-circuits: DP and MC results are bit-identical to no marks.
  CorridorSpec zero = plain;
  zero.mark = MarkRule{MarkRule::Kind::TwoPoint, 0.0, 0.0};
  zero.threshold = ThresholdRule{ThresholdRule::Kind::Horizon};
  CHECK(dp_corridor(zero, n).estimate == dp_corridor(plain, n).estimate);
  CHECK(mc_corridor(zero, n, 20000, 8).estimate == mc_corridor(plain, n, 20000, 8).estimate);
}

TEST_CASE("limit exponent quadrature reproduces closed forms") {
  // Constant width w: -(pi^2 sigma2 / 2) / w^2.
  const Band unit = make_constant_band(-1.0, 1.0);
  CHECK(mogulskii_exponent(unit, 1.0) == doctest::Approx(-kPi * kPi / 8.0).epsilon(1e-13));
  const Band half = make_constant_band(0.0, 0.5);
  CHECK(mogulskii_exponent(half, 2.0) == doctest::Approx(-4.0 * kPi * kPi).epsilon(1e-13));

  // Pinched profile band: integral of (1-s)^{-2/3} = 3 turns the exponent
  // into exactly -lambda_star.
  const double sigma2 = std::acosh(2.0) * std::acosh(2.0);
  const double lstar = tail::lambda_star(sigma2);
  const Band profile = make_profile_band(2.0, lstar, 0.0);
  CHECK(std::abs(mogulskii_exponent(profile, sigma2) - (-lstar)) < 1e-10);

  // The same identity for a unit-variance walk, where lambda_star is 1 when
  // sigma2 = 2 / (3 pi^2).
  const double s2 = 2.0 / (3.0 * kPi * kPi);
  CHECK(std::abs(mogulskii_exponent(make_profile_band(0.0, 1.0, 0.0), s2) - (-1.0)) < 1e-10);
}

TEST_CASE("fitted exponent approaches the limit on a large grid") {
  CorridorSpec spec;
  const double h = std::acosh(2.0);
  spec.band = make_constant_band(-0.5, 0.5);
  spec.walk = make_lattice_walk(h);
  spec.scaling = ScalingRule{ScalingRule::Kind::FourthRoot, {}};
  validate(spec);
  // Grid points sit at a_n = (2m+1) h, halfway between the jumps of the
  // discrete site count, where the finite-size correction is a smooth
  // affine function of 1/a_n.  Arbitrary n would land near a
  // commensurability jump and confound the extrapolation.
  const std::vector<std::uint64_t> grid = {19737, 85905, 251280, 841823};
  const ExponentFit fit = fit_exponent(spec, grid);
  const double target = mogulskii_exponent(spec.band, h * h);
  CHECK(target == doctest::Approx(-kPi * kPi * h * h / 2.0).epsilon(1e-13));
  CHECK_FALSE(fit.diverging);
  REQUIRE(fit.n_grid.size() == grid.size());
  // The discrete band is effectively narrower than the continuum one, so
  // the scaled exponents approach the limit from above.
  for (std::size_t i = 1; i < fit.scaled.size(); ++i)
    CHECK(fit.scaled[i] < fit.scaled[i - 1]);
  CHECK(std::abs(fit.fitted_limit - target) / std::abs(target) < 0.15);
}

TEST_CASE("bounded mark excess shifts the exponent by minus c") {
  CorridorSpec nice;
  nice.band = make_constant_band(-0.5, 0.5);
  nice.walk = make_lattice_walk(std::acosh(2.0));
  nice.scaling = ScalingRule{ScalingRule::Kind::FourthRoot, {}};

  CorridorSpec heavy = nice;
  heavy.mark = MarkRule{MarkRule::Kind::TwoPoint, 0.0, 1.0};
  heavy.threshold = ThresholdRule{ThresholdRule::Kind::Horizon};

  const std::vector<std::uint64_t> grid = {10000, 46416, 215443, 1000000};
  const GapResult gap = heavy_tail_gap(nice, heavy, grid);
  CHECK_FALSE(gap.heavy_diverging);
  CHECK(std::abs(gap.gap - (-1.0)) < 0.2);

  // c = 0 marks give a bit-identical fit.
  CorridorSpec zero = nice;
  zero.mark = MarkRule{MarkRule::Kind::TwoPoint, 0.0, 0.0};
  zero.threshold = ThresholdRule{ThresholdRule::Kind::Horizon};
  const GapResult same = heavy_tail_gap(nice, zero, grid);
  CHECK(same.gap == 0.0);
  CHECK(same.heavy.fitted_limit == same.nice.fitted_limit);

  // Diverging mark excess is flagged instead of fitted.
  CorridorSpec div = nice;
  div.mark = MarkRule{MarkRule::Kind::Diverging, 0.0, 0.0};
  div.threshold = ThresholdRule{ThresholdRule::Kind::Horizon};
  const GapResult lost = heavy_tail_gap(nice, div, grid);
  CHECK(lost.heavy_diverging);
  CHECK(lost.gap == kNegInf);
}

TEST_CASE("invalid corridor setups are rejected up front") {
  // Inverted edges are rejected already at construction.
  CHECK_THROWS_AS(make_constant_band(1.0, -1.0), ConfigError);
  {
    CorridorSpec s = pm1_unit_band();
    s.band = make_constant_band(0.5, 1.5);  // start not in the band
    CHECK_THROWS_AS(validate(s), ConfigError);
  }
  {
    CorridorSpec s = pm1_unit_band();
    s.walk = make_gaussian_walk(1.0);  // DP needs a lattice walk
    CHECK_THROWS_AS(dp_corridor(s, 4), UnsupportedFamily);
  }
  {
    CHECK_THROWS_AS(make_finite_walk({-1.0, 1.0}, {0.7, 0.5}), ConfigError);
    CHECK_THROWS_AS(make_finite_walk({-1.0, 2.0}, {0.5, 0.5}), ConfigError);  // not centred
  }
  {
    CorridorSpec s = pm1_unit_band();
    s.band = make_constant_band(-600.0, 600.0);
    CHECK_THROWS_AS(dp_corridor(s, 1000000), StateExplosion);
  }
  {
    CorridorSpec s = pm1_unit_band();
    CHECK_THROWS_AS(fit_exponent(s, {100, 200}), ConfigError);           // too few points
    CHECK_THROWS_AS(fit_exponent(s, {100, 105, 110, 115}), ConfigError); // not geometric
    s.scaling = ScalingRule{ScalingRule::Kind::Table, {{4, 1.5}}};
    CHECK_THROWS_AS(dp_corridor(s, 8), ConfigError);  // missing table entry
  }
}
