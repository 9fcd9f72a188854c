#pragma once

// Small-deviation corridor probabilities for centred random walks with
// optional i.i.d. marks:
//   p_n = P_{z a_n}( T_j in [f(j/n), g(j/n)] * a_n and xi_j <= tau_n,
//                    j = 1..n;  optionally T_n in [y, y'] * a_n ),
// together with the limiting exponent
//   (a_n^2 / n) log p_n  ->  -(pi^2 sigma^2 / 2) int_0^1 ds / (g - f)^2
// for a_n -> infinity with a_n^2 = o(n), and its degradation when the marks
// keep a_n^2 P(xi > tau_n) bounded away from zero.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "brw/estimate.hpp"
#include "brw/rng.hpp"

namespace brw::corridor {

// Band edges on [0, 1], in a_n units.  Both edges are continuous; the
// corridor at row j is the closed interval [lower(j/n), upper(j/n)] * a_n.
struct Band {
  std::function<double(double)> lower;
  std::function<double(double)> upper;
  // upper(s) - lower(s), given the exact distances of s to the interval ends
  // (dist0 = s, dist1 = 1 - s).  Quadrature of edge-singular widths such as
  // (1 - s)^{1/3} needs dist1 at full precision where 1 - s underflows in s.
  std::function<double(double s, double dist0, double dist1)> width;
  std::string description;
};

Band make_constant_band(double lo, double hi);

// Piecewise-linear edges through shared knots s_0 = 0 < ... < s_m = 1.
Band make_piecewise_band(std::vector<double> s_knots, std::vector<double> lower_vals,
                         std::vector<double> upper_vals);

// lower(s) = lambda - max(lambda_star * (1-s)^{1/3}, min_width),
// upper(s) = lambda.  With min_width = 0 the band pinches to a point at
// s = 1 (the exact profile shape, usable for quadrature); a positive
// min_width keeps every DP row at least one lattice step wide.
Band make_profile_band(double lambda, double lambda_star, double min_width = 0.0);

// Centred step law of the walk.
struct WalkLaw {
  enum class Kind { FiniteAtoms, Gaussian };
  Kind kind = Kind::Gaussian;
  double sigma2 = 0.0;
  std::vector<double> values;  // FiniteAtoms
  std::vector<double> probs;
  // Lattice structure detected at construction: values = offsets * spacing.
  bool lattice = false;
  double spacing = 0.0;
  std::vector<long> offsets;
  std::string description;
};

WalkLaw make_lattice_walk(double h);  // steps +-h with probability 1/2 each
WalkLaw make_finite_walk(std::vector<double> values, std::vector<double> probs);
WalkLaw make_gaussian_walk(double sigma2);

// Threshold sequence tau_n for the mark constraint.
struct ThresholdRule {
  enum class Kind { Infinite, Constant, DeltaAn, Horizon };
  Kind kind = Kind::Infinite;
  double value = 0.0;  // Constant: tau_n = value; DeltaAn: tau_n = value * a_n

  double tau(std::uint64_t n, double a_n) const;
};

// Mark law paired with each step, independent of the walk.
//   None           no marks (survival probability 1)
//   BoundedUniform xi ~ Uniform[0, bound]
//   TwoPoint       xi = 0 w.p. 1 - c/a_n^2, else tau_n + 1; engineered so
//                  a_n^2 P(xi > tau_n) = c exactly
//   Diverging      P(xi > tau_n) = 1/a_n, so a_n^2 P -> infinity
struct MarkRule {
  enum class Kind { None, BoundedUniform, TwoPoint, Diverging };
  Kind kind = Kind::None;
  double bound = 0.0;
  double c = 0.0;

  // log P(xi <= tau_n) for one step.
  double log_q(std::uint64_t n, double a_n, double tau_n) const;
  bool sample_violation(RngStream& rng, std::uint64_t n, double a_n,
                        double tau_n) const;
};

// a_n scaling rule.
struct ScalingRule {
  enum class Kind { CubeRoot, FourthRoot, Table };
  Kind kind = Kind::CubeRoot;
  std::vector<std::pair<std::uint64_t, double>> table;

  double a(std::uint64_t n) const;
};

struct CorridorSpec {
  Band band;
  WalkLaw walk;
  MarkRule mark;
  ThresholdRule threshold;
  ScalingRule scaling;
  bool has_endpoint_window = false;
  double y_lo = 0.0;
  double y_hi = 0.0;
};

// Checks band ordering on a 1001-point grid (strict in the interior, ties
// allowed at s = 1 for pinched profiles), 0 in the starting band, and the
// walk's centring; throws ConfigError on violation.
void validate(const CorridorSpec& spec);

inline constexpr std::size_t kMaxStatesPerRow = 100000;

// Exact corridor probability by transfer-matrix DP over lattice states
// (log-space with per-row renormalisation).  Band edges are discretised
// toward the interior (ceil/floor with 1e-9 state tolerance), so the result
// is a lower bound for the continuum-band event.  The start z (in a_n
// units) is snapped to the nearest lattice state.  Requires a lattice walk
// and a mark rule with closed-form q_n; throws StateExplosion when a row
// would exceed kMaxStatesPerRow states.
EstimateReport dp_corridor(const CorridorSpec& spec, std::uint64_t n, double z = 0.0);

// Direct Monte Carlo of the same event (any walk).  Band membership allows
// 1e-9 absolute slack so accumulated lattice rounding cannot flip a
// boundary state.  Replicate r uses stream (seed, "corridor.mc", r).
EstimateReport mc_corridor(const CorridorSpec& spec, std::uint64_t n,
                           std::uint64_t replicates, std::uint64_t seed,
                           unsigned threads = 1, double z = 0.0);

// -(pi^2 sigma2 / 2) * int_0^1 ds / width(s)^2 by tanh-sinh quadrature.
double mogulskii_exponent(const Band& band, double sigma2);

struct ExponentFit {
  std::vector<std::uint64_t> n_grid;
  std::vector<double> a_n;
  std::vector<double> log_p;
  std::vector<double> scaled;    // (a_n^2 / n) log p_n
  double fitted_limit = 0.0;     // intercept of scaled ~ fitted + slope / a_n
  double slope = 0.0;
  double max_abs_residual = 0.0;
  // Set when the scaled sequence runs away instead of settling: strictly
  // decreasing with growing decrements and total drop > 2.
  bool diverging = false;
};

// DP per grid point, then least-squares extrapolation of the scaled
// exponent affinely in 1/a_n.  Requires >= 4 increasing n with roughly
// geometric spacing (consecutive ratios >= 1.2).
ExponentFit fit_exponent(const CorridorSpec& spec, const std::vector<std::uint64_t>& n_grid,
                         double z = 0.0);

struct GapResult {
  ExponentFit nice;
  ExponentFit heavy;
  double gap = 0.0;  // heavy.fitted_limit - nice.fitted_limit; -inf when diverging
  bool heavy_diverging = false;
};

// Same-corridor comparison of two specs differing only in their mark rule.
GapResult heavy_tail_gap(const CorridorSpec& spec_nice, const CorridorSpec& spec_heavy,
                         const std::vector<std::uint64_t>& n_grid);

}  // namespace brw::corridor
