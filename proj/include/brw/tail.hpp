#pragma once

// Top-level experiments for the left tail of the consistent minimal running
// maximum L_n: the constant lambda_star = (3 pi^2 sigma^2 / 2)^{1/3}, the
// exponent curve lambda -> lambda - lambda_star for
// (1/n^{1/3}) log P(L_n <= lambda n^{1/3}), and the contrast experiment
// showing how a heavy brood tail degrades corridor survival under the
// size-biased measure.

#include <cstdint>
#include <string>
#include <vector>

#include "brw/forward_sim.hpp"
#include "brw/laws.hpp"

namespace brw::tail {

// (3 pi^2 sigma2 / 2)^{1/3}.
double lambda_star(double sigma2);

// Corridor floor profile used by the moment bounds: delta = 0 selects
// lambda - lambda_star (1 - t)^{1/3} (the lower-dip profile), delta > 0
// selects lambda - lambda_star (1 + delta - t)^{1/3} (the population
// profile).  t in [0, 1].
double profile_f(double lambda, double lambda_star, double delta, double t);

enum class TailMode { Direct, MomentDp };

inline constexpr double kDefaultDelta = 0.05;
// Direct forward estimation is allowed only while the cap lambda n^{1/3}
// keeps the surviving tree enumerable.
inline constexpr double kDirectCapLimit = 18.0;

struct TailPoint {
  double lambda = 0.0;
  // Direct mode: MC estimate of P(L_n <= lambda n^{1/3}) with binomial SE.
  double probability = 0.0;
  double prob_se = 0.0;
  // (1/n^{1/3}) log of the probability (Direct) or of the endpoint-floored
  // population bound (MomentDp).
  double scaled_log = 0.0;
  // MomentDp only: (1/n^{1/3}) log of the lower-dip union-bound sum.
  double upper_proxy = 0.0;
  double target = 0.0;  // lambda - lambda_star
  std::uint64_t censored = 0;
  std::uint64_t extinct = 0;
};

struct TailCurve {
  std::string law_id;
  std::uint64_t n = 0;
  TailMode mode = TailMode::MomentDp;
  double delta = 0.0;
  std::vector<TailPoint> points;
};

// Direct mode: forward branch-and-bound replicates per grid point (same
// seed across points, so the estimates are coupled and monotone in lambda).
// MomentDp mode: exact lattice DP proxies bracketing the target exponent;
// replicates are ignored.
TailCurve tail_curve(const laws::ReproductionLaw& law, std::uint64_t n,
                     const std::vector<double>& lambda_grid, TailMode mode,
                     std::uint64_t replicates = 0, std::uint64_t seed = 0,
                     unsigned threads = 1, double delta = kDefaultDelta,
                     std::uint64_t node_budget = sim::kDefaultNodeBudget);

inline constexpr double kDefaultXiCap = 10.0;    // A in the cap A n^{1/3}
inline constexpr double kDefaultBandWidth = 6.0;  // corridor width in a_n units

struct ContrastPoint {
  std::uint64_t n = 0;
  double a_n = 0.0;
  double log_p_plain = 0.0;        // corridor survival, no brood constraint
  double log_p_constrained = 0.0;  // additionally xi_j <= xi_cap * a_n
  // (a_n^2 / n) (log p_plain - log p_constrained); nonnegative by coupling.
  double deficit_scaled = 0.0;
  std::uint64_t hits_plain = 0;
  std::uint64_t hits_constrained = 0;
};

struct ContrastSide {
  std::string law_id;
  std::vector<ContrastPoint> points;
  double deficit_fit = 0.0;  // affine-in-1/a_n extrapolation of the deficit
};

struct ContrastReport {
  ContrastSide nice;
  ContrastSide heavy;
};

// Spine-walk corridor survival in the centred band [-width/2, width/2] * a_n
// (a_n = n^{1/3}), with and without the per-step brood constraint, estimated
// from the same coupled replicates: the constrained event is a sub-event, so
// each deficit is nonnegative, and it is exactly zero when the constraint
// never fires.  synthetic_c >= 0 replaces the xi constraint by an
// independent per-step thinning of probability synthetic_c / a_n^2 (known
// deficit synthetic_c, for calibrating the measurement).
ContrastReport nonintegrable_contrast(const laws::ReproductionLaw& law_nice,
                                      const laws::ReproductionLaw& law_heavy,
                                      const std::vector<std::uint64_t>& n_grid,
                                      std::uint64_t replicates, std::uint64_t seed,
                                      unsigned threads = 1, double xi_cap = kDefaultXiCap,
                                      double band_width = kDefaultBandWidth,
                                      double synthetic_c = -1.0);

}  // namespace brw::tail
