#pragma once

// Size-biased branching walk with a distinguished line of descent (the
// spine).  Under the reweighted measure the spine performs a centred random
// walk with variance sigma2; reweighting by the endpoint e^{S_n} converts
// spine expectations into expectations of sums over all generation-n
// particles:
//   E[ sum_{|u|=n} f(V(u_j), j<=n) ] = E_spine[ e^{S_n} f(S_j, j<=n) ].
// The module verifies this identity two-sidedly (independent forward and
// spine estimators, plus exact lattice routes) and uses the spine picture
// to evaluate expected counts of corridor-constrained particles.

#include <cstdint>
#include <string>
#include <vector>

#include "brw/estimate.hpp"
#include "brw/forward_sim.hpp"
#include "brw/laws.hpp"
#include "brw/rng.hpp"

namespace brw::spine {

// One spine step: the spine child's displacement, its siblings, and the
// brood statistic xi = log sum_children exp(-displacement) (spine included).
// Heavy-mixture bursts of K equal displacements are kept folded instead of
// materialised: folded_sibling_count siblings at folded_sibling_value.
// Invariant:
//   xi = log( exp(-spine_displacement) + sum_i exp(-sibling_i)
//             + folded_sibling_count * exp(-folded_sibling_value) ).
struct SpineStep {
  double spine_displacement = 0.0;
  std::vector<double> sibling_displacements;
  double folded_sibling_value = 0.0;
  double folded_sibling_count = 0.0;
  double xi = 0.0;
};

// One step of the size-biased brood with spine choice: pick the spine slot
// with the family's slot weights, give it the exponentially tilted
// displacement law, keep siblings at the base law.  Exact per family; user
// tables fall back to exact finite reweighting (entry probability
// proportional to p * W_1, spine child proportional to exp(-displacement)).
SpineStep sample_spine_step(const laws::ReproductionLaw& law, RngStream& rng);

// Same draw without materialising siblings: just the spine displacement and
// the brood statistic xi.  One allocation-free call per step, for MC loops
// that only need the spine walk.
struct SpineIncrement {
  double displacement = 0.0;
  double xi = 0.0;
};

SpineIncrement sample_spine_increment(const laws::ReproductionLaw& law, RngStream& rng);

struct SpineRealization {
  std::vector<double> positions;  // S_0 = 0, ..., S_n
  std::vector<double> xis;        // xi of step j, j = 1..n
  double endpoint_weight = 0.0;   // exp(S_n)
};

SpineRealization simulate_spine(const laws::ReproductionLaw& law, std::uint64_t n,
                                RngStream& rng);

// Closed registry of bounded path functionals for the two-sided check.
struct PathFunctional {
  enum class Kind { ConstOne, CorridorIndicator, RunMaxPenalty };
  Kind kind = Kind::ConstOne;
  double lo = -5.0;  // CorridorIndicator bounds; lo may be -inf
  double hi = 5.0;

  // f(S_0..S_n): 1, indicator of S_j in [lo, hi] for all j, or
  // exp(-max(0, max_j S_j)).
  double evaluate(const std::vector<double>& path) const;

  // "one" | "corridor" | "corridor:<lo>,<hi>" | "runmax-penalty".
  static PathFunctional parse(const std::string& id);
  std::string describe() const;
};

struct ManyToOneCheck {
  EstimateReport forward;  // MC of E[sum_{|u|=n} f], full tree simulation
  EstimateReport spine;    // MC of E[e^{S_n} f(S)], spine simulation
};

// Both sides with standard errors.  The forward side prunes only branches
// provably outside f's support (corridor violations); it throws
// BudgetExceeded when a replicate's tree exceeds node_budget nodes.
ManyToOneCheck many_to_one_check(const laws::ReproductionLaw& law, std::uint64_t n,
                                 const PathFunctional& functional, std::uint64_t replicates,
                                 std::uint64_t seed, unsigned threads = 1,
                                 std::uint64_t node_budget = sim::kDefaultNodeBudget);

struct ManyToOneExact {
  double forward = 0.0;  // transfer-matrix over (position, running max)
  double spine = 0.0;    // endpoint-weighted walk DP over the same states
};

// Exact both-route evaluation; lattice-binary family only.
ManyToOneExact many_to_one_exact(const laws::ReproductionLaw& law, std::uint64_t n,
                                 const PathFunctional& functional);

enum class MomentMethod { Dp, Mc };

// Expected number of generation-n particles whose path stays in the
// shrinking corridor
//   I_j = [ (lambda - lambda_star (1 + delta - j/n)^{1/3}) n^{1/3},
//           lambda n^{1/3} ]
// with every ancestral brood satisfying xi <= delta n^{1/3}.  Dp: exact
// endpoint-weighted transfer matrix (lattice-binary only; log-space with
// per-row renormalisation).  Mc: average of e^{S_n} * indicator over spine
// replicates, stream (seed, "spine.zn", r).
EstimateReport corridor_population_mean(const laws::ReproductionLaw& law, double lambda,
                                        double delta, std::uint64_t n, MomentMethod method,
                                        std::uint64_t replicates = 0, std::uint64_t seed = 0,
                                        unsigned threads = 1);

// Endpoint-floored lower bound for the same mean:
//   exp(f(1) n^{1/3}) * P(spine stays in the corridor with xi <= delta n^{1/3}),
// where f(t) = lambda - lambda_star (1 + delta - t)^{1/3} is the corridor
// floor.  Unlike the raw mean, whose n^{-1/3} log tends to
// lambda - lambda_star ((1+delta)^{1/3} - delta^{1/3}) because corridor-top
// endpoints dominate the weight, this bound's n^{-1/3} log converges to
// lambda - lambda_star (1+delta)^{1/3} exactly.
EstimateReport corridor_population_bound(const laws::ReproductionLaw& law, double lambda,
                                         double delta, std::uint64_t n, MomentMethod method,
                                         std::uint64_t replicates = 0, std::uint64_t seed = 0,
                                         unsigned threads = 1);

// Expected number of particles (any generation k <= n) that first leave the
// corridor through its lower edge:
//   sum_k E[ #{|u| = k : V(u) <= (lambda - lambda_star (1 - k/n)^{1/3}) n^{1/3},
//             V(u_j) in I_j for j < k} ],
// with I_j = [ (lambda - lambda_star (1 - j/n)^{1/3}) n^{1/3}, lambda n^{1/3} ].
// Its n^{-1/3} log upper-bounds that of P(min running max <= lambda n^{1/3}).
EstimateReport lower_dip_mean(const laws::ReproductionLaw& law, double lambda,
                              std::uint64_t n, MomentMethod method,
                              std::uint64_t replicates = 0, std::uint64_t seed = 0,
                              unsigned threads = 1);

struct PopulationMoments {
  double mean = 0.0;           // E[Z]
  double second_moment = 0.0;  // E[Z^2]
  double prob_positive = 0.0;  // P(Z > 0)
};

// Exact enumeration of the corridor population count Z for small horizons
// (n <= 8) by composition-state recursion; finite-table families only
// (user table, or the binary lattice family via its three-entry table).
// Validates the bracketing mean^2 / second_moment <= P(Z > 0) <= mean.
PopulationMoments enumerate_population_moments(const laws::ReproductionLaw& law,
                                               double lambda, double delta,
                                               std::uint64_t n);

}  // namespace brw::spine
