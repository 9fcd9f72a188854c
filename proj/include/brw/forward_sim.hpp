#pragma once

// Forward simulation of the branching walk and branch-and-bound computation
// of the consistent maximal displacement
//   L_n = min over generation-n lineages of max_{k <= n} V(u_k),
// with the root's position 0 included in every running maximum (so L_n >= 0).
//
// Each replicate's tree is a pure function of a single 64-bit root key:
// every node owns an RNG stream derived from its path of child indices, so
// the sampled tree does not depend on traversal order or on the cap.  This
// makes cap-coupling exact: raising the cap never changes the tree, only how
// much of it the search explores.

#include <cstdint>
#include <vector>

#include "brw/estimate.hpp"
#include "brw/laws.hpp"
#include "brw/rng.hpp"

namespace brw::sim {

inline constexpr std::uint64_t kDefaultNodeBudget = 100'000'000;

struct CmdResult {
  // Exact L_n when censored == false (+infinity on extinction); when
  // censored == true the search only established L_n > cap and value = cap.
  double value = 0.0;
  bool censored = false;
  bool extinct_before_n = false;
  std::uint64_t nodes_expanded = 0;
};

// Depth-first branch-and-bound search.  A lineage is pruned the moment its
// running maximum exceeds min(cap, best value found so far); running maxima
// equal to the cap pass, matching the non-strict event {L_n <= cap}.  The
// extinct flag is set only when the whole tree provably died before n (no
// branch was pruned); a pruned, survivor-free search reports Censored, which
// is sound since extinction also implies L_n = +infinity > cap.
CmdResult exact_cmd(const laws::ReproductionLaw& law, std::uint32_t n, double cap,
                    RngStream& rng, std::uint64_t node_budget = kDefaultNodeBudget);

struct CmdCdfResult {
  EstimateReport report;  // P(L_n <= b) with binomial SE
  std::uint64_t n_censored = 0;
  std::uint64_t n_extinct = 0;
  std::uint64_t replicates_done = 0;
  // True when some replicate exhausted its node budget; the estimate then
  // covers the completed replicates only.
  bool budget_exhausted = false;
};

// P(L_n <= b) over independent replicates, each running exact_cmd with
// cap = b.  Replicate r draws its root key from stream (seed, "sim.cmd", r),
// so aggregates are deterministic for any thread count.
CmdCdfResult estimate_cmd_cdf(const laws::ReproductionLaw& law, std::uint32_t n,
                              double b, std::uint64_t replicates, std::uint64_t seed,
                              unsigned threads = 1,
                              std::uint64_t node_budget = kDefaultNodeBudget);

struct TrendRow {
  std::uint32_t n = 0;
  double cap = 0.0;              // absolute cap used for this n
  double quantile_scaled = 0.0;  // empirical quantile of L_n / n^{1/3}
  std::uint64_t n_censored = 0;
  std::uint64_t n_extinct = 0;
  std::uint64_t replicates = 0;
};

// Empirical quantile (nearest rank: index floor(q * (R - 1)) of the sorted
// sample) of L_n / n^{1/3} for each n.  Censored and extinct replicates sort
// as +infinity, so the reported quantile is exact whenever it lands on a
// finite value.  Each n is simulated with cap = cap_scale * n^{1/3};
// cap_scale <= 0 selects the default lambda_star(law) + 0.5.
std::vector<TrendRow> cmd_trend(const laws::ReproductionLaw& law,
                                const std::vector<std::uint32_t>& n_list,
                                double quantile, std::uint64_t replicates,
                                std::uint64_t seed, unsigned threads = 1,
                                double cap_scale = -1.0,
                                std::uint64_t node_budget = kDefaultNodeBudget);

}  // namespace brw::sim
