#include "brw/forward_sim.hpp"

#include <algorithm>
#include <cmath>

#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/parallel.hpp"

namespace brw::sim {

namespace {

constexpr std::string_view kCmdStream = "sim.cmd";
constexpr std::string_view kTrendStream = "sim.trend";

struct StackNode {
  std::uint64_t key;
  double position;
  double running_max;
  std::uint32_t generation;
};

}  // namespace

CmdResult exact_cmd(const laws::ReproductionLaw& law, std::uint32_t n, double cap,
                    RngStream& rng, std::uint64_t node_budget) {
  if (n < 1) throw ConfigError("exact_cmd: n >= 1 required");
  const std::uint64_t root_key = rng.next_u64();

  double best = kPosInf;
  bool found = false;
  bool pruned_any = false;
  std::uint64_t nodes = 0;
  std::vector<double> scratch;
  std::vector<StackNode> stack;
  stack.push_back({root_key, 0.0, 0.0, 0});
  if (0.0 > cap) {
    // The root alone already violates the cap; no lineage can pass.
    stack.clear();
    pruned_any = true;
  }

  while (!stack.empty()) {
    const StackNode node = stack.back();
    stack.pop_back();
    ++nodes;
    if (nodes > node_budget) {
      throw BudgetExceeded("exact_cmd: node budget exhausted", nodes);
    }
    // The bound may have tightened since this node was pushed.
    if (node.running_max > cap || node.running_max >= best) {
      pruned_any = true;
      continue;
    }
    if (node.generation == n) {
      found = true;
      best = node.running_max;  // strictly below the previous best by the check above
      continue;
    }
    RngStream node_rng(node.key);
    laws::sample_displacements(law, node_rng, scratch);
    // Push children in reverse so the sampled order is explored first.
    for (std::size_t i = scratch.size(); i-- > 0;) {
      const double pos = node.position + scratch[i];
      const double rmax = pos > node.running_max ? pos : node.running_max;
      if (rmax > cap || rmax >= best) {
        pruned_any = true;
        continue;
      }
      stack.push_back({child_key(node.key, i), pos, rmax, node.generation + 1});
    }
  }

  CmdResult out;
  out.nodes_expanded = nodes;
  if (found) {
    out.value = best;
  } else if (pruned_any) {
    out.value = cap;
    out.censored = true;
  } else {
    out.value = kPosInf;
    out.extinct_before_n = true;
  }
  return out;
}

CmdCdfResult estimate_cmd_cdf(const laws::ReproductionLaw& law, std::uint32_t n,
                              double b, std::uint64_t replicates, std::uint64_t seed,
                              unsigned threads, std::uint64_t node_budget) {
  if (replicates < 1) throw ConfigError("estimate_cmd_cdf: replicates >= 1 required");
  struct Slot {
    std::uint64_t hits = 0;
    std::uint64_t censored = 0;
    std::uint64_t extinct = 0;
    std::uint64_t done = 0;
    bool exhausted = false;
  };
  const Slot total = run_replicates<Slot>(
      replicates, threads,
      [&](std::uint64_t begin, std::uint64_t end, Slot& slot) {
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rng = make_stream(seed, kCmdStream, r);
          try {
            const CmdResult res = exact_cmd(law, n, b, rng, node_budget);
            ++slot.done;
            if (res.censored) {
              ++slot.censored;
            } else if (res.extinct_before_n) {
              ++slot.extinct;
            } else {
              ++slot.hits;
            }
          } catch (const BudgetExceeded&) {
            slot.exhausted = true;
          }
        }
      },
      [](Slot& t, const Slot& s) {
        t.hits += s.hits;
        t.censored += s.censored;
        t.extinct += s.extinct;
        t.done += s.done;
        t.exhausted = t.exhausted || s.exhausted;
      });

  CmdCdfResult out;
  out.n_censored = total.censored;
  out.n_extinct = total.extinct;
  out.replicates_done = total.done;
  out.budget_exhausted = total.exhausted;
  if (total.done > 0) {
    const double p =
        static_cast<double>(total.hits) / static_cast<double>(total.done);
    const double se =
        std::sqrt(p * (1.0 - p) / static_cast<double>(total.done));
    out.report = EstimateReport::monte_carlo(p, se, total.done, seed);
  } else {
    out.report = EstimateReport::monte_carlo(0.0, 0.0, 0, seed);
  }
  return out;
}

std::vector<TrendRow> cmd_trend(const laws::ReproductionLaw& law,
                                const std::vector<std::uint32_t>& n_list,
                                double quantile, std::uint64_t replicates,
                                std::uint64_t seed, unsigned threads, double cap_scale,
                                std::uint64_t node_budget) {
  if (replicates < 1) throw ConfigError("cmd_trend: replicates >= 1 required");
  if (quantile < 0.0 || quantile > 1.0) {
    throw ConfigError("cmd_trend: quantile must lie in [0, 1]");
  }
  if (!std::is_sorted(n_list.begin(), n_list.end())) {
    throw ConfigError("cmd_trend: n_list must be increasing");
  }
  if (cap_scale <= 0.0) cap_scale = law.lambda_star() + 0.5;

  std::vector<TrendRow> rows;
  rows.reserve(n_list.size());
  for (std::size_t ni = 0; ni < n_list.size(); ++ni) {
    const std::uint32_t n = n_list[ni];
    const double n13 = std::cbrt(static_cast<double>(n));
    const double cap = cap_scale * n13;

    struct Slot {
      std::vector<double> values;
      std::uint64_t censored = 0;
      std::uint64_t extinct = 0;
    };
    Slot total = run_replicates<Slot>(
        replicates, threads,
        [&](std::uint64_t begin, std::uint64_t end, Slot& slot) {
          slot.values.reserve(end - begin);
          for (std::uint64_t r = begin; r < end; ++r) {
            RngStream rng =
                make_stream(seed, kTrendStream, (static_cast<std::uint64_t>(ni) << 40) | r);
            const CmdResult res = exact_cmd(law, n, cap, rng, node_budget);
            if (res.censored) {
              ++slot.censored;
              slot.values.push_back(kPosInf);
            } else if (res.extinct_before_n) {
              ++slot.extinct;
              slot.values.push_back(kPosInf);
            } else {
              slot.values.push_back(res.value / n13);
            }
          }
        },
        [](Slot& t, const Slot& s) {
          t.values.insert(t.values.end(), s.values.begin(), s.values.end());
          t.censored += s.censored;
          t.extinct += s.extinct;
        });

    const auto rank = static_cast<std::size_t>(
        std::floor(quantile * static_cast<double>(replicates - 1)));
    std::nth_element(total.values.begin(), total.values.begin() + rank,
                     total.values.end());
    TrendRow row;
    row.n = n;
    row.cap = cap;
    row.quantile_scaled = total.values[rank];
    row.n_censored = total.censored;
    row.n_extinct = total.extinct;
    row.replicates = replicates;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace brw::sim
