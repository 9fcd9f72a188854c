#include "brw/spine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <utility>

#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/parallel.hpp"

namespace brw::spine {

namespace {

constexpr const char* kM2oForwardStream = "spine.m2o.fwd";
constexpr const char* kM2oSpineStream = "spine.m2o.sp";
constexpr const char* kZnStream = "spine.zn";
constexpr const char* kXnStream = "spine.xn";

// Absolute slack for interval membership, shared by every route (MC path
// checks, exact DP state bounds, functional evaluation) so that boundary
// states cannot be classified differently by different routes.
constexpr double kTol = 1e-9;

bool inside(double x, double lo, double hi) { return x >= lo - kTol && x <= hi + kTol; }

// The spine decomposition is exact only on the critical manifold.  Built-in
// families are tuned at construction; mistuned diagnostic laws are rejected.
void require_boundary(const laws::ReproductionLaw& law) {
  if (law.family() == laws::Family::GaussianBinary) {
    const auto& g = law.gaussian_data();
    const double slot_weight = 2.0 * std::exp(-g.mu + 0.5 * g.s2);
    if (std::fabs(slot_weight - 1.0) > 1e-9)
      throw ConfigError("spine sampling requires a critically tuned law; '" + law.id() +
                        "' has E[W_1] != 1");
  }
}

// Displacement and xi of one spine step without materialising siblings.
struct LeanStep {
  double displacement = 0.0;
  double xi = 0.0;
};

LeanStep draw_lean(const laws::ReproductionLaw& law, RngStream& rng, SpineStep* full) {
  LeanStep out;
  switch (law.family()) {
    case laws::Family::GaussianBinary: {
      const auto& g = law.gaussian_data();
      const double sd = std::sqrt(g.s2);
      // Slots are exchangeable with weight E[exp(-X)] each, so no slot draw
      // is needed: tilt one child, keep the other at base.
      out.displacement = rng.normal(g.mu - g.s2, sd);
      const double sibling = rng.normal(g.mu, sd);
      out.xi = log_add(-out.displacement, -sibling);
      if (full) full->sibling_displacements.push_back(sibling);
      break;
    }
    case laws::Family::LatticeBinary: {
      const auto& d = law.lattice_data();
      const double u = rng.uniform01();
      double c = 0.0;
      const laws::SpineAtom* atom = &d.spine_atoms.back();
      for (const auto& a : d.spine_atoms) {
        c += a.prob;
        if (u < c) {
          atom = &a;
          break;
        }
      }
      out.displacement = atom->displacement;
      out.xi = atom->xi;
      if (full) full->sibling_displacements.push_back(atom->sibling);
      break;
    }
    case laws::Family::HeavyMixture: {
      const auto& d = law.heavy_data();
      if (rng.bernoulli(d.spine_burst_prob)) {
        const laws::SizeBiasedBurst burst = laws::sample_burst_size_biased(d, rng);
        out.displacement = d.c0;
        out.xi = burst.xi;
        if (full) {
          full->folded_sibling_value = d.c0;
          full->folded_sibling_count = burst.count - 1.0;
        }
      } else {
        const auto& g = d.base;
        const double sd = std::sqrt(g.s2);
        out.displacement = rng.normal(g.mu - g.s2, sd);
        const double sibling = rng.normal(g.mu, sd);
        out.xi = log_add(-out.displacement, -sibling);
        if (full) full->sibling_displacements.push_back(sibling);
      }
      break;
    }
    case laws::Family::UserTable: {
      const auto& t = law.table_data();
      const double u = rng.uniform01();
      std::size_t e = 0;
      while (e + 1 < t.tilted_entry_cdf.size() && u >= t.tilted_entry_cdf[e]) ++e;
      const auto& entry = t.entries[e];
      const double v = rng.uniform01();
      const auto& child_cdf = t.spine_child_cdf[e];
      std::size_t c = 0;
      while (c + 1 < child_cdf.size() && v >= child_cdf[c]) ++c;
      out.displacement = entry.displacements[c];
      out.xi = entry.xi;
      if (full)
        for (std::size_t i = 0; i < entry.displacements.size(); ++i)
          if (i != c) full->sibling_displacements.push_back(entry.displacements[i]);
      break;
    }
  }
  return out;
}

}  // namespace

SpineStep sample_spine_step(const laws::ReproductionLaw& law, RngStream& rng) {
  require_boundary(law);
  SpineStep step;
  const LeanStep lean = draw_lean(law, rng, &step);
  step.spine_displacement = lean.displacement;
  step.xi = lean.xi;
  return step;
}

SpineIncrement sample_spine_increment(const laws::ReproductionLaw& law, RngStream& rng) {
  require_boundary(law);
  const LeanStep lean = draw_lean(law, rng, nullptr);
  return {lean.displacement, lean.xi};
}

SpineRealization simulate_spine(const laws::ReproductionLaw& law, std::uint64_t n,
                                RngStream& rng) {
  require_boundary(law);
  if (n == 0) throw ConfigError("spine simulation needs n >= 1");
  SpineRealization out;
  out.positions.reserve(n + 1);
  out.xis.reserve(n);
  out.positions.push_back(0.0);
  double pos = 0.0;
  for (std::uint64_t j = 0; j < n; ++j) {
    const LeanStep lean = draw_lean(law, rng, nullptr);
    pos += lean.displacement;
    out.positions.push_back(pos);
    out.xis.push_back(lean.xi);
  }
  out.endpoint_weight = std::exp(pos);
  return out;
}

double PathFunctional::evaluate(const std::vector<double>& path) const {
  switch (kind) {
    case Kind::ConstOne:
      return 1.0;
    case Kind::CorridorIndicator:
      for (double v : path)
        if (!inside(v, lo, hi)) return 0.0;
      return 1.0;
    case Kind::RunMaxPenalty: {
      double m = 0.0;
      for (double v : path) m = std::max(m, v);
      return std::exp(-m);
    }
  }
  return 1.0;
}

PathFunctional PathFunctional::parse(const std::string& id) {
  PathFunctional f;
  if (id == "one") {
    f.kind = Kind::ConstOne;
    return f;
  }
  if (id == "runmax-penalty") {
    f.kind = Kind::RunMaxPenalty;
    return f;
  }
  if (id == "corridor") {
    f.kind = Kind::CorridorIndicator;
    return f;
  }
  if (id.rfind("corridor:", 0) == 0) {
    const std::string rest = id.substr(9);
    const std::size_t comma = rest.find(',');
    if (comma != std::string::npos) {
      try {
        f.kind = Kind::CorridorIndicator;
        f.lo = std::stod(rest.substr(0, comma));
        f.hi = std::stod(rest.substr(comma + 1));
        if (f.lo < f.hi) return f;
      } catch (const std::exception&) {
      }
    }
  }
  throw ConfigError("unknown path functional '" + id +
                    "' (use one | corridor | corridor:<lo>,<hi> | runmax-penalty)");
}

std::string PathFunctional::describe() const {
  switch (kind) {
    case Kind::ConstOne:
      return "one";
    case Kind::CorridorIndicator: {
      // Emit the same syntax parse() accepts, so describe() round-trips.
      char buf[64];
      std::snprintf(buf, sizeof(buf), "corridor:%g,%g", lo, hi);
      return buf;
    }
    case Kind::RunMaxPenalty:
      return "runmax-penalty";
  }
  return "?";
}

ManyToOneCheck many_to_one_check(const laws::ReproductionLaw& law, std::uint64_t n,
                                 const PathFunctional& functional, std::uint64_t replicates,
                                 std::uint64_t seed, unsigned threads,
                                 std::uint64_t node_budget) {
  require_boundary(law);
  if (n == 0) throw ConfigError("many-to-one check needs n >= 1");
  if (replicates == 0) throw ConfigError("many-to-one check needs replicates >= 1");
  const bool corridor = functional.kind == PathFunctional::Kind::CorridorIndicator;

  const MomentAccumulator fwd = run_replicates<MomentAccumulator>(
      replicates, threads,
      [&](std::uint64_t begin, std::uint64_t end, MomentAccumulator& acc) {
        struct Node {
          std::uint64_t key;
          double pos;
          double runmax;
          std::uint32_t gen;
        };
        std::vector<Node> stack;
        std::vector<double> scratch;
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rep = make_stream(seed, kM2oForwardStream, r);
          double total = 0.0;
          if (!corridor || inside(0.0, functional.lo, functional.hi)) {
            std::uint64_t nodes = 0;
            stack.clear();
            stack.push_back({rep.next_u64(), 0.0, 0.0, 0});
            while (!stack.empty()) {
              const Node cur = stack.back();
              stack.pop_back();
              if (++nodes > node_budget)
                throw BudgetExceeded("many-to-one forward tree exceeded node budget", nodes);
              if (cur.gen == n) {
                switch (functional.kind) {
                  case PathFunctional::Kind::ConstOne:
                  case PathFunctional::Kind::CorridorIndicator:
                    total += 1.0;
                    break;
                  case PathFunctional::Kind::RunMaxPenalty:
                    total += std::exp(-cur.runmax);
                    break;
                }
                continue;
              }
              RngStream node_rng(cur.key);
              laws::sample_displacements(law, node_rng, scratch);
              for (std::size_t i = 0; i < scratch.size(); ++i) {
                const double child_pos = cur.pos + scratch[i];
                if (corridor && !inside(child_pos, functional.lo, functional.hi)) continue;
                stack.push_back({child_key(cur.key, i), child_pos,
                                 std::max(cur.runmax, child_pos), cur.gen + 1});
              }
            }
          }
          acc.add(total);
        }
      },
      [](MomentAccumulator& acc, const MomentAccumulator& s) { acc.merge(s); });

  const MomentAccumulator sp = run_replicates<MomentAccumulator>(
      replicates, threads,
      [&](std::uint64_t begin, std::uint64_t end, MomentAccumulator& acc) {
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rep = make_stream(seed, kM2oSpineStream, r);
          double pos = 0.0, runmax = 0.0;
          bool alive = !corridor || inside(0.0, functional.lo, functional.hi);
          for (std::uint64_t j = 0; j < n; ++j) {
            const LeanStep lean = draw_lean(law, rep, nullptr);
            pos += lean.displacement;
            runmax = std::max(runmax, pos);
            if (corridor && !inside(pos, functional.lo, functional.hi)) {
              alive = false;
              break;
            }
          }
          double value = 0.0;
          if (alive) {
            switch (functional.kind) {
              case PathFunctional::Kind::ConstOne:
              case PathFunctional::Kind::CorridorIndicator:
                value = std::exp(pos);
                break;
              case PathFunctional::Kind::RunMaxPenalty:
                value = std::exp(pos - runmax);
                break;
            }
          }
          acc.add(value);
        }
      },
      [](MomentAccumulator& acc, const MomentAccumulator& s) { acc.merge(s); });

  ManyToOneCheck out;
  out.forward = EstimateReport::monte_carlo(fwd.mean(), fwd.se_mean(), replicates, seed);
  out.spine = EstimateReport::monte_carlo(sp.mean(), sp.se_mean(), replicates, seed);
  return out;
}

ManyToOneExact many_to_one_exact(const laws::ReproductionLaw& law, std::uint64_t n,
                                 const PathFunctional& functional) {
  if (law.family() != laws::Family::LatticeBinary)
    throw UnsupportedFamily("exact many-to-one routes exist for the binary lattice family only");
  if (n == 0 || n > 32) throw ConfigError("exact many-to-one routes need 1 <= n <= 32");
  const auto& d = law.lattice_data();
  const double h = d.h;
  const bool corridor = functional.kind == PathFunctional::Kind::CorridorIndicator;
  if (corridor && !inside(0.0, functional.lo, functional.hi)) return {0.0, 0.0};

  // State (position index, running-max index); running max over the whole
  // path including the start, so it is always >= 0.
  using State = std::pair<long long, long long>;
  const auto run = [&](bool forward_route) {
    std::map<State, double> cur;
    cur[{0, 0}] = 1.0;
    const double w_up = forward_route ? 2.0 * d.p_up : 0.5;
    const double w_down = forward_route ? 2.0 * d.p_down : 0.5;
    for (std::uint64_t j = 0; j < n; ++j) {
      std::map<State, double> next;
      for (const auto& [state, w] : cur) {
        const auto [k, mx] = state;
        for (int dir = 0; dir < 2; ++dir) {
          const long long nk = dir == 0 ? k + 1 : k - 1;
          if (corridor && !inside(static_cast<double>(nk) * h, functional.lo, functional.hi))
            continue;
          next[{nk, std::max(mx, nk)}] += w * (dir == 0 ? w_up : w_down);
        }
      }
      cur.swap(next);
    }
    double total = 0.0;
    for (const auto& [state, w] : cur) {
      const auto [k, mx] = state;
      double leaf = 1.0;
      if (functional.kind == PathFunctional::Kind::RunMaxPenalty)
        leaf = std::exp(-static_cast<double>(mx) * h);
      const double endpoint =
          forward_route ? 1.0 : std::exp(static_cast<double>(k) * h);
      total += w * leaf * endpoint;
    }
    return total;
  };

  return {run(true), run(false)};
}

namespace {

// Shared shape of the weighted corridor DPs: lattice spine transitions
// filtered by a per-step xi cutoff, log-space rows with renormalisation.
struct LatticeSpineAtoms {
  std::vector<long> offsets;
  std::vector<double> probs;
};

LatticeSpineAtoms filtered_atoms(const laws::LatticeBinaryData& d, double xi_cutoff) {
  LatticeSpineAtoms out;
  for (const auto& a : d.spine_atoms) {
    if (a.xi > xi_cutoff + kTol) continue;
    const long off = a.displacement > 0.0 ? 1 : -1;
    bool merged = false;
    for (std::size_t i = 0; i < out.offsets.size(); ++i)
      if (out.offsets[i] == off) {
        out.probs[i] += a.prob;
        merged = true;
        break;
      }
    if (!merged) {
      out.offsets.push_back(off);
      out.probs.push_back(a.prob);
    }
  }
  return out;
}

}  // namespace

namespace {

// Shared engine for the corridor population mean and its endpoint-floored
// bound: identical corridor event, different endpoint weighting.
EstimateReport zn_corridor_estimate(const laws::ReproductionLaw& law, double lambda,
                                    double delta, std::uint64_t n, MomentMethod method,
                                    std::uint64_t replicates, std::uint64_t seed,
                                    unsigned threads, bool endpoint_weighted) {
  require_boundary(law);
  if (!(lambda > 0.0)) throw ConfigError("corridor population mean needs lambda > 0");
  if (delta < 0.0) throw ConfigError("corridor population mean needs delta >= 0");
  if (n == 0) throw ConfigError("corridor population mean needs n >= 1");

  const double n13 = std::cbrt(static_cast<double>(n));
  const double lam_star = law.lambda_star();
  const double top = lambda * n13;
  const double cutoff = delta * n13;
  const auto lower_at = [&](std::uint64_t j) {
    const double s = static_cast<double>(j) / static_cast<double>(n);
    return (lambda - lam_star * std::cbrt(1.0 + delta - s)) * n13;
  };
  // Constant weight of the floored bound: exp(corridor floor at s = 1).
  const double log_floor_weight = (lambda - lam_star * std::cbrt(delta)) * n13;

  if (method == MomentMethod::Dp) {
    if (law.family() != laws::Family::LatticeBinary)
      throw UnsupportedFamily("the corridor population DP needs the binary lattice family");
    const auto& d = law.lattice_data();
    const double h = d.h;
    const LatticeSpineAtoms atoms = filtered_atoms(d, cutoff);
    if (atoms.offsets.empty()) return EstimateReport::exact_value(0.0);

    long long lo = 0, hi = 0;
    std::vector<double> rel{1.0}, next;
    double log_offset = 0.0;
    for (std::uint64_t j = 1; j <= n; ++j) {
      const long long reach = static_cast<long long>(j);
      const long long nlo =
          std::max(static_cast<long long>(std::ceil(lower_at(j) / h - kTol)), -reach);
      const long long nhi =
          std::min(static_cast<long long>(std::floor(top / h + kTol)), reach);
      if (nlo > nhi) return EstimateReport::exact_value(0.0);
      next.assign(static_cast<std::size_t>(nhi - nlo + 1), 0.0);
      for (long long k = lo; k <= hi; ++k) {
        const double m = rel[static_cast<std::size_t>(k - lo)];
        if (m == 0.0) continue;
        for (std::size_t a = 0; a < atoms.offsets.size(); ++a) {
          const long long kp = k + atoms.offsets[a];
          if (kp >= nlo && kp <= nhi)
            next[static_cast<std::size_t>(kp - nlo)] += m * atoms.probs[a];
        }
      }
      double mx = 0.0;
      for (double v : next) mx = std::max(mx, v);
      if (mx <= 0.0) return EstimateReport::exact_value(0.0);
      const double inv = 1.0 / mx;
      for (double& v : next) v *= inv;
      log_offset += std::log(mx);
      rel.swap(next);
      lo = nlo;
      hi = nhi;
    }
    // Final log-space sum; endpoint weights alone can overflow a double.
    double peak = kNegInf;
    for (long long k = lo; k <= hi; ++k) {
      const double m = rel[static_cast<std::size_t>(k - lo)];
      const double w = endpoint_weighted ? static_cast<double>(k) * h : 0.0;
      if (m > 0.0) peak = std::max(peak, std::log(m) + w);
    }
    if (peak == kNegInf) return EstimateReport::exact_value(0.0);
    double sum = 0.0;
    for (long long k = lo; k <= hi; ++k) {
      const double m = rel[static_cast<std::size_t>(k - lo)];
      const double w = endpoint_weighted ? static_cast<double>(k) * h : 0.0;
      if (m > 0.0) sum += std::exp(std::log(m) + w - peak);
    }
    double log_value = log_offset + peak + std::log(sum);
    if (!endpoint_weighted) log_value += log_floor_weight;
    return EstimateReport::exact_log(log_value);
  }

  if (replicates == 0) throw ConfigError("corridor population MC needs replicates >= 1");
  const MomentAccumulator acc = run_replicates<MomentAccumulator>(
      replicates, threads,
      [&](std::uint64_t begin, std::uint64_t end, MomentAccumulator& slot) {
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rng = make_stream(seed, kZnStream, r);
          double pos = 0.0;
          bool alive = true;
          for (std::uint64_t j = 1; j <= n; ++j) {
            const LeanStep lean = draw_lean(law, rng, nullptr);
            pos += lean.displacement;
            if (lean.xi > cutoff + kTol || !inside(pos, lower_at(j), top)) {
              alive = false;
              break;
            }
          }
          if (!alive)
            slot.add(0.0);
          else
            slot.add(endpoint_weighted ? std::exp(pos) : std::exp(log_floor_weight));
        }
      },
      [](MomentAccumulator& a, const MomentAccumulator& s) { a.merge(s); });
  return EstimateReport::monte_carlo(acc.mean(), acc.se_mean(), replicates, seed);
}

}  // namespace

EstimateReport corridor_population_mean(const laws::ReproductionLaw& law, double lambda,
                                        double delta, std::uint64_t n, MomentMethod method,
                                        std::uint64_t replicates, std::uint64_t seed,
                                        unsigned threads) {
  return zn_corridor_estimate(law, lambda, delta, n, method, replicates, seed, threads, true);
}

EstimateReport corridor_population_bound(const laws::ReproductionLaw& law, double lambda,
                                         double delta, std::uint64_t n, MomentMethod method,
                                         std::uint64_t replicates, std::uint64_t seed,
                                         unsigned threads) {
  return zn_corridor_estimate(law, lambda, delta, n, method, replicates, seed, threads, false);
}

EstimateReport lower_dip_mean(const laws::ReproductionLaw& law, double lambda,
                              std::uint64_t n, MomentMethod method,
                              std::uint64_t replicates, std::uint64_t seed,
                              unsigned threads) {
  require_boundary(law);
  if (!(lambda > 0.0)) throw ConfigError("lower dip mean needs lambda > 0");
  if (n == 0) throw ConfigError("lower dip mean needs n >= 1");

  const double n13 = std::cbrt(static_cast<double>(n));
  const double lam_star = law.lambda_star();
  const double top = lambda * n13;
  const auto floor_at = [&](std::uint64_t j) {
    const double s = static_cast<double>(j) / static_cast<double>(n);
    return (lambda - lam_star * std::cbrt(1.0 - s)) * n13;
  };

  if (method == MomentMethod::Dp) {
    if (law.family() != laws::Family::LatticeBinary)
      throw UnsupportedFamily("the lower dip DP needs the binary lattice family");
    const auto& d = law.lattice_data();
    const double h = d.h;

    long long lo = 0, hi = 0;
    std::vector<double> rel{1.0}, next;
    double log_offset = 0.0;
    double log_total = kNegInf;
    for (std::uint64_t j = 1; j <= n; ++j) {
      const long long reach = static_cast<long long>(j);
      const long long nlo =
          std::max(static_cast<long long>(std::ceil(floor_at(j) / h - kTol)), -reach);
      const long long nhi =
          std::min(static_cast<long long>(std::floor(top / h + kTol)), reach);
      next.assign(nlo <= nhi ? static_cast<std::size_t>(nhi - nlo + 1) : 0, 0.0);
      for (long long k = lo; k <= hi; ++k) {
        const double m = rel[static_cast<std::size_t>(k - lo)];
        if (m == 0.0) continue;
        for (int dir = 0; dir < 2; ++dir) {
          const long long kp = dir == 0 ? k + 1 : k - 1;
          if (kp < nlo) {
            // First exit through the floor: counted with weight exp(position)
            // under the endpoint-reweighted walk, then discarded.
            log_total = log_add(log_total, log_offset + std::log(m) + std::log(0.5) +
                                               static_cast<double>(kp) * h);
          } else if (kp <= nhi) {
            next[static_cast<std::size_t>(kp - nlo)] += m * 0.5;
          }
        }
      }
      if (next.empty()) break;
      double mx = 0.0;
      for (double v : next) mx = std::max(mx, v);
      if (mx <= 0.0) break;
      const double inv = 1.0 / mx;
      for (double& v : next) v *= inv;
      log_offset += std::log(mx);
      rel.swap(next);
      lo = nlo;
      hi = nhi;
    }
    return EstimateReport::exact_log(log_total);
  }

  if (replicates == 0) throw ConfigError("lower dip MC needs replicates >= 1");
  const MomentAccumulator acc = run_replicates<MomentAccumulator>(
      replicates, threads,
      [&](std::uint64_t begin, std::uint64_t end, MomentAccumulator& slot) {
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rng = make_stream(seed, kXnStream, r);
          double pos = 0.0;
          double value = 0.0;
          for (std::uint64_t j = 1; j <= n; ++j) {
            const LeanStep lean = draw_lean(law, rng, nullptr);
            pos += lean.displacement;
            if (pos <= floor_at(j) + kTol) {
              value = std::exp(pos);
              break;
            }
            if (pos > top + kTol) break;
          }
          slot.add(value);
        }
      },
      [](MomentAccumulator& a, const MomentAccumulator& s) { a.merge(s); });
  return EstimateReport::monte_carlo(acc.mean(), acc.se_mean(), replicates, seed);
}

PopulationMoments enumerate_population_moments(const laws::ReproductionLaw& law,
                                               double lambda, double delta,
                                               std::uint64_t n) {
  if (n == 0 || n > 8)
    throw ConfigError("population enumeration is limited to 1 <= n <= 8");
  if (!(lambda > 0.0)) throw ConfigError("population enumeration needs lambda > 0");
  if (delta < 0.0) throw ConfigError("population enumeration needs delta >= 0");

  // Finite brood table of the family.
  struct Entry {
    double prob;
    std::vector<double> displacements;
    double xi;
  };
  std::vector<Entry> entries;
  if (law.family() == laws::Family::UserTable) {
    for (const auto& e : law.table_data().entries)
      entries.push_back({e.prob, e.displacements, e.xi});
  } else if (law.family() == laws::Family::LatticeBinary) {
    const auto& d = law.lattice_data();
    const double h = d.h;
    const auto xi_of = [](double a, double b) { return log_add(-a, -b); };
    entries.push_back({d.p_up * d.p_up, {h, h}, xi_of(h, h)});
    entries.push_back({2.0 * d.p_up * d.p_down, {h, -h}, xi_of(h, -h)});
    entries.push_back({d.p_down * d.p_down, {-h, -h}, xi_of(-h, -h)});
  } else {
    throw UnsupportedFamily("population enumeration needs a finite brood table");
  }

  const double n13 = std::cbrt(static_cast<double>(n));
  const double lam_star = law.lambda_star();
  const double top = lambda * n13;
  const double cutoff = delta * n13;
  const auto lower_at = [&](std::uint64_t j) {
    const double s = static_cast<double>(j) / static_cast<double>(n);
    return (lambda - lam_star * std::cbrt(1.0 + delta - s)) * n13;
  };

  // Distinct displacement values; a path is the composition count of each.
  std::vector<double> values;
  for (const auto& e : entries)
    for (double d : e.displacements)
      if (std::find(values.begin(), values.end(), d) == values.end()) values.push_back(d);
  std::sort(values.begin(), values.end());

  struct Node {
    double m1 = 0.0;  // E[# satisfying generation-n descendants]
    double m2 = 0.0;  // E[(#)^2]
    double q = 1.0;   // P(no satisfying descendant)
  };
  // One memo per level, keyed by the composition counts.
  std::vector<std::map<std::vector<int>, Node>> memo(n + 1);

  const auto position_of = [&](const std::vector<int>& counts) {
    double p = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) p += counts[i] * values[i];
    return p;
  };

  const std::function<Node(std::uint64_t, const std::vector<int>&)> compute =
      [&](std::uint64_t j, const std::vector<int>& counts) -> Node {
    const auto it = memo[j].find(counts);
    if (it != memo[j].end()) return it->second;
    Node node;
    if (j == n) {
      node = {1.0, 1.0, 0.0};
    } else {
      const double pos = position_of(counts);
      node = {0.0, 0.0, 0.0};
      const double next_lower = lower_at(j + 1);
      for (const auto& e : entries) {
        if (e.xi > cutoff + kTol) {
          // Brood too spread out: every child path is disqualified.
          node.q += e.prob;
          continue;
        }
        double sum_m1 = 0.0, sum_m1_sq = 0.0, sum_m2 = 0.0, prod_q = 1.0;
        for (double d : e.displacements) {
          const double child_pos = pos + d;
          if (!inside(child_pos, next_lower, top)) continue;
          std::vector<int> child_counts = counts;
          for (std::size_t i = 0; i < values.size(); ++i)
            if (values[i] == d) {
              ++child_counts[i];
              break;
            }
          const Node child = compute(j + 1, child_counts);
          sum_m1 += child.m1;
          sum_m1_sq += child.m1 * child.m1;
          sum_m2 += child.m2;
          prod_q *= child.q;
        }
        node.m1 += e.prob * sum_m1;
        node.m2 += e.prob * (sum_m2 + sum_m1 * sum_m1 - sum_m1_sq);
        node.q += e.prob * prod_q;
      }
    }
    memo[j].emplace(counts, node);
    return node;
  };

  const Node root = compute(0, std::vector<int>(values.size(), 0));
  return {root.m1, root.m2, 1.0 - root.q};
}

}  // namespace brw::spine
