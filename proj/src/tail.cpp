#include "brw/tail.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/parallel.hpp"
#include "brw/rng.hpp"
#include "brw/spine.hpp"

namespace brw::tail {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kBandSlack = 1e-9;
// Cap on total spine steps simulated by one contrast call.
constexpr double kContrastStepBudget = 2e10;

void require_increasing(const std::vector<double>& grid, const char* what) {
  if (grid.empty()) throw ConfigError(std::string(what) + " must be non-empty");
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    if (!(grid[i] < grid[i + 1]))
      throw ConfigError(std::string(what) + " must be strictly increasing");
}

}  // namespace

double lambda_star(double sigma2) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw ConfigError("lambda_star needs sigma2 > 0");
  return std::cbrt(1.5 * kPi * kPi * sigma2);
}

double profile_f(double lambda, double lambda_star, double delta, double t) {
  if (!(lambda_star > 0.0)) throw ConfigError("profile_f needs lambda_star > 0");
  if (!(delta >= 0.0)) throw ConfigError("profile_f needs delta >= 0");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("profile_f needs t in [0, 1]");
  return lambda - lambda_star * std::cbrt(1.0 + delta - t);
}

TailCurve tail_curve(const laws::ReproductionLaw& law, std::uint64_t n,
                     const std::vector<double>& lambda_grid, TailMode mode,
                     std::uint64_t replicates, std::uint64_t seed, unsigned threads,
                     double delta, std::uint64_t node_budget) {
  if (n == 0) throw ConfigError("tail_curve needs n >= 1");
  require_increasing(lambda_grid, "lambda grid");
  const double a_n = std::cbrt(static_cast<double>(n));
  const double lstar = law.lambda_star();

  TailCurve curve;
  curve.law_id = law.id();
  curve.n = n;
  curve.mode = mode;
  curve.delta = mode == TailMode::MomentDp ? delta : 0.0;
  curve.points.reserve(lambda_grid.size());

  if (mode == TailMode::Direct) {
    if (replicates == 0) throw ConfigError("direct tail_curve needs replicates >= 1");
    if (n > std::numeric_limits<std::uint32_t>::max())
      throw ConfigError("direct tail_curve horizon too large");
    for (double lambda : lambda_grid) {
      if (!(lambda >= 0.0)) throw ConfigError("direct tail_curve needs lambda >= 0");
      const double cap = lambda * a_n;
      if (cap > kDirectCapLimit)
        throw BudgetExceeded("direct tail estimation needs lambda * n^{1/3} <= " +
                                 std::to_string(kDirectCapLimit),
                             static_cast<std::uint64_t>(cap));
    }
    for (double lambda : lambda_grid) {
      // Same seed for every grid point: replicate r sees the same tree at
      // each cap, so hit counts (and estimates) are nondecreasing in lambda.
      const auto res = sim::estimate_cmd_cdf(law, static_cast<std::uint32_t>(n),
                                             lambda * a_n, replicates, seed, threads,
                                             node_budget);
      TailPoint pt;
      pt.lambda = lambda;
      pt.probability = res.report.estimate;
      pt.prob_se = res.report.se;
      pt.scaled_log = res.report.log_estimate / a_n;
      pt.upper_proxy = kNan;
      pt.target = lambda - lstar;
      pt.censored = res.n_censored + (res.budget_exhausted
                                          ? replicates - res.replicates_done
                                          : 0);
      pt.extinct = res.n_extinct;
      curve.points.push_back(pt);
    }
    return curve;
  }

  if (law.family() != laws::Family::LatticeBinary)
    throw ConfigError("moment-DP tail_curve needs a lattice-binary law");
  if (!(delta > 0.0)) throw ConfigError("moment-DP tail_curve needs delta > 0");
  for (double lambda : lambda_grid) {
    if (!(lambda > 0.0)) throw ConfigError("moment-DP tail_curve needs lambda > 0");
    const auto lower =
        spine::corridor_population_bound(law, lambda, delta, n, spine::MomentMethod::Dp);
    const auto upper = spine::lower_dip_mean(law, lambda, n, spine::MomentMethod::Dp);
    TailPoint pt;
    pt.lambda = lambda;
    pt.probability = kNan;
    pt.prob_se = kNan;
    pt.scaled_log = lower.log_estimate / a_n;
    pt.upper_proxy = upper.log_estimate / a_n;
    pt.target = lambda - lstar;
    curve.points.push_back(pt);
  }
  return curve;
}

namespace {

ContrastSide contrast_side(const laws::ReproductionLaw& law, const char* side,
                           const std::vector<std::uint64_t>& n_grid,
                           std::uint64_t replicates, std::uint64_t seed, unsigned threads,
                           double xi_cap, double band_width, double synthetic_c) {
  ContrastSide out;
  out.law_id = law.id();
  out.points.reserve(n_grid.size());

  struct Slot {
    std::uint64_t plain = 0;
    std::uint64_t constrained = 0;
  };

  for (std::uint64_t n : n_grid) {
    const double a_n = std::cbrt(static_cast<double>(n));
    const double half = 0.5 * band_width * a_n;
    const double cap = xi_cap * a_n;
    const double thin =
        synthetic_c >= 0.0 ? std::min(1.0, synthetic_c / (a_n * a_n)) : -1.0;
    const std::string stream_id = std::string("tail.contrast.") + side + "." +
                                  std::to_string(n);

    const Slot total = run_replicates<Slot>(
        replicates, threads,
        [&](std::uint64_t begin, std::uint64_t end, Slot& slot) {
          for (std::uint64_t r = begin; r < end; ++r) {
            RngStream rng = make_stream(seed, stream_id, r);
            double pos = 0.0;
            bool in_band = true;
            bool constraint_ok = true;
            for (std::uint64_t j = 0; j < n; ++j) {
              const spine::SpineIncrement inc = spine::sample_spine_increment(law, rng);
              const bool bad =
                  thin >= 0.0 ? rng.bernoulli(thin) : inc.xi > cap + kBandSlack;
              pos += inc.displacement;
              if (std::abs(pos) > half + kBandSlack) {
                in_band = false;
                break;
              }
              if (bad) constraint_ok = false;
            }
            if (in_band) {
              ++slot.plain;
              if (constraint_ok) ++slot.constrained;
            }
          }
        },
        [](Slot& acc, const Slot& s) {
          acc.plain += s.plain;
          acc.constrained += s.constrained;
        });

    ContrastPoint pt;
    pt.n = n;
    pt.a_n = a_n;
    const double r = static_cast<double>(replicates);
    pt.hits_plain = total.plain;
    pt.hits_constrained = total.constrained;
    pt.log_p_plain =
        total.plain == 0 ? kNegInf : std::log(static_cast<double>(total.plain) / r);
    pt.log_p_constrained = total.constrained == 0
                               ? kNegInf
                               : std::log(static_cast<double>(total.constrained) / r);
    const double scale = a_n * a_n / static_cast<double>(n);
    if (total.plain == 0)
      pt.deficit_scaled = kNan;
    else if (total.constrained == 0)
      pt.deficit_scaled = kPosInf;
    else
      pt.deficit_scaled = scale * (std::log(static_cast<double>(total.plain)) -
                                   std::log(static_cast<double>(total.constrained)));
    out.points.push_back(pt);
  }

  std::vector<double> xs;
  std::vector<double> ys;
  for (const auto& pt : out.points)
    if (std::isfinite(pt.deficit_scaled)) {
      xs.push_back(1.0 / pt.a_n);
      ys.push_back(pt.deficit_scaled);
    }
  if (xs.size() >= 2)
    out.deficit_fit = fit_affine(xs, ys).intercept;
  else if (xs.size() == 1)
    out.deficit_fit = ys.front();
  else
    out.deficit_fit = kNan;
  return out;
}

}  // namespace

ContrastReport nonintegrable_contrast(const laws::ReproductionLaw& law_nice,
                                      const laws::ReproductionLaw& law_heavy,
                                      const std::vector<std::uint64_t>& n_grid,
                                      std::uint64_t replicates, std::uint64_t seed,
                                      unsigned threads, double xi_cap, double band_width,
                                      double synthetic_c) {
  if (law_heavy.family() != laws::Family::HeavyMixture)
    throw ConfigError("contrast needs a heavy-mixture law on the heavy side");
  if (n_grid.empty()) throw ConfigError("contrast needs a non-empty n grid");
  for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
    if (!(n_grid[i] < n_grid[i + 1]))
      throw ConfigError("contrast n grid must be strictly increasing");
  if (replicates == 0) throw ConfigError("contrast needs replicates >= 1");
  if (!(xi_cap > 0.0)) throw ConfigError("contrast needs xi_cap > 0");
  if (!(band_width > 0.0)) throw ConfigError("contrast needs band_width > 0");
  double steps = 0.0;
  for (std::uint64_t n : n_grid) steps += static_cast<double>(n);
  if (steps * static_cast<double>(replicates) * 2.0 > kContrastStepBudget)
    throw BudgetExceeded("contrast replicate budget exceeded",
                         static_cast<std::uint64_t>(kContrastStepBudget));

  ContrastReport report;
  report.nice = contrast_side(law_nice, "nice", n_grid, replicates, seed, threads,
                              xi_cap, band_width, synthetic_c);
  report.heavy = contrast_side(law_heavy, "heavy", n_grid, replicates, seed, threads,
                               xi_cap, band_width, synthetic_c);
  return report;
}

}  // namespace brw::tail
