#include "brw/corridor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <utility>

#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/parallel.hpp"
#include "brw/quad.hpp"

namespace brw::corridor {

namespace {

constexpr const char* kMcStream = "corridor.mc";

// Tolerance, in lattice-index units, for deciding whether a state sits
// inside a band edge; absorbs the rounding noise of f(j/n) * a_n / h.
constexpr double kIndexTol = 1e-9;

// Absolute slack for continuum band checks in the Monte Carlo route.
constexpr double kBandSlack = 1e-9;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

double float_gcd(double a, double b) {
  a = std::fabs(a);
  b = std::fabs(b);
  const double tol = 1e-9 * std::max(a, b);
  while (b > tol) {
    const double r = std::fmod(a, b);
    a = b;
    b = r;
  }
  return a;
}

}  // namespace

Band make_constant_band(double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("constant band needs lo < hi");
  Band b;
  b.lower = [lo](double) { return lo; };
  b.upper = [hi](double) { return hi; };
  b.width = [lo, hi](double, double, double) { return hi - lo; };
  b.description = "constant[" + format_double(lo) + "," + format_double(hi) + "]";
  return b;
}

Band make_piecewise_band(std::vector<double> s_knots, std::vector<double> lower_vals,
                         std::vector<double> upper_vals) {
  const std::size_t m = s_knots.size();
  if (m < 2 || lower_vals.size() != m || upper_vals.size() != m)
    throw ConfigError("piecewise band needs >= 2 knots with matching edge values");
  if (std::fabs(s_knots.front()) > 1e-12 || std::fabs(s_knots.back() - 1.0) > 1e-12)
    throw ConfigError("piecewise band knots must span [0, 1]");
  s_knots.front() = 0.0;
  s_knots.back() = 1.0;
  for (std::size_t i = 1; i < m; ++i)
    if (!(s_knots[i] > s_knots[i - 1]))
      throw ConfigError("piecewise band knots must be strictly increasing");

  struct Data {
    std::vector<double> s, lo, hi;
  };
  auto data = std::make_shared<Data>();
  data->s = std::move(s_knots);
  data->lo = std::move(lower_vals);
  data->hi = std::move(upper_vals);

  auto interp = [](const std::vector<double>& s, const std::vector<double>& v, double x) {
    if (x <= s.front()) return v.front();
    if (x >= s.back()) return v.back();
    const auto it = std::upper_bound(s.begin(), s.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - s.begin());
    const double t = (x - s[i - 1]) / (s[i] - s[i - 1]);
    return v[i - 1] + t * (v[i] - v[i - 1]);
  };

  Band b;
  b.lower = [data, interp](double x) { return interp(data->s, data->lo, x); };
  b.upper = [data, interp](double x) { return interp(data->s, data->hi, x); };
  b.width = [data, interp](double x, double, double) {
    return interp(data->s, data->hi, x) - interp(data->s, data->lo, x);
  };
  b.description = "piecewise[" + std::to_string(m) + " knots]";
  return b;
}

Band make_profile_band(double lambda, double lambda_star, double min_width) {
  if (!(lambda_star > 0.0)) throw ConfigError("profile band needs lambda_star > 0");
  if (min_width < 0.0) throw ConfigError("profile band needs min_width >= 0");
  Band b;
  b.width = [lambda_star, min_width](double, double, double dist1) {
    return std::max(lambda_star * std::cbrt(dist1), min_width);
  };
  b.lower = [lambda, w = b.width](double s) { return lambda - w(s, s, 1.0 - s); };
  b.upper = [lambda](double) { return lambda; };
  b.description = "profile[lambda=" + format_double(lambda) +
                  ",lambda_star=" + format_double(lambda_star) +
                  ",min_width=" + format_double(min_width) + "]";
  return b;
}

WalkLaw make_lattice_walk(double h) {
  if (!(h > 0.0)) throw ConfigError("lattice walk needs h > 0");
  WalkLaw w;
  w.kind = WalkLaw::Kind::FiniteAtoms;
  w.sigma2 = h * h;
  w.values = {-h, h};
  w.probs = {0.5, 0.5};
  w.lattice = true;
  w.spacing = h;
  w.offsets = {-1, 1};
  w.description = "lattice[h=" + format_double(h) + "]";
  return w;
}

WalkLaw make_finite_walk(std::vector<double> values, std::vector<double> probs) {
  const std::size_t m = values.size();
  if (m == 0 || probs.size() != m)
    throw ConfigError("finite walk needs matching nonempty value/probability lists");
  double sum = 0.0, mean = 0.0, second = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(probs[i] > 0.0)) throw ConfigError("finite walk probabilities must be positive");
    sum += probs[i];
    mean += probs[i] * values[i];
    second += probs[i] * values[i] * values[i];
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    throw ConfigError("finite walk probabilities must sum to 1 (got " + format_double(sum) + ")");
  if (std::fabs(mean) > 1e-12)
    throw ConfigError("finite walk must be centred (mean " + format_double(mean) + ")");

  WalkLaw w;
  w.kind = WalkLaw::Kind::FiniteAtoms;
  w.sigma2 = second;
  w.values = std::move(values);
  w.probs = std::move(probs);

  double g = 0.0;
  for (double v : w.values) g = float_gcd(g, v);
  if (g > 0.0) {
    w.lattice = true;
    w.spacing = g;
    for (double v : w.values) {
      const double r = v / g;
      const long o = std::lround(r);
      if (std::fabs(r - static_cast<double>(o)) > 1e-9) {
        w.lattice = false;
        break;
      }
      w.offsets.push_back(o);
    }
    if (!w.lattice) w.offsets.clear();
  }
  w.description = "finite[" + std::to_string(m) + " atoms]";
  return w;
}

WalkLaw make_gaussian_walk(double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("gaussian walk needs sigma2 > 0");
  WalkLaw w;
  w.kind = WalkLaw::Kind::Gaussian;
  w.sigma2 = sigma2;
  w.description = "gaussian[sigma2=" + format_double(sigma2) + "]";
  return w;
}

double ThresholdRule::tau(std::uint64_t n, double a_n) const {
  switch (kind) {
    case Kind::Infinite:
      return kPosInf;
    case Kind::Constant:
      return value;
    case Kind::DeltaAn:
      return value * a_n;
    case Kind::Horizon:
      return static_cast<double>(n);
  }
  return kPosInf;
}

double MarkRule::log_q(std::uint64_t /*n*/, double a_n, double tau_n) const {
  switch (kind) {
    case Kind::None:
      return 0.0;
    case Kind::BoundedUniform: {
      if (tau_n >= bound) return 0.0;
      if (tau_n <= 0.0) return kNegInf;
      return std::log(tau_n / bound);
    }
    case Kind::TwoPoint: {
      if (c == 0.0) return 0.0;
      const double p = c / (a_n * a_n);
      if (p >= 1.0) return kNegInf;
      return std::log1p(-p);
    }
    case Kind::Diverging: {
      if (a_n <= 1.0) return kNegInf;
      return std::log1p(-1.0 / a_n);
    }
  }
  return 0.0;
}

bool MarkRule::sample_violation(RngStream& rng, std::uint64_t /*n*/, double a_n,
                                double tau_n) const {
  switch (kind) {
    case Kind::None:
      return false;
    case Kind::BoundedUniform:
      return rng.uniform01() * bound > tau_n;
    case Kind::TwoPoint: {
      if (c == 0.0) return false;
      return rng.bernoulli(std::min(1.0, c / (a_n * a_n)));
    }
    case Kind::Diverging:
      return rng.bernoulli(std::min(1.0, 1.0 / a_n));
  }
  return false;
}

double ScalingRule::a(std::uint64_t n) const {
  switch (kind) {
    case Kind::CubeRoot:
      return std::cbrt(static_cast<double>(n));
    case Kind::FourthRoot:
      return std::pow(static_cast<double>(n), 0.25);
    case Kind::Table:
      for (const auto& [key, val] : table)
        if (key == n) return val;
      throw ConfigError("scaling table has no entry for n = " + std::to_string(n));
  }
  return 1.0;
}

void validate(const CorridorSpec& spec) {
  if (!spec.band.lower || !spec.band.upper || !spec.band.width)
    throw ConfigError("corridor band has unset edge functions");
  for (int i = 0; i <= 1000; ++i) {
    const double s = static_cast<double>(i) / 1000.0;
    const double lo = spec.band.lower(s);
    const double hi = spec.band.upper(s);
    if (!std::isfinite(lo) || !std::isfinite(hi))
      throw ConfigError("corridor band is not finite at s = " + format_double(s));
    const double gap = hi - lo;
    // The band may pinch to a point at s = 1 (profile shapes); everywhere
    // else the ordering must be strict.
    if (i < 1000 ? !(gap > 0.0) : gap < -1e-12)
      throw ConfigError("corridor band violates lower < upper at s = " + format_double(s));
    const double w = spec.band.width(s, s, 1.0 - s);
    if (std::fabs(w - gap) > 1e-9 * (1.0 + std::fabs(gap)))
      throw ConfigError("corridor band width function disagrees with its edges");
  }
  if (!(spec.band.lower(0.0) <= 0.0 && spec.band.upper(0.0) >= 0.0))
    throw ConfigError("corridor band must contain 0 at s = 0");

  if (spec.walk.kind == WalkLaw::Kind::FiniteAtoms) {
    double mean = 0.0;
    for (std::size_t i = 0; i < spec.walk.values.size(); ++i)
      mean += spec.walk.probs[i] * spec.walk.values[i];
    if (std::fabs(mean) > 1e-12) throw ConfigError("corridor walk must be centred");
  }
  if (!(spec.walk.sigma2 > 0.0)) throw ConfigError("corridor walk needs sigma2 > 0");

  if (spec.mark.kind == MarkRule::Kind::BoundedUniform && !(spec.mark.bound > 0.0))
    throw ConfigError("bounded mark rule needs bound > 0");
  if (spec.mark.kind == MarkRule::Kind::TwoPoint && spec.mark.c < 0.0)
    throw ConfigError("two-point mark rule needs c >= 0");

  if (spec.has_endpoint_window && !(spec.y_lo <= spec.y_hi))
    throw ConfigError("endpoint window needs y_lo <= y_hi");

  if (spec.scaling.kind == ScalingRule::Kind::Table) {
    const auto& t = spec.scaling.table;
    if (t.empty()) throw ConfigError("scaling table is empty");
    for (std::size_t i = 1; i < t.size(); ++i)
      if (t[i].first <= t[i - 1].first)
        throw ConfigError("scaling table must be sorted by n without duplicates");
    for (const auto& [n, a] : t)
      if (!(a > 0.0)) throw ConfigError("scaling table values must be positive");
  }
}

EstimateReport dp_corridor(const CorridorSpec& spec, std::uint64_t n, double z) {
  validate(spec);
  if (n == 0) throw ConfigError("corridor horizon n must be >= 1");
  if (!spec.walk.lattice)
    throw UnsupportedFamily("corridor DP requires a lattice walk; use mc_corridor");

  const double a_n = spec.scaling.a(n);
  const double h = spec.walk.spacing;
  const double tau = spec.threshold.tau(n, a_n);
  const double lq = spec.mark.log_q(n, a_n, tau);
  if (lq == kNegInf) return EstimateReport::exact_log(kNegInf);

  const auto row_bounds = [&](double s) {
    const double lo = spec.band.lower(s) * a_n / h;
    const double hi = spec.band.upper(s) * a_n / h;
    return std::pair<long long, long long>{
        static_cast<long long>(std::ceil(lo - kIndexTol)),
        static_cast<long long>(std::floor(hi + kIndexTol))};
  };

  // Start state: z (in a_n units) snapped to the nearest lattice state.
  const long long k0 = std::llround(z * a_n / h);
  {
    const auto [lo0, hi0] = row_bounds(0.0);
    if (k0 < lo0 || k0 > hi0) return EstimateReport::exact_log(kNegInf);
  }

  const std::vector<long>& offs = spec.walk.offsets;
  const std::vector<double>& probs = spec.walk.probs;

  long long lo = k0, hi = k0;
  std::vector<double> rel{1.0}, next;
  double log_offset = 0.0;

  for (std::uint64_t j = 1; j <= n; ++j) {
    const double s = static_cast<double>(j) / static_cast<double>(n);
    auto [nlo, nhi] = row_bounds(s);
    if (j == n && spec.has_endpoint_window) {
      nlo = std::max(nlo, static_cast<long long>(std::ceil(spec.y_lo * a_n / h - kIndexTol)));
      nhi = std::min(nhi, static_cast<long long>(std::floor(spec.y_hi * a_n / h + kIndexTol)));
    }
    if (nlo > nhi) return EstimateReport::exact_log(kNegInf);
    const std::uint64_t width = static_cast<std::uint64_t>(nhi - nlo) + 1;
    if (width > kMaxStatesPerRow)
      throw StateExplosion("corridor row " + std::to_string(j) + " needs " +
                           std::to_string(width) + " states (cap " +
                           std::to_string(kMaxStatesPerRow) + ")");

    next.assign(width, 0.0);
    for (long long k = lo; k <= hi; ++k) {
      const double m = rel[static_cast<std::size_t>(k - lo)];
      if (m == 0.0) continue;
      for (std::size_t a = 0; a < offs.size(); ++a) {
        const long long kp = k + offs[a];
        if (kp >= nlo && kp <= nhi) next[static_cast<std::size_t>(kp - nlo)] += m * probs[a];
      }
    }
    double mx = 0.0;
    for (double v : next) mx = std::max(mx, v);
    if (mx <= 0.0) return EstimateReport::exact_log(kNegInf);
    // Per-row renormalisation keeps the working row in [0, 1]; the scale
    // lives in log_offset, so no intermediate can underflow 1e-300.
    const double inv = 1.0 / mx;
    for (double& v : next) v *= inv;
    log_offset += std::log(mx) + lq;
    rel.swap(next);
    lo = nlo;
    hi = nhi;
  }

  double total = 0.0;
  for (double v : rel) total += v;
  return EstimateReport::exact_log(log_offset + std::log(total));
}

EstimateReport mc_corridor(const CorridorSpec& spec, std::uint64_t n,
                           std::uint64_t replicates, std::uint64_t seed,
                           unsigned threads, double z) {
  validate(spec);
  if (n == 0) throw ConfigError("corridor horizon n must be >= 1");
  if (replicates == 0) throw ConfigError("corridor MC needs replicates >= 1");

  const double a_n = spec.scaling.a(n);
  const double tau = spec.threshold.tau(n, a_n);
  const bool has_marks = spec.mark.kind != MarkRule::Kind::None;

  double start = z * a_n;
  if (spec.walk.lattice)
    start = static_cast<double>(std::llround(start / spec.walk.spacing)) * spec.walk.spacing;
  if (!(spec.band.lower(0.0) * a_n - kBandSlack <= start &&
        start <= spec.band.upper(0.0) * a_n + kBandSlack))
    return EstimateReport::monte_carlo(0.0, 0.0, replicates, seed);

  std::vector<double> cdf;
  if (spec.walk.kind == WalkLaw::Kind::FiniteAtoms) {
    double c = 0.0;
    for (double p : spec.walk.probs) cdf.push_back(c += p);
    cdf.back() = 1.0;
  }
  const double sd = std::sqrt(spec.walk.sigma2);

  struct Slot {
    std::uint64_t hits = 0;
  };
  const Slot total = run_replicates<Slot>(
      replicates, threads,
      [&](std::uint64_t begin, std::uint64_t end, Slot& slot) {
        for (std::uint64_t r = begin; r < end; ++r) {
          RngStream rng = make_stream(seed, kMcStream, r);
          double t = start;
          bool ok = true;
          for (std::uint64_t j = 1; j <= n && ok; ++j) {
            if (spec.walk.kind == WalkLaw::Kind::Gaussian) {
              t += sd * rng.normal();
            } else {
              const double u = rng.uniform01();
              std::size_t i = 0;
              while (i + 1 < cdf.size() && u >= cdf[i]) ++i;
              t += spec.walk.values[i];
            }
            if (has_marks && spec.mark.sample_violation(rng, n, a_n, tau)) {
              ok = false;
              break;
            }
            const double s = static_cast<double>(j) / static_cast<double>(n);
            if (t < spec.band.lower(s) * a_n - kBandSlack ||
                t > spec.band.upper(s) * a_n + kBandSlack)
              ok = false;
            if (ok && j == n && spec.has_endpoint_window &&
                (t < spec.y_lo * a_n - kBandSlack || t > spec.y_hi * a_n + kBandSlack))
              ok = false;
          }
          if (ok) ++slot.hits;
        }
      },
      [](Slot& acc, const Slot& s) { acc.hits += s.hits; });

  const double p = static_cast<double>(total.hits) / static_cast<double>(replicates);
  const double se = std::sqrt(std::max(0.0, p * (1.0 - p) / static_cast<double>(replicates)));
  return EstimateReport::monte_carlo(p, se, replicates, seed);
}

double mogulskii_exponent(const Band& band, double sigma2) {
  if (!(sigma2 > 0.0)) throw ConfigError("mogulskii exponent needs sigma2 > 0");
  const double integral = integrate_tanh_sinh(
      [&](double x, double d0, double d1) {
        const double w = band.width(x, d0, d1);
        return 1.0 / (w * w);
      },
      0.0, 1.0, 1e-13);
  return -0.5 * kPi * kPi * sigma2 * integral;
}

ExponentFit fit_exponent(const CorridorSpec& spec, const std::vector<std::uint64_t>& n_grid,
                         double z) {
  if (n_grid.size() < 4)
    throw ConfigError("exponent fit needs at least 4 grid points");
  for (std::size_t i = 1; i < n_grid.size(); ++i) {
    if (n_grid[i] <= n_grid[i - 1])
      throw ConfigError("exponent fit grid must be strictly increasing");
    const double ratio =
        static_cast<double>(n_grid[i]) / static_cast<double>(n_grid[i - 1]);
    if (ratio < 1.2)
      throw ConfigError("exponent fit grid must grow geometrically (ratio >= 1.2)");
  }

  ExponentFit fit;
  fit.n_grid = n_grid;
  for (std::uint64_t n : n_grid) {
    const double a = spec.scaling.a(n);
    const EstimateReport rep = dp_corridor(spec, n, z);
    if (rep.log_estimate == kNegInf)
      throw ConfigError("corridor probability vanished at n = " + std::to_string(n) +
                        "; the discretised corridor is empty");
    fit.a_n.push_back(a);
    fit.log_p.push_back(rep.log_estimate);
    fit.scaled.push_back(a * a / static_cast<double>(n) * rep.log_estimate);
  }

  std::vector<double> x;
  for (double a : fit.a_n) x.push_back(1.0 / a);
  const AffineFit ls = fit_affine(x, fit.scaled);
  fit.fitted_limit = ls.intercept;
  fit.slope = ls.slope;
  fit.max_abs_residual = ls.max_abs_residual;

  bool decreasing_faster = true;
  double prev_drop = 0.0;
  for (std::size_t i = 1; i < fit.scaled.size(); ++i) {
    const double drop = fit.scaled[i - 1] - fit.scaled[i];
    if (drop <= prev_drop) {
      decreasing_faster = false;
      break;
    }
    prev_drop = drop;
  }
  fit.diverging = decreasing_faster && (fit.scaled.front() - fit.scaled.back() > 2.0);
  return fit;
}

GapResult heavy_tail_gap(const CorridorSpec& spec_nice, const CorridorSpec& spec_heavy,
                         const std::vector<std::uint64_t>& n_grid) {
  for (int i = 0; i <= 100; ++i) {
    const double s = static_cast<double>(i) / 100.0;
    if (std::fabs(spec_nice.band.lower(s) - spec_heavy.band.lower(s)) >
            1e-12 * (1.0 + std::fabs(spec_nice.band.lower(s))) ||
        std::fabs(spec_nice.band.upper(s) - spec_heavy.band.upper(s)) >
            1e-12 * (1.0 + std::fabs(spec_nice.band.upper(s))))
      throw ConfigError("heavy-tail gap requires identical bands");
  }
  if (spec_nice.walk.values != spec_heavy.walk.values ||
      spec_nice.walk.probs != spec_heavy.walk.probs ||
      spec_nice.walk.kind != spec_heavy.walk.kind)
    throw ConfigError("heavy-tail gap requires identical walks");
  if (spec_nice.scaling.kind != spec_heavy.scaling.kind ||
      spec_nice.scaling.table != spec_heavy.scaling.table)
    throw ConfigError("heavy-tail gap requires identical scaling rules");

  GapResult res;
  res.nice = fit_exponent(spec_nice, n_grid);
  res.heavy = fit_exponent(spec_heavy, n_grid);
  res.heavy_diverging = res.heavy.diverging;
  res.gap = res.heavy_diverging ? kNegInf : res.heavy.fitted_limit - res.nice.fitted_limit;
  return res;
}

}  // namespace brw::corridor
