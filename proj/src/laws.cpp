#include "brw/laws.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "brw/errors.hpp"
#include "brw/num_util.hpp"
#include "brw/parallel.hpp"
#include "brw/quad.hpp"

namespace brw::laws {

struct ReproductionLaw::Impl {
  Family family = Family::GaussianBinary;
  std::string id;
  double sigma2 = 0.0;
  double mean_offspring = 0.0;
  GaussianComponent gauss;
  LatticeBinaryData lattice;
  HeavyMixtureData heavy;
  UserTableData table;
};

namespace {

using Impl = ReproductionLaw::Impl;

constexpr std::string_view kMomentStream = "laws.moments";
constexpr std::string_view kTailStream = "laws.tailfn";

double burst_density(double y) { return std::exp(-y) / (y * y * y); }

// Per-child moments of one Gaussian(mu, s2) displacement X:
//   E[exp(-X)], E[X exp(-X)], E[X^2 exp(-X)].
struct GaussMoments {
  double w = 0.0;
  double vw = 0.0;
  double v2w = 0.0;
};

GaussMoments gauss_closed(const GaussianComponent& g) {
  const double g0 = std::exp(-g.mu + 0.5 * g.s2);
  const double d = g.mu - g.s2;
  return {g0, g0 * d, g0 * (d * d + g.s2)};
}

GaussMoments gauss_quadrature(const GaussianComponent& g) {
  const double sd = std::sqrt(g.s2);
  // exp(-x) * pdf is a Gaussian bump centred at mu - s2.
  const double center = g.mu - g.s2;
  const double lo = center - 14.0 * sd;
  const double hi = center + 14.0 * sd;
  QuadOptions opts;
  opts.abs_tol = 1e-13;
  opts.rel_tol = 1e-12;
  auto kernel = [&](double x) { return std::exp(-x) * normal_pdf(x, g.mu, sd); };
  GaussMoments m;
  m.w = integrate(kernel, lo, hi, opts);
  m.vw = integrate([&](double x) { return x * kernel(x); }, lo, hi, opts);
  m.v2w = integrate([&](double x) { return x * x * kernel(x); }, lo, hi, opts);
  return m;
}

GaussMoments gauss_moments(const GaussianComponent& g, MomentRoute route) {
  return route == MomentRoute::ClosedForm ? gauss_closed(g) : gauss_quadrature(g);
}

// E[exp(-X1) 1{exp(-X1) + exp(-X2) >= exp(x)}] for iid X_i ~ N(mu, s2).
// Conditioning on X2 = t: for t <= -x the indicator is certain; otherwise
// the X1 constraint is X1 <= tau(t) = -log(exp(x) - exp(-t)), and tilting by
// exp(-x1) turns the expectation into g0 * P(N(mu - s2, s2) <= tau(t)).
double gauss_child_tail(const GaussianComponent& g, double x) {
  const double sd = std::sqrt(g.s2);
  const double g0 = std::exp(-g.mu + 0.5 * g.s2);
  const double part1 = g0 * normal_cdf(-x, g.mu, sd);
  const double lo = -x;
  const double hi = g.mu + 13.0 * sd;
  if (lo >= hi) return part1;
  const double tilt_mu = g.mu - g.s2;
  auto f = [&](double t) {
    // tau(t) = -x - log(1 - exp(-(t + x))), stable for t just above -x.
    const double tau = -x - std::log(-std::expm1(-(t + x)));
    return normal_pdf(t, g.mu, sd) * normal_cdf(tau, tilt_mu, sd);
  };
  QuadOptions opts;
  opts.abs_tol = 1e-320;
  opts.rel_tol = 1e-9;
  opts.max_depth = 52;
  return part1 + g0 * integrate(f, lo, hi, opts);
}

// E[K; K >= exp(log_threshold)] for the burst size K of a heavy mixture.
// Table suffix while the threshold lies inside the table, analytic
// integral plus half-probability ceiling correction beyond it.
double burst_mean_above_log(const HeavyMixtureData& H, double log_threshold) {
  if (log_threshold > H.log_m_cap) {
    const double p = H.norm_c * integrate_to_inf(burst_density, log_threshold);
    return H.norm_c / (2.0 * log_threshold * log_threshold) + 0.5 * p;
  }
  const double raw = std::exp(log_threshold);
  if (raw <= static_cast<double>(H.m_min)) return H.mean_burst;
  const auto m0 = static_cast<std::uint32_t>(std::ceil(raw - 1e-12));
  if (m0 <= H.m_min) return H.mean_burst;
  if (m0 > H.m_cap) return H.tail_ek;
  const std::size_t idx0 = m0 - H.m_min;
  const double below = idx0 == 0 ? 0.0 : H.k_weighted_cum[idx0 - 1];
  return (H.k_weighted_cum.back() - below) + H.tail_ek;
}

// One sampled brood reduced to its additive statistics; bursts are never
// materialised here, so arbitrarily large K contributes exactly.
struct BroodStats {
  double w1 = 0.0;
  double vw = 0.0;
  double v2w = 0.0;
  double count = 0.0;
};

BroodStats two_child_stats(double d1, double d2) {
  const double e1 = std::exp(-d1);
  const double e2 = std::exp(-d2);
  return {e1 + e2, d1 * e1 + d2 * e2, d1 * d1 * e1 + d2 * d2 * e2, 2.0};
}

BroodStats sample_brood_stats(const Impl& I, RngStream& rng) {
  switch (I.family) {
    case Family::GaussianBinary: {
      const double sd = std::sqrt(I.gauss.s2);
      return two_child_stats(rng.normal(I.gauss.mu, sd), rng.normal(I.gauss.mu, sd));
    }
    case Family::LatticeBinary: {
      const auto& L = I.lattice;
      const double d1 = rng.bernoulli(L.p_up) ? L.h : -L.h;
      const double d2 = rng.bernoulli(L.p_up) ? L.h : -L.h;
      return two_child_stats(d1, d2);
    }
    case Family::HeavyMixture: {
      const auto& H = I.heavy;
      if (!rng.bernoulli(H.epsilon)) {
        const double sd = std::sqrt(H.base.s2);
        return two_child_stats(rng.normal(H.base.mu, sd), rng.normal(H.base.mu, sd));
      }
      const double y = sample_burst_y(H, rng);
      const double k = y <= 36.0 ? std::ceil(std::exp(y)) : std::exp(y);
      const double w1 = k * std::exp(-H.c0);
      return {w1, H.c0 * w1, H.c0 * H.c0 * w1, k};
    }
    case Family::UserTable: {
      const auto& T = I.table;
      const double u = rng.uniform01() * T.entry_cdf.back();
      const auto it = std::upper_bound(T.entry_cdf.begin(), T.entry_cdf.end(), u);
      const std::size_t idx = std::min<std::size_t>(it - T.entry_cdf.begin(),
                                                    T.entries.size() - 1);
      const TableEntry& e = T.entries[idx];
      BroodStats s;
      s.w1 = e.w1;
      s.count = static_cast<double>(e.displacements.size());
      for (double d : e.displacements) {
        const double ed = std::exp(-d);
        s.vw += d * ed;
        s.v2w += d * d * ed;
      }
      return s;
    }
  }
  throw UnsupportedFamily("sample_brood_stats: unknown family");
}

std::shared_ptr<Impl> new_impl(Family f, std::string id) {
  auto impl = std::make_shared<Impl>();
  impl->family = f;
  impl->id = std::move(id);
  return impl;
}

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw ConfigError(std::string(name) + " must be finite");
}

}  // namespace

PointConfiguration PointConfiguration::from_displacements(std::vector<double> d) {
  PointConfiguration c;
  c.displacements = std::move(d);
  double w = 0.0;
  for (double x : c.displacements) w += std::exp(-x);
  c.w1 = w;
  c.xi = w > 0.0 ? std::log(w) : kNegInf;
  return c;
}

Family ReproductionLaw::family() const { return impl_->family; }
const std::string& ReproductionLaw::id() const { return impl_->id; }
double ReproductionLaw::sigma2() const { return impl_->sigma2; }

double ReproductionLaw::lambda_star() const {
  return std::cbrt(1.5 * kPi * kPi * impl_->sigma2);
}

double ReproductionLaw::mean_offspring() const { return impl_->mean_offspring; }

const GaussianComponent& ReproductionLaw::gaussian_data() const {
  if (impl_->family != Family::GaussianBinary) {
    throw UnsupportedFamily("gaussian_data: law '" + impl_->id + "' has no Gaussian pair");
  }
  return impl_->gauss;
}

const LatticeBinaryData& ReproductionLaw::lattice_data() const {
  if (impl_->family != Family::LatticeBinary) {
    throw UnsupportedFamily("lattice_data: law '" + impl_->id + "' is not lattice-binary");
  }
  return impl_->lattice;
}

const HeavyMixtureData& ReproductionLaw::heavy_data() const {
  if (impl_->family != Family::HeavyMixture) {
    throw UnsupportedFamily("heavy_data: law '" + impl_->id + "' is not a heavy mixture");
  }
  return impl_->heavy;
}

const UserTableData& ReproductionLaw::table_data() const {
  if (impl_->family != Family::UserTable) {
    throw UnsupportedFamily("table_data: law '" + impl_->id + "' is not a user table");
  }
  return impl_->table;
}

ReproductionLaw make_gaussian_binary() {
  const double two_ln2 = 2.0 * std::log(2.0);
  auto impl = new_impl(Family::GaussianBinary, "gaussian-binary");
  impl->gauss = {two_ln2, two_ln2};
  impl->sigma2 = two_ln2;  // 2 g0 ((mu - s2)^2 + s2) with g0 = 1/2, mu = s2
  impl->mean_offspring = 2.0;
  return ReproductionLaw(std::move(impl));
}

ReproductionLaw make_gaussian_pair(double mu, double s2) {
  require_finite(mu, "mu");
  require_finite(s2, "s2");
  if (s2 <= 0.0) throw ConfigError("gaussian pair needs s2 > 0");
  auto impl = new_impl(Family::GaussianBinary, "gaussian-pair");
  impl->gauss = {mu, s2};
  const GaussMoments m = gauss_closed(impl->gauss);
  impl->sigma2 = 2.0 * m.v2w;
  impl->mean_offspring = 2.0;
  return ReproductionLaw(std::move(impl));
}

ReproductionLaw make_lattice_binary() {
  auto impl = new_impl(Family::LatticeBinary, "lattice-binary");
  LatticeBinaryData& L = impl->lattice;
  const double r3 = std::sqrt(3.0);
  L.h = std::acosh(2.0);  // cosh(h) = 2, exp(+-h) = 2 +- sqrt(3)
  L.p_up = (2.0 + r3) / 4.0;
  L.p_down = (2.0 - r3) / 4.0;
  const double ln2 = std::log(2.0);
  // Joint atoms of (spine displacement, sibling, xi) under the size-biased
  // brood law with the spine child picked proportionally to exp(-V):
  // P(brood) * exp(-spine displacement), summed over the two child slots.
  L.spine_atoms = {{
      {L.h, L.h, ln2 - L.h, (2.0 + r3) / 8.0},
      {L.h, -L.h, 2.0 * ln2, (2.0 - r3) / 8.0},
      {-L.h, L.h, 2.0 * ln2, (2.0 + r3) / 8.0},
      {-L.h, -L.h, ln2 + L.h, (2.0 - r3) / 8.0},
  }};
  impl->sigma2 = L.h * L.h;
  impl->mean_offspring = 2.0;
  return ReproductionLaw(std::move(impl));
}

ReproductionLaw make_heavy_mixture(double epsilon, double y_min, double c0) {
  require_finite(epsilon, "epsilon");
  require_finite(y_min, "y_min");
  require_finite(c0, "c0");
  if (epsilon <= 0.0 || epsilon >= 1.0) throw ConfigError("epsilon must lie in (0, 1)");
  if (y_min <= 0.0 || y_min > 12.0) throw ConfigError("y_min must lie in (0, 12]");
  if (c0 <= 0.0 || c0 > 60.0) throw ConfigError("c0 must lie in (0, 60]");

  auto impl = new_impl(Family::HeavyMixture, "heavy-mixture");
  HeavyMixtureData& H = impl->heavy;
  H.epsilon = epsilon;
  H.y_min = y_min;
  H.c0 = c0;
  QuadOptions tight;
  tight.abs_tol = 1e-300;
  tight.rel_tol = 1e-13;
  H.norm_c = 1.0 / integrate_to_inf(burst_density, y_min, tight);

  // Burst-size table: P(K = m) is the density mass on (log(m-1), log m].
  // Panels are short enough that a single GK15 application is converged.
  H.m_min = static_cast<std::uint32_t>(std::ceil(std::exp(y_min) - 1e-12));
  if (H.m_min < 2) H.m_min = 2;
  H.m_cap = std::max<std::uint32_t>(std::uint32_t{1} << 16, H.m_min * 4);
  H.log_m_cap = std::log(static_cast<double>(H.m_cap));
  const std::size_t n_panels = H.m_cap - H.m_min + 1;
  H.k_mass.resize(n_panels);
  H.k_cum.resize(n_panels);
  H.k_weighted_cum.resize(n_panels);
  double lower = y_min;
  double cum = 0.0;
  double wcum = 0.0;
  for (std::size_t i = 0; i < n_panels; ++i) {
    const double m = static_cast<double>(H.m_min + i);
    const double upper = std::log(m);
    const double mass =
        std::max(0.0, H.norm_c * integrate_panel(burst_density, lower, upper));
    H.k_mass[i] = mass;
    cum += mass;
    wcum += m * mass;
    H.k_cum[i] = cum;
    H.k_weighted_cum[i] = wcum;
    lower = upper;
  }
  H.tail_p = H.norm_c * integrate_to_inf(burst_density, H.log_m_cap, tight);
  // E[K; K > m_cap]: K = ceil(exp Y) integrates to C / (2 log^2 m_cap) for
  // the exp(Y) part, plus about half a unit of ceiling offset per draw.
  H.tail_ek = H.norm_c / (2.0 * H.log_m_cap * H.log_m_cap) + 0.5 * H.tail_p;
  H.mean_burst = H.k_weighted_cum.back() + H.tail_ek;
  H.burst_w1 = H.mean_burst * std::exp(-c0);
  H.spine_burst_prob = epsilon * H.burst_w1;

  // Critical tuning of the Gaussian component.  With G = 2 (1 - eps) g0 the
  // two boundary constraints are G = 1 - eps b0 and (mu - s2) G = -eps c0 b0,
  // which pin g0 = exp(-mu + s2/2) and mu - s2 in closed form.
  const double G = 1.0 - epsilon * H.burst_w1;
  if (G <= 0.0) {
    throw NoBoundarySolution(
        "heavy mixture: burst weight epsilon*E[K]*exp(-c0) >= 1 leaves the "
        "Gaussian component no mass to carry");
  }
  const double g0 = G / (2.0 * (1.0 - epsilon));
  const double d = -epsilon * c0 * H.burst_w1 / G;  // mu - s2
  const double s2 = -2.0 * (d + std::log(g0));
  if (s2 <= 0.0) {
    throw NoBoundarySolution(
        "heavy mixture: centering would require non-positive Gaussian variance");
  }
  H.base = {d + s2, s2};

  impl->sigma2 =
      2.0 * (1.0 - epsilon) * gauss_closed(H.base).v2w + epsilon * c0 * c0 * H.burst_w1;
  impl->mean_offspring = 2.0 * (1.0 - epsilon) + epsilon * H.mean_burst;
  return ReproductionLaw(std::move(impl));
}

ReproductionLaw make_user_table(const std::vector<UserTableSpec>& entries) {
  if (entries.empty()) throw ConfigError("user table needs at least one entry");
  auto impl = new_impl(Family::UserTable, "user-table");
  UserTableData& T = impl->table;
  double total_p = 0.0;
  double sigma2 = 0.0;
  double mean_children = 0.0;
  for (const UserTableSpec& spec : entries) {
    require_finite(spec.prob, "entry probability");
    if (spec.prob < 0.0) throw ConfigError("entry probabilities must be >= 0");
    total_p += spec.prob;
    TableEntry e;
    e.prob = spec.prob;
    e.displacements = spec.displacements;
    std::vector<double> child_cdf;
    child_cdf.reserve(e.displacements.size());
    double w = 0.0;
    for (double dv : e.displacements) {
      require_finite(dv, "displacement");
      w += std::exp(-dv);
      child_cdf.push_back(w);
      sigma2 += spec.prob * dv * dv * std::exp(-dv);
    }
    e.w1 = w;
    e.xi = w > 0.0 ? std::log(w) : kNegInf;
    mean_children += spec.prob * static_cast<double>(e.displacements.size());
    T.entries.push_back(std::move(e));
    T.spine_child_cdf.push_back(std::move(child_cdf));
  }
  if (std::abs(total_p - 1.0) > 1e-12) {
    throw ConfigError("user table probabilities must sum to 1");
  }
  double cum = 0.0;
  double tilted = 0.0;
  for (const TableEntry& e : T.entries) {
    cum += e.prob;
    tilted += e.prob * e.w1;
    T.entry_cdf.push_back(cum);
    T.tilted_entry_cdf.push_back(tilted);
  }
  impl->sigma2 = sigma2;
  impl->mean_offspring = mean_children;
  return ReproductionLaw(std::move(impl));
}

BoundaryResiduals boundary_residuals(const ReproductionLaw& law, MomentRoute route) {
  const Impl& I = law.impl();
  switch (I.family) {
    case Family::GaussianBinary: {
      const GaussMoments m = gauss_moments(I.gauss, route);
      return {2.0 * m.w - 1.0, 2.0 * m.vw};
    }
    case Family::LatticeBinary: {
      // Finite atoms; both routes evaluate the same exact sums.
      const auto& L = I.lattice;
      const double eh = std::exp(L.h);
      const double w = 2.0 * (L.p_up / eh + L.p_down * eh);
      const double vw = 2.0 * L.h * (L.p_up / eh - L.p_down * eh);
      return {w - 1.0, vw};
    }
    case Family::HeavyMixture: {
      const auto& H = I.heavy;
      const GaussMoments m = gauss_moments(H.base, route);
      const double w = 2.0 * (1.0 - H.epsilon) * m.w + H.epsilon * H.burst_w1;
      const double vw =
          2.0 * (1.0 - H.epsilon) * m.vw + H.epsilon * H.c0 * H.burst_w1;
      return {w - 1.0, vw};
    }
    case Family::UserTable: {
      double w = 0.0;
      double vw = 0.0;
      for (const TableEntry& e : I.table.entries) {
        w += e.prob * e.w1;
        for (double dv : e.displacements) vw += e.prob * dv * std::exp(-dv);
      }
      return {w - 1.0, vw};
    }
  }
  throw UnsupportedFamily("boundary_residuals: unknown family");
}

double sigma_squared(const ReproductionLaw& law, MomentRoute route) {
  const Impl& I = law.impl();
  switch (I.family) {
    case Family::GaussianBinary:
      return 2.0 * gauss_moments(I.gauss, route).v2w;
    case Family::LatticeBinary:
      // V^2 = h^2 identically, so E[sum V^2 e^{-V}] = h^2 E[sum e^{-V}] = h^2.
      return I.lattice.h * I.lattice.h;
    case Family::HeavyMixture: {
      const auto& H = I.heavy;
      return 2.0 * (1.0 - H.epsilon) * gauss_moments(H.base, route).v2w +
             H.epsilon * H.c0 * H.c0 * H.burst_w1;
    }
    case Family::UserTable:
      return I.sigma2;
  }
  throw UnsupportedFamily("sigma_squared: unknown family");
}

EstimateReport integrability_functional(const ReproductionLaw& law, double x) {
  const Impl& I = law.impl();
  const double x2 = x * x;
  switch (I.family) {
    case Family::GaussianBinary:
      return EstimateReport::exact_value(x2 * 2.0 * gauss_child_tail(I.gauss, x));
    case Family::LatticeBinary: {
      const auto& L = I.lattice;
      const double eh = std::exp(L.h);
      const double ln2 = std::log(2.0);
      const struct {
        double xi, w1, p;
      } atoms[3] = {
          {ln2 - L.h, 2.0 / eh, L.p_up * L.p_up},
          {2.0 * ln2, 4.0, 2.0 * L.p_up * L.p_down},
          {ln2 + L.h, 2.0 * eh, L.p_down * L.p_down},
      };
      double s = 0.0;
      for (const auto& a : atoms)
        if (a.xi >= x) s += a.p * a.w1;
      return EstimateReport::exact_value(x2 * s);
    }
    case Family::HeavyMixture: {
      const auto& H = I.heavy;
      const double gauss_part = 2.0 * (1.0 - H.epsilon) * gauss_child_tail(H.base, x);
      // Burst: log W_1 = log K - c0, so the constraint is log K >= x + c0.
      const double burst_part =
          H.epsilon * std::exp(-H.c0) * burst_mean_above_log(H, x + H.c0);
      return EstimateReport::exact_value(x2 * (gauss_part + burst_part));
    }
    case Family::UserTable: {
      double s = 0.0;
      for (const TableEntry& e : I.table.entries)
        if (e.xi >= x) s += e.prob * e.w1;
      return EstimateReport::exact_value(x2 * s);
    }
  }
  throw UnsupportedFamily("integrability_functional: unknown family");
}

EstimateReport integrability_functional_mc(const ReproductionLaw& law, double x,
                                           std::uint64_t draws, std::uint64_t seed,
                                           unsigned threads) {
  const Impl& I = law.impl();
  const double x2 = x * x;
  auto total = run_replicates<MomentAccumulator>(
      draws, threads,
      [&](std::uint64_t begin, std::uint64_t end, MomentAccumulator& acc) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng = make_stream(seed, kTailStream, i);
          const BroodStats s = sample_brood_stats(I, rng);
          const double lw = s.w1 > 0.0 ? std::log(s.w1) : kNegInf;
          acc.add(lw >= x ? x2 * s.w1 : 0.0);
        }
      },
      [](MomentAccumulator& t, const MomentAccumulator& s) { t.merge(s); });
  return EstimateReport::monte_carlo(total.mean(), total.se_mean(), draws, seed);
}

void sample_displacements(const ReproductionLaw& law, RngStream& rng,
                          std::vector<double>& out) {
  const Impl& I = law.impl();
  out.clear();
  switch (I.family) {
    case Family::GaussianBinary: {
      const double sd = std::sqrt(I.gauss.s2);
      out.push_back(rng.normal(I.gauss.mu, sd));
      out.push_back(rng.normal(I.gauss.mu, sd));
      return;
    }
    case Family::LatticeBinary: {
      const auto& L = I.lattice;
      out.push_back(rng.bernoulli(L.p_up) ? L.h : -L.h);
      out.push_back(rng.bernoulli(L.p_up) ? L.h : -L.h);
      return;
    }
    case Family::HeavyMixture: {
      const auto& H = I.heavy;
      if (!rng.bernoulli(H.epsilon)) {
        const double sd = std::sqrt(H.base.s2);
        out.push_back(rng.normal(H.base.mu, sd));
        out.push_back(rng.normal(H.base.mu, sd));
        return;
      }
      const double y = sample_burst_y(H, rng);
      if (y > 36.0 || std::ceil(std::exp(y)) > static_cast<double>(kMaxBroodSize)) {
        throw BudgetExceeded("burst brood exceeds the materialisable size cap",
                             kMaxBroodSize);
      }
      out.assign(static_cast<std::size_t>(std::ceil(std::exp(y))), H.c0);
      return;
    }
    case Family::UserTable: {
      const auto& T = I.table;
      const double u = rng.uniform01() * T.entry_cdf.back();
      const auto it = std::upper_bound(T.entry_cdf.begin(), T.entry_cdf.end(), u);
      const std::size_t idx = std::min<std::size_t>(it - T.entry_cdf.begin(),
                                                    T.entries.size() - 1);
      const TableEntry& e = T.entries[idx];
      out.assign(e.displacements.begin(), e.displacements.end());
      return;
    }
  }
  throw UnsupportedFamily("sample_displacements: unknown family");
}

PointConfiguration sample_offspring(const ReproductionLaw& law, RngStream& rng) {
  std::vector<double> d;
  sample_displacements(law, rng, d);
  return PointConfiguration::from_displacements(std::move(d));
}

McBoundaryMoments mc_boundary_moments(const ReproductionLaw& law, std::uint64_t draws,
                                      std::uint64_t seed, unsigned threads) {
  const Impl& I = law.impl();
  struct Slot {
    MomentAccumulator w1, vw, v2w;
  };
  const Slot total = run_replicates<Slot>(
      draws, threads,
      [&](std::uint64_t begin, std::uint64_t end, Slot& slot) {
        for (std::uint64_t i = begin; i < end; ++i) {
          RngStream rng = make_stream(seed, kMomentStream, i);
          const BroodStats s = sample_brood_stats(I, rng);
          slot.w1.add(s.w1);
          slot.vw.add(s.vw);
          slot.v2w.add(s.v2w);
        }
      },
      [](Slot& t, const Slot& s) {
        t.w1.merge(s.w1);
        t.vw.merge(s.vw);
        t.v2w.merge(s.v2w);
      });
  McBoundaryMoments out;
  out.mean_w1 = total.w1.mean();
  out.se_w1 = total.w1.se_mean();
  out.mean_vw = total.vw.mean();
  out.se_vw = total.vw.se_mean();
  out.mean_v2w = total.v2w.mean();
  out.se_v2w = total.v2w.se_mean();
  out.draws = draws;
  return out;
}

double sample_burst_y(const HeavyMixtureData& H, RngStream& rng) {
  const double table_mass = H.k_cum.back();
  const double total = table_mass + H.tail_p;
  const double u = rng.uniform01() * total;
  if (u >= table_mass) {
    // Tail beyond log m_cap: shifted-exponential proposal, accepted with
    // probability (L/y)^3, which makes the accepted density C exp(-y) y^-3.
    const double L = H.log_m_cap;
    for (;;) {
      const double y = L + rng.exponential();
      const double r = (L / y) * (L / y) * (L / y);
      if (rng.uniform01() < r) return y;
    }
  }
  auto it = std::upper_bound(H.k_cum.begin(), H.k_cum.end(), u);
  std::size_t idx = std::min<std::size_t>(it - H.k_cum.begin(), H.k_mass.size() - 1);
  while (H.k_mass[idx] <= 0.0 && idx + 1 < H.k_mass.size()) ++idx;
  const double lo =
      idx == 0 ? H.y_min : std::log(static_cast<double>(H.m_min + idx - 1));
  const double hi = std::log(static_cast<double>(H.m_min + idx));
  const double cum_lo = idx == 0 ? 0.0 : H.k_cum[idx - 1];
  // Invert the within-panel CDF by Newton from a linear first guess.
  const double target = (u - cum_lo) / H.norm_c;
  const double panel_mass = H.k_mass[idx] / H.norm_c;
  double frac = panel_mass > 0.0 ? target / panel_mass : 0.5;
  frac = std::clamp(frac, 0.0, 1.0);
  double y = lo + (hi - lo) * frac;
  for (int step = 0; step < 4; ++step) {
    const double f = integrate_panel(burst_density, lo, y) - target;
    y -= f / burst_density(y);
    y = std::clamp(y, lo, hi);
  }
  return y;
}

SizeBiasedBurst sample_burst_size_biased(const HeavyMixtureData& H, RngStream& rng) {
  const double table_weight = H.k_weighted_cum.back();
  const double total = table_weight + H.tail_ek;
  const double u = rng.uniform01() * total;
  if (u < table_weight) {
    auto it = std::upper_bound(H.k_weighted_cum.begin(), H.k_weighted_cum.end(), u);
    const std::size_t idx =
        std::min<std::size_t>(it - H.k_weighted_cum.begin(), H.k_mass.size() - 1);
    const double m = static_cast<double>(H.m_min + idx);
    return {std::log(m) - H.c0, m};
  }
  // Tail: m P(K = m) is proportional to the y^-3 panel mass, so the exact
  // inverse-CDF draw from y^-3 on (L, inf) only needs a ceiling-offset
  // rejection with acceptance m exp(-y) / (1 + 1/m_cap).
  const double L = H.log_m_cap;
  const double bound = 1.0 + 1.0 / static_cast<double>(H.m_cap);
  for (;;) {
    const double y = L / std::sqrt(1.0 - rng.uniform01());
    if (y <= 36.0) {
      const double m = std::ceil(std::exp(y));
      if (rng.uniform01() * bound < m * std::exp(-y)) return {std::log(m) - H.c0, m};
    } else {
      if (rng.uniform01() * bound < 1.0) return {y - H.c0, std::exp(y)};
    }
  }
}

double heavy_tail_limit(const ReproductionLaw& law) {
  const HeavyMixtureData& H = law.heavy_data();
  return H.epsilon * H.norm_c * std::exp(-H.c0) / 2.0;
}

namespace {

double offspring_pgf(const Impl& I, double q) {
  switch (I.family) {
    case Family::GaussianBinary:
    case Family::LatticeBinary:
      return q * q;
    case Family::HeavyMixture: {
      const auto& H = I.heavy;
      double burst;
      if (q >= 1.0) {
        burst = 1.0;
      } else {
        burst = 0.0;
        double qpow = std::pow(q, static_cast<double>(H.m_min));
        for (std::size_t i = 0; i < H.k_mass.size() && qpow > 0.0; ++i) {
          burst += H.k_mass[i] * qpow;
          qpow *= q;
        }
        burst += H.tail_p * std::pow(q, static_cast<double>(H.m_cap));
      }
      return (1.0 - H.epsilon) * q * q + H.epsilon * burst;
    }
    case Family::UserTable: {
      double s = 0.0;
      for (const TableEntry& e : I.table.entries) {
        s += e.prob * std::pow(q, static_cast<double>(e.displacements.size()));
      }
      return s;
    }
  }
  throw UnsupportedFamily("offspring_pgf: unknown family");
}

}  // namespace

double extinction_probability(const ReproductionLaw& law) {
  // Iterating the generating function from 0 converges monotonically to the
  // smallest fixed point.
  double q = 0.0;
  for (int it = 0; it < 200000; ++it) {
    const double next = offspring_pgf(law.impl(), q);
    if (std::abs(next - q) < 1e-15) return next;
    q = next;
  }
  return q;
}

double extinction_probability_by_generation(const ReproductionLaw& law, std::uint64_t n) {
  double q = 0.0;
  for (std::uint64_t g = 0; g < n; ++g) q = offspring_pgf(law.impl(), q);
  return q;
}

}  // namespace brw::laws
