#pragma once

// Reproduction laws for the branching walk.
//
// Each law describes the point process of child displacements born to one
// particle.  All built-in families are tuned to the critical normalisation
//   E[sum_children exp(-V)] = 1   and   E[sum_children V exp(-V)] = 0,
// under which the additive martingale W_1 = sum exp(-V) has mean one and the
// associated random walk is centred.  Law objects are immutable and cheap to
// copy; derived constants and sampling tables are computed once at
// construction.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "brw/estimate.hpp"
#include "brw/rng.hpp"

namespace brw::laws {

// One sampled brood: child displacements relative to the parent, plus the
// derived weight w1 = sum exp(-d) and its log, xi.  Empty broods (death)
// have w1 = 0 and xi = -inf.
struct PointConfiguration {
  std::vector<double> displacements;
  double w1 = 0.0;
  double xi = 0.0;

  static PointConfiguration from_displacements(std::vector<double> d);
};

enum class Family { GaussianBinary, LatticeBinary, HeavyMixture, UserTable };

// Parameters of two iid Gaussian(mu, s2) children.
struct GaussianComponent {
  double mu = 0.0;
  double s2 = 0.0;
};

// Joint atom of one step of the size-biased spine walk: the spine child's
// displacement, the displacement of its sibling, the brood statistic xi and
// the atom probability.
struct SpineAtom {
  double displacement = 0.0;
  double sibling = 0.0;
  double xi = 0.0;
  double prob = 0.0;
};

// Two independent children on {+h, -h} with P(+h) = e^h/4, P(-h) = e^{-h}/4
// and cosh(h) = 2.  The four spine atoms are exact closed forms.
struct LatticeBinaryData {
  double h = 0.0;
  double p_up = 0.0;
  double p_down = 0.0;
  std::array<SpineAtom, 4> spine_atoms{};
};

struct TableEntry {
  double prob = 0.0;
  std::vector<double> displacements;
  double w1 = 0.0;
  double xi = 0.0;
};

struct UserTableData {
  std::vector<TableEntry> entries;
  // Sampling caches: plain and w1-weighted entry selection, and the
  // exp(-d)-proportional child choice within each entry.
  std::vector<double> entry_cdf;
  std::vector<double> tilted_entry_cdf;
  std::vector<std::vector<double>> spine_child_cdf;
};

// Mixture: with probability 1-epsilon two iid Gaussian children from a
// retuned base component; with probability epsilon a burst of K = ceil(e^Y)
// children, all displaced by c0, where Y has density proportional to
// exp(-y) y^{-3} on [y_min, inf).  The burst gives log(W_1) a tail of order
// x^{-2}, which is exactly the integrability threshold of interest.
struct HeavyMixtureData {
  double epsilon = 0.0;
  double y_min = 0.0;
  double c0 = 0.0;

  double norm_c = 0.0;      // normaliser of the Y density
  double mean_burst = 0.0;  // E[K]
  double burst_w1 = 0.0;    // b0 = E[K] exp(-c0) = E[W_1 | burst]
  double spine_burst_prob = 0.0;  // epsilon * b0
  GaussianComponent base;         // retuned so the mixture is critical

  // Per-count table for m in [m_min, m_cap]: P(K = m), its cumulative, and
  // the cumulative of m * P(K = m) used by the size-biased sampler and by
  // truncated-moment queries.  Beyond m_cap the tail is handled analytically.
  std::uint32_t m_min = 0;
  std::uint32_t m_cap = 0;
  std::vector<double> k_mass;
  std::vector<double> k_cum;
  std::vector<double> k_weighted_cum;
  double log_m_cap = 0.0;
  double tail_p = 0.0;   // P(Y > log m_cap)
  double tail_ek = 0.0;  // E[K; Y > log m_cap]
};

class ReproductionLaw {
 public:
  Family family() const;
  const std::string& id() const;

  double sigma2() const;          // E[sum V^2 exp(-V)], cached analytic value
  double lambda_star() const;     // (3 pi^2 sigma2 / 2)^{1/3}
  double mean_offspring() const;  // expected brood size

  const GaussianComponent& gaussian_data() const;
  const LatticeBinaryData& lattice_data() const;
  const HeavyMixtureData& heavy_data() const;
  const UserTableData& table_data() const;

  struct Impl;
  explicit ReproductionLaw(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  const Impl& impl() const { return *impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
};

ReproductionLaw make_gaussian_binary();
ReproductionLaw make_lattice_binary();
ReproductionLaw make_heavy_mixture(double epsilon, double y_min, double c0);

struct UserTableSpec {
  double prob = 0.0;
  std::vector<double> displacements;
};
ReproductionLaw make_user_table(const std::vector<UserTableSpec>& entries);

// Mistuned Gaussian variant for diagnostics (residual checks on laws that
// are deliberately off the critical manifold).
ReproductionLaw make_gaussian_pair(double mu, double s2);

enum class MomentRoute { ClosedForm, Quadrature };

struct BoundaryResiduals {
  double martingale = 0.0;  // E[sum exp(-V)] - 1
  double centering = 0.0;   // E[sum V exp(-V)]
};

BoundaryResiduals boundary_residuals(const ReproductionLaw& law,
                                     MomentRoute route = MomentRoute::ClosedForm);

double sigma_squared(const ReproductionLaw& law,
                     MomentRoute route = MomentRoute::ClosedForm);

// x^2 * E[W_1; log W_1 >= x], evaluated deterministically (exact sums or
// quadrature).  Tends to 0 iff the brood-size tail is light enough; for the
// heavy mixture it converges to the positive constant epsilon*C*exp(-c0)/2.
EstimateReport integrability_functional(const ReproductionLaw& law, double x);

// Same functional by Monte Carlo, as an independent cross-check.
EstimateReport integrability_functional_mc(const ReproductionLaw& law, double x,
                                           std::uint64_t draws, std::uint64_t seed,
                                           unsigned threads = 1);

PointConfiguration sample_offspring(const ReproductionLaw& law, RngStream& rng);

// Same draw, written into a reusable buffer (cleared first): the allocation-
// free kernel behind sample_offspring for hot simulation loops.  Both entry
// points consume the stream identically.
void sample_displacements(const ReproductionLaw& law, RngStream& rng,
                          std::vector<double>& out);

// Monte Carlo means of W_1 and sum V exp(-V) (and sum V^2 exp(-V)) over
// sampled broods, with standard errors; used to validate the closed forms.
struct McBoundaryMoments {
  double mean_w1 = 0.0, se_w1 = 0.0;
  double mean_vw = 0.0, se_vw = 0.0;
  double mean_v2w = 0.0, se_v2w = 0.0;
  std::uint64_t draws = 0;
};
McBoundaryMoments mc_boundary_moments(const ReproductionLaw& law, std::uint64_t draws,
                                      std::uint64_t seed, unsigned threads = 1);

// Smallest fixed point of the offspring generating function (extinction
// probability of the embedded Galton-Watson process).
double extinction_probability(const ReproductionLaw& law);

// Probability that the population is extinct by generation n.
double extinction_probability_by_generation(const ReproductionLaw& law, std::uint64_t n);

// Heavy-mixture internals, shared with the spine sampler.

// Draw Y from the density norm_c * exp(-y) y^{-3} on [y_min, inf): table
// panel + Newton inversion below m_cap, envelope rejection above.
double sample_burst_y(const HeavyMixtureData& d, RngStream& rng);

struct SizeBiasedBurst {
  double xi = 0.0;     // log(K) - c0 for the drawn burst size K
  double count = 0.0;  // K as a double; may exceed any materialisable size
};
// Draw a burst size K with probability proportional to K * P(K = k)
// (the spine's size-biased brood law, which has infinite mean).
SizeBiasedBurst sample_burst_size_biased(const HeavyMixtureData& d, RngStream& rng);

// Limit of x^2 E[W_1; log W_1 >= x] for the heavy mixture:
// epsilon * norm_c * exp(-c0) / 2.
double heavy_tail_limit(const ReproductionLaw& law);

// Largest brood materialised by samplers before reporting BudgetExceeded.
inline constexpr std::uint64_t kMaxBroodSize = std::uint64_t{1} << 26;

}  // namespace brw::laws
