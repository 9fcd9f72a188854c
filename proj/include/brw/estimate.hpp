#pragma once

#include <cmath>
#include <cstdint>

namespace brw {

// Common return shape for point estimates.  Monte Carlo results carry a
// standard error and exact = false; deterministic results (enumeration,
// transfer-matrix, quadrature) set exact = true and se = 0.  log_estimate is
// always meaningful, including when the linear value underflows.
struct EstimateReport {
  double estimate = 0.0;
  double log_estimate = 0.0;
  double se = 0.0;
  std::uint64_t replicates = 0;
  std::uint64_t seed = 0;
  bool exact = false;

  static EstimateReport exact_value(double v) {
    EstimateReport r;
    r.estimate = v;
    r.log_estimate = v > 0.0 ? std::log(v) : -INFINITY;
    r.exact = true;
    return r;
  }

  static EstimateReport exact_log(double log_v) {
    EstimateReport r;
    r.estimate = std::exp(log_v);
    r.log_estimate = log_v;
    r.exact = true;
    return r;
  }

  static EstimateReport monte_carlo(double mean, double se, std::uint64_t replicates,
                                    std::uint64_t seed) {
    EstimateReport r;
    r.estimate = mean;
    r.log_estimate = mean > 0.0 ? std::log(mean) : -INFINITY;
    r.se = se;
    r.replicates = replicates;
    r.seed = seed;
    return r;
  }
};

}  // namespace brw
