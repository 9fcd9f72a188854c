#pragma once

// Small numeric helpers shared across modules.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace brw {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.141592653589793238462643383279503;

inline double normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * kPi));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_cdf(double x, double mean, double sd) {
  return normal_cdf((x - mean) / sd);
}

// log(exp(a) + exp(b)) without overflow; tolerates -inf arguments.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-(a > b ? a - b : b - a)));
}

inline double log_sum_exp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v)
    if (x > m) m = x;
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

struct AffineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double max_abs_residual = 0.0;
};

// Ordinary least squares fit y ~ intercept + slope * x.
inline AffineFit fit_affine(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / static_cast<double>(n);
  const double my = sy / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  AffineFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.intercept = my - fit.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    fit.max_abs_residual = std::max(fit.max_abs_residual, std::abs(r));
  }
  return fit;
}

// Streaming mean / variance accumulator (Welford) with standard errors.
class MomentAccumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    const double d2 = x - mean_;
    m2_ += d * d2;
    m4_raw_ += x * x * x * x;
    m3_raw_ += x * x * x;
    m2_raw_ += x * x;
    m1_raw_ += x;
  }

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }

  double variance() const {
    return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
  }

  double se_mean() const {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

  // Standard error of the sample variance from the sample fourth central
  // moment; clamped at zero for near-degenerate samples.
  double se_variance() const {
    if (n_ < 2) return 0.0;
    const double n = static_cast<double>(n_);
    const double mu = m1_raw_ / n;
    const double c2 = m2_raw_ / n - mu * mu;
    const double c4 = m4_raw_ / n - 4.0 * mu * m3_raw_ / n + 6.0 * mu * mu * m2_raw_ / n -
                      3.0 * mu * mu * mu * mu;
    const double var_of_var = (c4 - c2 * c2 * (n - 3.0) / (n - 1.0)) / n;
    return var_of_var > 0.0 ? std::sqrt(var_of_var) : 0.0;
  }

  void merge(const MomentAccumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
    const double delta = o.mean_ - mean_;
    const double nt = na + nb;
    m2_ += o.m2_ + delta * delta * na * nb / nt;
    mean_ += delta * nb / nt;
    n_ += o.n_;
    m1_raw_ += o.m1_raw_;
    m2_raw_ += o.m2_raw_;
    m3_raw_ += o.m3_raw_;
    m4_raw_ += o.m4_raw_;
  }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double m1_raw_ = 0.0, m2_raw_ = 0.0, m3_raw_ = 0.0, m4_raw_ = 0.0;
};

}  // namespace brw
