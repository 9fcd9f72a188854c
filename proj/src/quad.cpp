#include "brw/quad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace brw {
namespace {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (positive half).
constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct GkResult {
  double value;
  double error;
};

GkResult gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double d = 0.5 * (b - a);
  const double fc = f(c);
  double res_g = fc * kWg[3];
  double res_k = fc * kWgk[7];
  for (int i = 0; i < 7; ++i) {
    const double x = d * kXgk[i];
    const double f1 = f(c - x);
    const double f2 = f(c + x);
    res_k += kWgk[i] * (f1 + f2);
    if (i % 2 == 1) res_g += kWg[i / 2] * (f1 + f2);
  }
  res_g *= d;
  res_k *= d;
  double err = std::abs(res_k - res_g);
  // Sharpened error estimate, as in QUADPACK.
  if (err > 0.0) err = std::pow(200.0 * err, 1.5) * std::min(1.0, 1.0 / (200.0 * 200.0));
  err = std::max(err, std::abs(res_k) * 1e-16);
  return {res_k, err};
}

double adaptive(const std::function<double(double)>& f, double a, double b, double tol,
                double rel_tol, int depth) {
  const GkResult r = gk15(f, a, b);
  if (r.error <= std::max(tol, rel_tol * std::abs(r.value)) || r.error == 0.0) {
    return r.value;
  }
  if (depth <= 0) {
    throw QuadratureFailure("adaptive quadrature did not converge on [" +
                            std::to_string(a) + ", " + std::to_string(b) + "]");
  }
  const double c = 0.5 * (a + b);
  return adaptive(f, a, c, 0.5 * tol, rel_tol, depth - 1) +
         adaptive(f, c, b, 0.5 * tol, rel_tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadOptions& opts) {
  if (a == b) return 0.0;
  return adaptive(f, a, b, opts.abs_tol, opts.rel_tol, opts.max_depth);
}

double integrate_panel(const std::function<double(double)>& f, double a, double b) {
  if (a == b) return 0.0;
  return gk15(f, a, b).value;
}

double integrate_to_inf(const std::function<double(double)>& f, double a,
                        const QuadOptions& opts) {
  // x = a + t/(1-t) maps [0,1) onto [a,inf); the integrand must decay fast
  // enough that g(t) -> 0 as t -> 1.
  auto g = [&](double t) {
    if (t >= 1.0) return 0.0;
    const double om = 1.0 - t;
    const double x = a + t / om;
    const double v = f(x);
    return v / (om * om);
  };
  return adaptive(g, 0.0, 1.0, opts.abs_tol, opts.rel_tol, opts.max_depth);
}

double integrate_tanh_sinh(
    const std::function<double(double x, double dist_a, double dist_b)>& f,
    double a, double b, double rel_tol) {
  const double d = 0.5 * (b - a);
  constexpr double kHalfPi = 1.5707963267948966;
  constexpr double kTMax = 4.8;

  // Contribution of the abscissa at parameter t (weight included).
  auto term = [&](double t) {
    const double u = kHalfPi * std::sinh(t);
    const double ch = std::cosh(u);
    const double w = kHalfPi * std::cosh(t) / (ch * ch);
    if (w < 1e-320) return 0.0;
    // 1 -+ tanh(u) computed stably on the relevant side.
    const double e2 = std::exp(-2.0 * std::abs(u));
    const double one_minus = 2.0 * e2 / (1.0 + e2);  // 1 - |tanh(u)|
    double x, da, db;
    if (u >= 0.0) {
      db = d * one_minus;
      da = (b - a) - db;
      x = b - db;
    } else {
      da = d * one_minus;
      db = (b - a) - da;
      x = a + da;
    }
    const double v = f(x, da, db);
    return std::isfinite(v) ? w * v : 0.0;
  };

  double h = 1.0;
  double sum = term(0.0);
  for (double t = h; t <= kTMax; t += h) sum += term(t) + term(-t);
  double previous = sum * h * d;

  for (int level = 1; level <= 12; ++level) {
    h *= 0.5;
    double add = 0.0;
    for (double t = h; t <= kTMax; t += 2.0 * h) add += term(t) + term(-t);
    sum += add;
    const double current = sum * h * d;
    if (level >= 3 &&
        std::abs(current - previous) <= rel_tol * std::max(std::abs(current), 1e-300)) {
      return current;
    }
    previous = current;
  }
  throw QuadratureFailure("tanh-sinh quadrature did not converge");
}

double solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                       double x_tol) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw ConfigError("solve_bracketed: no sign change on the given interval");
  }
  for (int it = 0; it < 200 && hi - lo > x_tol * (1.0 + std::abs(lo)); ++it) {
    // Secant proposal, clipped into the bracket; fall back to bisection.
    double mid = lo + (hi - lo) * 0.5;
    const double denom = fhi - flo;
    if (denom != 0.0) {
      const double sec = lo - flo * (hi - lo) / denom;
      if (sec > lo + 0.1 * (hi - lo) * 1e-3 && sec < hi - 0.1 * (hi - lo) * 1e-3) {
        mid = sec;
      }
    }
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace brw
