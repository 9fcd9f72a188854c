#pragma once

// One-dimensional quadrature used throughout the project:
//   - adaptive Gauss-Kronrod 7/15 for smooth integrands on finite intervals,
//   - tanh-sinh for integrable endpoint singularities,
//   - a rational substitution for semi-infinite tails.
// Routines throw QuadratureFailure when the requested tolerance is not met.

#include <functional>

#include "brw/errors.hpp"

namespace brw {

struct QuadOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_depth = 48;
};

// Integral of f over [a, b], adaptive bisection with a GK7/15 error estimate.
double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadOptions& opts = {});

// Single non-adaptive GK15 application; for short panels of smooth
// integrands where the rule is already accurate to machine precision.
double integrate_panel(const std::function<double(double)>& f, double a, double b);

// Integral of f over [a, +inf).  f must decay at infinity.
double integrate_to_inf(const std::function<double(double)>& f, double a,
                        const QuadOptions& opts = {});

// Tanh-sinh rule on [a, b] for integrands with (integrable) endpoint
// singularities.  The callback receives the abscissa x together with the
// exact distances to both endpoints, which stay accurate (~1e-300) long
// after x itself has rounded to an endpoint.
double integrate_tanh_sinh(
    const std::function<double(double x, double dist_a, double dist_b)>& f,
    double a, double b, double rel_tol = 1e-13);

// Root of a continuous function with a sign change on [lo, hi]; bisection
// with secant acceleration.  Used for small calibration solves.
double solve_bracketed(const std::function<double(double)>& f, double lo, double hi,
                       double x_tol = 1e-14);

}  // namespace brw
