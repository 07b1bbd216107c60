#pragma once

// Large-deviation rate functions: the Cramer rate of the step law, the speed
// of the rightmost particle, the Galton-Watson rate, and the rates for the
// maximum of independent walks and of the branching random walk.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "brwldp/model.hpp"

namespace brwldp {

struct RatePoint {
  double x = 0.0;
  double value = kInf;
  double argmax_lambda = 0.0;  // +-inf at a support edge
};

/// Legendre transform of the cumulant generating function.
inline RatePoint rate_rw(const StepLaw& step, double x) {
  RatePoint out;
  out.x = x;
  if (!step.is_lattice()) {
    const double s2 = step.sigma() * step.sigma();
    const double d = x - step.mean();
    out.value = d * d / (2.0 * s2);
    out.argmax_lambda = d / s2;
    return out;
  }
  const double lo = step.support_min();
  const double hi = step.support_max();
  if (x < lo || x > hi) return out;
  if (x == hi || x == lo) {
    // Only the edge atom contributes as the tilt diverges.
    out.value = lo == hi ? 0.0 : -std::log(step.atom(x));
    out.argmax_lambda = lo == hi ? 0.0 : (x == hi ? kInf : -kInf);
    return out;
  }
  if (x == step.mean()) {
    out.value = 0.0;
    return out;
  }

  // Lambda'(l) is increasing; bracket the root of Lambda'(l) = x.
  double a = 0.0;
  double b = 0.0;
  if (x > step.mean()) {
    b = 1.0;
    while (step.cgf(b).first_derivative < x) {
      a = b;
      b *= 2.0;
      if (b > 1e6) throw NumericError("rate_rw: tilt bracket diverged");
    }
  } else {
    a = -1.0;
    while (step.cgf(a).first_derivative > x) {
      b = a;
      a *= 2.0;
      if (a < -1e6) throw NumericError("rate_rw: tilt bracket diverged");
    }
  }
  double lambda = 0.5 * (a + b);
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    const CgfValue c = step.cgf(lambda);
    const double residual = c.first_derivative - x;
    if (residual == 0.0) {
      converged = true;
      break;
    }
    if (residual > 0.0)
      b = lambda;
    else
      a = lambda;
    double next = c.second_derivative > 0.0 ? lambda - residual / c.second_derivative : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - lambda) <= 1e-15 * std::max(1.0, std::abs(lambda)) || b - a <= 1e-15 * std::max(1.0, std::abs(lambda))) {
      lambda = next;
      converged = true;
      break;
    }
    lambda = next;
  }
  if (!converged) throw NumericError("rate_rw: Newton iteration did not converge");
  out.argmax_lambda = lambda;
  out.value = std::max(0.0, lambda * x - step.cgf(lambda).value);
  return out;
}

inline double rate_rw_value(const StepLaw& step, double x) { return rate_rw(step, x).value; }

/// x* = sup{x : I(x) <= log m}, the almost-sure linear speed of the maximum.
inline double speed(const StepLaw& step, const OffspringLaw& offspring) {
  require_supercritical(offspring);
  const double log_m = std::log(offspring.mean());
  if (!step.is_lattice()) return step.mean() + step.sigma() * std::sqrt(2.0 * log_m);
  const double top = step.support_max();
  if (rate_rw_value(step, top) <= log_m) return top;
  double a = step.mean();
  double b = top;
  while (b - a > 1e-14 * std::max(1.0, std::abs(b))) {
    const double mid = 0.5 * (a + b);
    if (mid <= a || mid >= b) break;
    if (rate_rw_value(step, mid) <= log_m)
      a = mid;
    else
      b = mid;
  }
  return a;
}

/// Rate of P*(Z_n <= e^{xn}); linear between rho at 0 and 0 at log m.
inline double rate_gw(const OffspringLaw& offspring, double x) {
  require_supercritical(offspring);
  const double log_m = std::log(offspring.mean());
  if (x < 0.0 || x > log_m) throw std::domain_error("rate_gw: x outside [0, log m]");
  const double frac = 1.0 - x / log_m;
  if (frac == 0.0) return 0.0;
  return offspring.rho() * frac;
}

namespace detail {
// a * b with the convention inf * 0 = 0 (the zero factor is exact).
inline double scale(double a, double b) { return (a == 0.0 || b == 0.0) ? 0.0 : a * b; }
}  // namespace detail

/// Rate function of the maximum of Z_n independent walks.
inline double rate_ind(const StepLaw& step, const OffspringLaw& offspring, double x, double x_star) {
  const double log_m = std::log(offspring.mean());
  if (x > x_star) return std::max(0.0, rate_rw_value(step, x) - log_m);
  if (x == x_star) return 0.0;
  const double rho = offspring.rho();
  const double ix = rate_rw_value(step, x);
  if (x >= step.mean()) return detail::scale(rho, std::max(0.0, 1.0 - ix / log_m));
  return offspring.k_star() * ix + rho;
}

inline double rate_ind(const StepLaw& step, const OffspringLaw& offspring, double x) {
  return rate_ind(step, offspring, x, speed(step, offspring));
}

struct VariationalSolution {
  double x = 0.0;
  std::optional<double> t_star;
  double value = kInf;
  long evaluations = 0;
};

struct VariationalOptions {
  int grid_points = 2048;
  double golden_tol = 1e-13;
};

/// Objective t*rho + t*I((x - (1-t) x*)/t) of the lower-deviation problem.
inline double lower_deviation_objective(const StepLaw& step, double rho, double x, double x_star, double t) {
  if (t <= 0.0) return kInf;
  const double arg = (x - (1.0 - t) * x_star) / t;
  const double i = rate_rw_value(step, arg);
  if (i == kInf) return kInf;
  return t * rho + t * i;
}

/// Upper end of the time-fraction range; beyond it the objective only grows.
inline double lower_deviation_t_max(const StepLaw& step, double x, double x_star) {
  const double mu = step.mean();
  if (x > mu && x_star > mu) return std::min(1.0, 1.0 - (x - mu) / (x_star - mu));
  return 1.0;
}

/// H(x) for x < x*: grid search then golden-section refinement. The objective
/// is jointly convex in t (perspective of I along an affine path).
inline VariationalSolution solve_H(const StepLaw& step, const OffspringLaw& offspring, double x, double x_star,
                                   const VariationalOptions& opts = {}) {
  if (!(x < x_star)) throw std::domain_error("solve_H: requires x < x*");
  VariationalSolution sol;
  sol.x = x;
  const double rho = offspring.rho();
  if (rho == kInf) return sol;

  const double t_hi = lower_deviation_t_max(step, x, x_star);
  auto g = [&](double t) {
    ++sol.evaluations;
    return lower_deviation_objective(step, rho, x, x_star, t);
  };

  const int grid = std::max(2, opts.grid_points);
  std::vector<double> ts(grid);
  std::vector<double> vs(grid);
  for (int i = 0; i < grid; ++i) {
    ts[i] = i + 1 == grid ? t_hi : t_hi * static_cast<double>(i + 1) / grid;
    vs[i] = g(ts[i]);
  }
  // The t -> 0 limit is +inf for bounded lattice steps and for the gaussian
  // family (superlinear I), so it never wins the minimum.
  const double best_value = *std::min_element(vs.begin(), vs.end());
  if (best_value == kInf) return sol;
  int best = 0;
  while (vs[best] > best_value + 1e-12) ++best;

  double a = best > 0 ? ts[best - 1] : 0.0;
  double b = best + 1 < grid ? ts[best + 1] : t_hi;
  double t_best = ts[best];
  double v_best = vs[best];

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = g(c);
  double gd = g(d);
  while (b - a > opts.golden_tol) {
    if (gc <= gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = g(d);
    }
  }
  const std::pair<double, double> candidates[] = {{t_best, v_best}, {c, gc}, {d, gd}};
  for (const auto& [t, v] : candidates) v_best = std::min(v_best, v);
  t_best = kInf;
  for (const auto& [t, v] : candidates) {
    if (v <= v_best + 1e-12 && t < t_best) {
      t_best = t;
      v_best = std::min(v_best, v);
    }
  }
  v_best = g(t_best);
  sol.t_star = t_best;
  sol.value = v_best;
  return sol;
}

inline VariationalSolution solve_H(const StepLaw& step, const OffspringLaw& offspring, double x) {
  return solve_H(step, offspring, x, speed(step, offspring));
}

/// Rate function of the branching random walk maximum.
inline double rate_brw(const StepLaw& step, const OffspringLaw& offspring, double x, double x_star) {
  if (x > x_star) return std::max(0.0, rate_rw_value(step, x) - std::log(offspring.mean()));
  if (x == x_star) return 0.0;
  return solve_H(step, offspring, x, x_star).value;
}

inline double rate_brw(const StepLaw& step, const OffspringLaw& offspring, double x) {
  return rate_brw(step, offspring, x, speed(step, offspring));
}

/// All rate functions at one point, sharing one speed computation.
struct RateRow {
  double x;
  double rw;
  double ind;
  double brw;
  std::optional<double> t_star;
};

inline RateRow rate_row(const StepLaw& step, const OffspringLaw& offspring, double x, double x_star) {
  RateRow row{x, rate_rw_value(step, x), rate_ind(step, offspring, x, x_star), 0.0, std::nullopt};
  if (x < x_star) {
    const VariationalSolution h = solve_H(step, offspring, x, x_star);
    row.brw = h.value;
    row.t_star = h.t_star;
  } else {
    row.brw = rate_brw(step, offspring, x, x_star);
  }
  return row;
}

}  // namespace brwldp
