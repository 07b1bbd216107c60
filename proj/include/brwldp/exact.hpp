#pragma once

// Exact finite-n oracles on integer lattices.
//
// All maxima live on the integer grid [min(0, n*lo), max(0, n*hi)]. A lattice
// CDF keeps the extinction mass (M_n = -inf) apart from the mass of living
// configurations, and stores the upper tail P(M_n > y) on its own recursion,
// so both deep lower tails and deep upper tails keep full relative precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "brwldp/model.hpp"

namespace brwldp {

inline constexpr std::int64_t kGridBudget = 10'000'000;
inline constexpr double kProbabilityFloor = 1e-300;

struct LatticeCdf {
  int n = 0;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  std::vector<double> alive;  // P(-inf < M <= y), y = lo..hi
  std::vector<double> above;  // P(M > y), y = lo..hi
  double base = 0.0;          // P(M = -inf) = P(Z_n = 0)
  double survival = 1.0;      // 1 - base, computed without cancellation

  std::size_t size() const { return alive.size(); }

  double alive_at_most(std::int64_t y) const {
    if (y < lo) return 0.0;
    if (y >= hi) return survival;
    return alive[static_cast<std::size_t>(y - lo)];
  }

  double greater_than(std::int64_t y) const {
    if (y < lo) return survival;
    if (y >= hi) return 0.0;
    return above[static_cast<std::size_t>(y - lo)];
  }

  /// Unconditioned P(M <= y), extinction counted as <= y.
  double at_most(std::int64_t y) const { return base + alive_at_most(y); }
  double at_least(std::int64_t y) const { return greater_than(y - 1); }

  std::vector<double> values() const {
    std::vector<double> v(alive.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = base + alive[i];
    return v;
  }
};

struct GwPmf {
  int n = 0;
  std::vector<double> probabilities;  // P(Z_n = k), k = 0..K_cap
  double truncated_tail = 0.0;        // 1 - sum of probabilities
  double tail_bound = 0.0;            // Markov bound m^n / K_cap
};

enum class Direction { at_most, at_least };

namespace detail {

inline std::pair<std::int64_t, std::int64_t> grid_bounds(const StepLaw& step, int n) {
  const std::int64_t lo = std::min<std::int64_t>(0, n * step.offsets().front());
  const std::int64_t hi = std::max<std::int64_t>(0, n * step.offsets().back());
  if (hi - lo + 1 > kGridBudget)
    throw BudgetError("lattice grid for n = " + std::to_string(n) + " exceeds " + std::to_string(kGridBudget) +
                      " points");
  return {lo, hi};
}

inline void check_generation(int n) {
  if (n < 0) throw std::domain_error("generation count must be nonnegative");
}

// Point masses of S_n on the grid [lo, hi].
inline std::vector<double> walk_pmf(const StepLaw& step, int n, std::int64_t lo, std::int64_t hi) {
  const auto size = static_cast<std::size_t>(hi - lo + 1);
  std::vector<double> pmf(size, 0.0);
  pmf[static_cast<std::size_t>(-lo)] = 1.0;
  std::vector<double> next(size);
  const auto offsets = step.offsets();
  const auto probs = step.probs();
  for (int k = 0; k < n; ++k) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < size; ++i) {
      if (pmf[i] == 0.0) continue;
      for (std::size_t j = 0; j < offsets.size(); ++j) {
        const auto target = static_cast<std::int64_t>(i) + offsets[j];
        if (target >= 0 && target < static_cast<std::int64_t>(size)) next[static_cast<std::size_t>(target)] += pmf[i] * probs[j];
      }
    }
    std::swap(pmf, next);
  }
  return pmf;
}

inline LatticeCdf walk_cdf_from_pmf(const std::vector<double>& pmf, int n, std::int64_t lo, std::int64_t hi) {
  LatticeCdf cdf;
  cdf.n = n;
  cdf.lo = lo;
  cdf.hi = hi;
  cdf.alive.resize(pmf.size());
  cdf.above.resize(pmf.size());
  CompensatedSum prefix;
  for (std::size_t i = 0; i < pmf.size(); ++i) {
    prefix.add(pmf[i]);
    cdf.alive[i] = std::min(1.0, prefix.value());
  }
  CompensatedSum suffix;
  for (std::size_t i = pmf.size(); i-- > 0;) {
    cdf.above[i] = std::min(1.0, suffix.value());
    suffix.add(pmf[i]);
  }
  cdf.alive.back() = 1.0;
  return cdf;
}

inline void floor_tiny(std::vector<double>& v) {
  for (double& x : v) {
    if (x < kProbabilityFloor) x = 0.0;
  }
}

// alive + above = survival. Each recursion is accurate in relative terms only
// for the smaller of the two (errors in the larger grow like m^n), so the
// larger is rebuilt from the smaller.
inline void reconcile(LatticeCdf& cdf) {
  for (std::size_t i = 0; i < cdf.alive.size(); ++i) {
    if (cdf.above[i] < cdf.alive[i])
      cdf.alive[i] = std::max(0.0, cdf.survival - cdf.above[i]);
    else
      cdf.above[i] = std::max(0.0, cdf.survival - cdf.alive[i]);
  }
}

}  // namespace detail

/// Exact law of S_n by iterated convolution.
inline LatticeCdf rw_cdf(const StepLaw& step, int n) {
  require_lattice(step);
  detail::check_generation(n);
  const auto [lo, hi] = detail::grid_bounds(step, n);
  return detail::walk_cdf_from_pmf(detail::walk_pmf(step, n, lo, hi), n, lo, hi);
}

/// Exact laws of M_0, ..., M_n from the one-step branching decomposition
/// P(M_{k+1} <= y) = pgf(sum_j p_j P(M_k <= y - o_j)).
inline std::vector<LatticeCdf> brw_max_cdfs(const StepLaw& step, const OffspringLaw& offspring, int n) {
  require_lattice(step);
  detail::check_generation(n);
  const auto [lo, hi] = detail::grid_bounds(step, n);
  const auto size = static_cast<std::size_t>(hi - lo + 1);
  const auto offsets = step.offsets();
  const auto probs = step.probs();

  LatticeCdf cur;
  cur.n = 0;
  cur.lo = lo;
  cur.hi = hi;
  cur.alive.assign(size, 0.0);
  cur.above.assign(size, 0.0);
  for (std::size_t i = 0; i < size; ++i) {
    const std::int64_t y = lo + static_cast<std::int64_t>(i);
    (y >= 0 ? cur.alive[i] : cur.above[i]) = 1.0;
  }

  std::vector<LatticeCdf> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  out.push_back(cur);
  for (int k = 0; k < n; ++k) {
    LatticeCdf next;
    next.n = k + 1;
    next.lo = lo;
    next.hi = hi;
    next.alive.resize(size);
    next.above.resize(size);
    for (std::size_t i = 0; i < size; ++i) {
      const std::int64_t y = lo + static_cast<std::int64_t>(i);
      detail::CompensatedSum below;
      detail::CompensatedSum over;
      for (std::size_t j = 0; j < offsets.size(); ++j) {
        below.add(probs[j] * cur.alive_at_most(y - offsets[j]));
        over.add(probs[j] * cur.greater_than(y - offsets[j]));
      }
      next.alive[i] = offspring.pgf_increment(cur.base, std::min(below.value(), cur.survival));
      next.above[i] = offspring.pgf_complement(std::clamp(over.value(), 0.0, 1.0));
    }
    next.base = offspring.pgf(cur.base);
    next.survival = offspring.pgf_complement(cur.survival);
    detail::reconcile(next);
    detail::floor_tiny(next.alive);
    detail::floor_tiny(next.above);
    out.push_back(std::move(next));
    cur = out.back();
  }
  return out;
}

inline LatticeCdf brw_max_cdf(const StepLaw& step, const OffspringLaw& offspring, int n) {
  return std::move(brw_max_cdfs(step, offspring, n).back());
}

inline double gw_survival(const OffspringLaw& offspring, int n);

/// Exact law of the maximum of Z_n independent copies of S_n:
/// P(max <= y) = h_n(P(S_n <= y)) with h_n the n-fold pgf iterate.
inline LatticeCdf ind_max_cdf(const StepLaw& step, const OffspringLaw& offspring, int n) {
  const LatticeCdf walk = rw_cdf(step, n);
  LatticeCdf out = walk;
  std::vector<double> bases(static_cast<std::size_t>(n) + 1);
  double base = 0.0;
  for (int k = 0; k <= n; ++k) {
    bases[static_cast<std::size_t>(k)] = base;
    base = offspring.pgf(base);
  }
  out.base = bases.back();
  out.survival = gw_survival(offspring, n);
  for (std::size_t i = 0; i < walk.size(); ++i) {
    double d = walk.alive[i];
    double w = walk.above[i];
    for (int k = 0; k < n; ++k) {
      d = offspring.pgf_increment(bases[static_cast<std::size_t>(k)], d);
      w = offspring.pgf_complement(w);
    }
    out.alive[i] = d;
    out.above[i] = w;
  }
  detail::reconcile(out);
  detail::floor_tiny(out.alive);
  detail::floor_tiny(out.above);
  return out;
}

/// All generations 0..n of the independent-walk maximum.
inline std::vector<LatticeCdf> ind_max_cdfs(const StepLaw& step, const OffspringLaw& offspring, int n) {
  std::vector<LatticeCdf> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) out.push_back(ind_max_cdf(step, offspring, k));
  return out;
}

/// Probability under the finite-n surrogate of survival conditioning,
/// {Z_n > 0}. The extinction mass never counts as "<= y".
inline double conditional_prob(const LatticeCdf& cdf, Direction direction, std::int64_t y) {
  if (!(cdf.survival > 0.0)) throw std::domain_error("conditional_prob: process is almost surely extinct");
  const double num = direction == Direction::at_most ? cdf.alive_at_most(y) : cdf.at_least(y);
  return std::min(1.0, num / cdf.survival);
}

inline double unconditional_prob(const LatticeCdf& cdf, Direction direction, std::int64_t y) {
  return direction == Direction::at_most ? cdf.at_most(y) : cdf.at_least(y);
}

namespace detail {

// c = a * b truncated to a.size() coefficients.
inline void truncated_product(const std::vector<double>& a, const std::vector<double>& b, std::vector<double>& c) {
  const std::size_t size = a.size();
  std::fill(c.begin(), c.end(), 0.0);
  std::size_t a_first = 0;
  while (a_first < size && a[a_first] == 0.0) ++a_first;
  std::size_t b_first = 0;
  while (b_first < size && b[b_first] == 0.0) ++b_first;
  std::size_t a_last = size;
  while (a_last > a_first && a[a_last - 1] == 0.0) --a_last;
  std::size_t b_last = size;
  while (b_last > b_first && b[b_last - 1] == 0.0) --b_last;
  for (std::size_t i = a_first; i < a_last; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    const std::size_t j_end = std::min(b_last, size - i);
    for (std::size_t j = b_first; j < j_end; ++j) c[i + j] += ai * b[j];
  }
}

}  // namespace detail

/// Exact P(Z_k = i), i <= k_cap, for every generation k = 0..n by composing
/// the offspring pgf as a truncated power series.
inline std::vector<GwPmf> gw_pmfs(const OffspringLaw& offspring, int n, int k_cap) {
  detail::check_generation(n);
  if (k_cap < 1) throw std::domain_error("gw_pmf: K_cap must be >= 1");
  const auto size = static_cast<std::size_t>(k_cap) + 1;
  std::vector<double> cur(size, 0.0);
  cur[1] = 1.0;
  std::vector<double> acc(size);
  std::vector<double> tmp(size);
  const auto w = offspring.weights();

  std::vector<GwPmf> out;
  auto record = [&](int k) {
    GwPmf p;
    p.n = k;
    p.probabilities = cur;
    p.truncated_tail = std::max(0.0, 1.0 - detail::sum_of(cur));
    p.tail_bound = std::pow(offspring.mean(), k) / k_cap;
    out.push_back(std::move(p));
  };
  record(0);
  for (int k = 0; k < n; ++k) {
    // Horner: acc = (...(p_K * f + p_{K-1}) * f + ...) + p_0
    std::fill(acc.begin(), acc.end(), 0.0);
    acc[0] = w.back();
    for (std::size_t j = w.size() - 1; j-- > 0;) {
      detail::truncated_product(acc, cur, tmp);
      std::swap(acc, tmp);
      acc[0] += w[j];
    }
    std::swap(cur, acc);
    record(k + 1);
  }
  return out;
}

inline GwPmf gw_pmf(const OffspringLaw& offspring, int n, int k_cap, std::optional<double> tail_tolerance = std::nullopt) {
  GwPmf p = std::move(gw_pmfs(offspring, n, k_cap).back());
  if (tail_tolerance && p.truncated_tail > *tail_tolerance)
    throw BudgetError("gw_pmf: K_cap = " + std::to_string(k_cap) + " leaves tail mass " +
                      std::to_string(p.truncated_tail));
  return p;
}

/// P(Z_n > 0) by iterating 1 - pgf(1 - s) from s = 1.
inline double gw_survival(const OffspringLaw& offspring, int n) {
  detail::check_generation(n);
  double s = 1.0;
  for (int k = 0; k < n; ++k) s = offspring.pgf_complement(s);
  return s;
}

struct ReachableCounts {
  std::vector<long> counts;
  bool truncated = false;  // mass beyond K_cap exists
};

/// {k >= 1 : P(Z_n = k) > 0}, restricted to k <= K_cap.
inline ReachableCounts reachable_counts(const OffspringLaw& offspring, int n, int k_cap = 1024) {
  const GwPmf p = gw_pmf(offspring, n, k_cap);
  ReachableCounts out;
  for (std::size_t k = 1; k < p.probabilities.size(); ++k) {
    if (p.probabilities[k] > 0.0) out.counts.push_back(static_cast<long>(k));
  }
  out.truncated = p.truncated_tail > 0.0;
  return out;
}

enum class RateMode { slope, successive };

/// Decay rate c of p_n = exp(-c n + o(n)). Entries that are zero, not
/// finite, or below 1e-300 are ignored.
inline double finite_n_rate(std::span<const int> ns, std::span<const double> probs, RateMode mode = RateMode::successive) {
  if (ns.size() != probs.size()) throw std::invalid_argument("finite_n_rate: length mismatch");
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (std::isfinite(probs[i]) && probs[i] >= kProbabilityFloor) pts.emplace_back(ns[i], -std::log(probs[i]));
  }
  if (pts.size() < 2) throw std::domain_error("finite_n_rate: needs at least two positive entries");
  if (mode == RateMode::slope) {
    double mx = 0.0;
    double my = 0.0;
    for (auto [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (auto [x, y] : pts) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
    if (sxx == 0.0) throw std::domain_error("finite_n_rate: all entries share one n");
    return sxy / sxx;
  }
  // Largest doubling pair (n, 2n); otherwise the last two entries.
  for (std::size_t i = pts.size(); i-- > 0;) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (pts[j].first > 0.0 && pts[i].first == 2.0 * pts[j].first) return (pts[i].second - pts[j].second) / pts[j].first;
    }
  }
  const auto& a = pts[pts.size() - 2];
  const auto& b = pts.back();
  if (a.first == b.first) throw std::domain_error("finite_n_rate: repeated n");
  return (b.second - a.second) / (b.first - a.first);
}

struct DominanceRow {
  int n;
  std::int64_t y;
  double cdf_brw;
  double cdf_ind;
  double base;
};

struct GapProfile {
  int n;
  double max_gap;  // max_y P(M_n <= y) - P(Mind_n <= y)
  std::int64_t y_at;
};

struct DominanceReport {
  bool passed = true;
  double tolerance = 1e-11;
  double max_violation = 0.0;  // max over rows of cdf_ind - cdf_brw (positive means violated)
  int violation_n = -1;
  std::int64_t violation_y = 0;
  long violations = 0;
  std::vector<GapProfile> profile;
};

/// Tests P(Mind_n <= y) <= P(M_n <= y) + tol on every row.
inline DominanceReport dominance_report(std::span<const DominanceRow> rows, double tol = 1e-11) {
  DominanceReport rep;
  rep.tolerance = tol;
  rep.max_violation = -kInf;
  for (const auto& r : rows) {
    const double excess = r.cdf_ind - r.cdf_brw;
    if (excess > rep.max_violation) {
      rep.max_violation = excess;
      rep.violation_n = r.n;
      rep.violation_y = r.y;
    }
    if (excess > tol) ++rep.violations;
    if (rep.profile.empty() || rep.profile.back().n != r.n) rep.profile.push_back({r.n, -kInf, r.y});
    if (-excess > rep.profile.back().max_gap) {
      rep.profile.back().max_gap = -excess;
      rep.profile.back().y_at = r.y;
    }
  }
  rep.passed = rep.violations == 0;
  return rep;
}

/// Rows (n, y, cdf_brw, cdf_ind, base) for n = 0..n_max on each generation's grid.
inline std::vector<DominanceRow> dominance_rows(const StepLaw& step, const OffspringLaw& offspring, int n_max) {
  const auto brw = brw_max_cdfs(step, offspring, n_max);
  std::vector<DominanceRow> rows;
  for (int n = 0; n <= n_max; ++n) {
    const LatticeCdf ind = ind_max_cdf(step, offspring, n);
    for (std::int64_t y = ind.lo; y <= ind.hi; ++y) {
      rows.push_back({n, y, brw[static_cast<std::size_t>(n)].at_most(y), ind.at_most(y), ind.base});
    }
  }
  return rows;
}

inline DominanceReport check_dominance(const StepLaw& step, const OffspringLaw& offspring, int n_max, double tol = 1e-11) {
  const auto rows = dominance_rows(step, offspring, n_max);
  return dominance_report(rows, tol);
}

struct GwBracket {
  double lower = 0.0;  // bounds on P(1 <= Z_n <= K)
  double upper = 1.0;
  double survival = 1.0;  // P(Z_n > 0)
  int split_lower = -1;   // generation used by the best lower bound
  int split_upper = -1;

  double conditional_lower() const { return lower / survival; }
  double conditional_upper() const { return std::min(1.0, upper / survival); }
};

struct BracketOptions {
  int k_cap = 2048;
  int theta_points = 160;
};

namespace detail {

// log E[s^{Z_l}] at s = exp(-theta), for l = 0..n, tracking s and 1 - s so
// neither end of [0, 1] loses precision.
inline std::vector<double> log_laplace_iterates(const OffspringLaw& offspring, double theta, int n) {
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  double s = std::exp(-theta);
  double c = -std::expm1(-theta);
  for (int l = 0; l <= n; ++l) {
    out[static_cast<std::size_t>(l)] = s < 0.5 ? std::log(s) : std::log1p(-c);
    if (s < 0.5) {
      s = offspring.pgf(s);
      c = 1.0 - s;
    } else {
      c = offspring.pgf_complement(c);
      s = 1.0 - c;
    }
  }
  return out;
}

}  // namespace detail

/// Rigorous bracket on P(1 <= Z_n <= K) for counts far beyond any truncated
/// series. For a split generation j,
///   P(1 <= Z_n <= K) = sum_k P(Z_j = k) P(1 <= Y_k <= K),
/// Y_k a sum of k independent copies of Z_{n-j}. Each term is bounded below by
/// Cantelli/Markov and above by a Chernoff bound on E[e^{-theta Y_k}; Y_k >= 1];
/// the best split is kept for each side.
inline GwBracket gw_cdf_bracket(const OffspringLaw& offspring, int n, double k_max, const BracketOptions& opts = {}) {
  detail::check_generation(n);
  const double K = std::floor(k_max);
  GwBracket out;
  out.survival = gw_survival(offspring, n);
  out.lower = 0.0;
  out.upper = out.survival;
  if (K < 1.0) {
    out.upper = 0.0;
    return out;
  }
  const auto pmfs = gw_pmfs(offspring, n, opts.k_cap);
  const double m = offspring.mean();
  const double var1 = offspring.variance();

  std::vector<double> ext(static_cast<std::size_t>(n) + 1);  // P(Z_l = 0)
  {
    double s = 0.0;
    for (int l = 0; l <= n; ++l) {
      ext[static_cast<std::size_t>(l)] = s;
      s = offspring.pgf(s);
    }
  }
  std::vector<double> thetas(static_cast<std::size_t>(opts.theta_points));
  std::vector<std::vector<double>> log_g;
  const double t_lo = std::log(1e-3 / K);
  const double t_hi = std::log(60.0);
  for (int i = 0; i < opts.theta_points; ++i) {
    thetas[static_cast<std::size_t>(i)] = std::exp(t_lo + (t_hi - t_lo) * i / (opts.theta_points - 1));
    log_g.push_back(detail::log_laplace_iterates(offspring, thetas[static_cast<std::size_t>(i)], n));
  }

  for (int j = 1; j <= n; ++j) {
    const int l = n - j;
    const auto& pj = pmfs[static_cast<std::size_t>(j)].probabilities;
    const double tail = pmfs[static_cast<std::size_t>(j)].truncated_tail;
    const double mean_l = std::pow(m, l);
    const double var_l = l == 0 ? 0.0 : (m == 1.0 ? l * var1 : var1 * std::pow(m, l - 1) * (mean_l - 1.0) / (m - 1.0));
    const double q_l = ext[static_cast<std::size_t>(l)];
    const double log_q_l = q_l > 0.0 ? std::log(q_l) : -kInf;

    detail::CompensatedSum lo_sum;
    detail::CompensatedSum hi_sum;
    for (std::size_t k = 1; k < pj.size(); ++k) {
      const double pk = pj[k];
      if (pk == 0.0) continue;
      const double kd = static_cast<double>(k);
      if (l == 0) {
        if (kd <= K) {
          lo_sum.add(pk);
          hi_sum.add(pk);
        }
        continue;
      }
      // lower
      const double mu = kd * mean_l;
      const double v = kd * var_l;
      double p_le = 0.0;
      if (K + 1.0 > mu) {
        const double a = K + 1.0 - mu;
        p_le = std::max(1.0 - mu / (K + 1.0), v > 0.0 ? a * a / (v + a * a) : 1.0);
      }
      const double zero_mass = q_l > 0.0 ? std::exp(kd * log_q_l) : 0.0;
      lo_sum.add(pk * std::max(0.0, p_le - zero_mass));
      // upper
      double best = 0.0;  // log of bound, capped at log 1
      for (std::size_t t = 0; t < thetas.size(); ++t) {
        const double lg = log_g[t][static_cast<std::size_t>(l)];
        double e = thetas[t] * K + kd * lg;
        if (q_l > 0.0) {
          // Subtract the extinct mass only where g^k - q^k is resolved.
          const double r = kd * (log_q_l - lg);
          if (r < -1e-6) e += std::log(-std::expm1(r));
        }
        best = std::min(best, e);
      }
      hi_sum.add(pk * std::exp(best));
    }
    if (tail > 0.0) {
      double best = 0.0;
      if (l > 0) {
        const double kd = static_cast<double>(opts.k_cap + 1);
        for (std::size_t t = 0; t < thetas.size(); ++t) best = std::min(best, thetas[t] * K + kd * log_g[t][static_cast<std::size_t>(l)]);
      } else if (opts.k_cap + 1 > K) {
        best = -kInf;
      }
      hi_sum.add(tail * std::exp(best));
    }
    const double lo_v = lo_sum.value();
    const double hi_v = std::min(out.survival, hi_sum.value());
    if (lo_v > out.lower) {
      out.lower = lo_v;
      out.split_lower = j;
    }
    if (hi_v < out.upper) {
      out.upper = hi_v;
      out.split_upper = j;
    }
  }
  return out;
}

}  // namespace brwldp
