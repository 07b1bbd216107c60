#pragma once

// Offspring and step-size laws for a branching random walk, plus the scalar
// constants (m, q, rho, k*) derived from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace brwldp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNormTol = 1e-12;

/// Raised when a law violates one of the modelling assumptions. `key()` is one
/// of "supercritical", "schroeder", "lattice", "critical", or "weights".
class ModelError : public std::invalid_argument {
public:
  ModelError(std::string key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class BudgetError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Neumaier summation.
class CompensatedSum {
public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double sum_of(std::span<const double> v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value();
}

}  // namespace detail

class OffspringLaw {
public:
  /// Validates `weights` (probability of k children at index k) and derives
  /// every constant. Throws ModelError on malformed input.
  static OffspringLaw build(std::vector<double> weights) {
    if (weights.empty()) throw ModelError("weights", "offspring weights are empty");
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
        throw ModelError("weights", "offspring weight " + std::to_string(k) + " is negative or not finite");
    }
    const double total = detail::sum_of(weights);
    if (std::abs(total - 1.0) > kNormTol)
      throw ModelError("weights", "offspring weights sum to " + std::to_string(total) + ", not 1");
    while (weights.size() > 1 && weights.back() == 0.0) weights.pop_back();
    if (weights.size() == 2 && weights[0] == 0.0)
      throw ModelError("weights", "offspring law is a point mass at 1 (m = 1, degenerate)");

    OffspringLaw law;
    law.weights_ = std::move(weights);
    detail::CompensatedSum mean;
    for (std::size_t k = 1; k < law.weights_.size(); ++k) mean.add(static_cast<double>(k) * law.weights_[k]);
    law.mean_ = mean.value();
    law.k_star_ = 0;
    for (std::size_t k = 1; k < law.weights_.size(); ++k) {
      if (law.weights_[k] > 0.0) {
        law.k_star_ = static_cast<int>(k);
        break;
      }
    }
    law.schroeder_ = law.weight(0) + law.weight(1) > 0.0;
    law.q_ = law.compute_extinction();
    const double slope = law.pgf_derivative(law.q_);
    law.rho_ = slope > 0.0 ? -std::log(slope) : kInf;
    return law;
  }

  std::span<const double> weights() const { return weights_; }
  double weight(std::size_t k) const { return k < weights_.size() ? weights_[k] : 0.0; }
  int max_children() const { return static_cast<int>(weights_.size()) - 1; }
  double mean() const { return mean_; }
  double extinction() const { return q_; }
  double rho() const { return rho_; }
  int k_star() const { return k_star_; }
  bool schroeder() const { return schroeder_; }
  bool supercritical() const { return mean_ > 1.0; }
  bool critical() const { return std::abs(mean_ - 1.0) <= kNormTol; }

  double variance() const {
    detail::CompensatedSum s;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      const double d = static_cast<double>(k) - mean_;
      s.add(weights_[k] * d * d);
    }
    return s.value();
  }

  /// E[u^{Z_1}] for u in [0, 1].
  double pgf(double u) const {
    if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("pgf argument outside [0, 1]");
    return horner(u);
  }

  /// 1 - pgf(1 - w), accurate when w is small.
  double pgf_complement(double w) const {
    if (!(w >= 0.0 && w <= 1.0)) throw std::domain_error("pgf_complement argument outside [0, 1]");
    if (w == 0.0) return 0.0;
    detail::CompensatedSum s;
    const double log_keep = std::log1p(-w);
    for (std::size_t k = 1; k < weights_.size(); ++k) {
      if (weights_[k] == 0.0) continue;
      const double term = w == 1.0 ? 1.0 : -std::expm1(static_cast<double>(k) * log_keep);
      s.add(weights_[k] * term);
    }
    return std::min(1.0, s.value());
  }

  /// pgf(base + delta) - pgf(base) without cancellation, for delta >= 0.
  double pgf_increment(double base, double delta) const {
    if (delta == 0.0) return 0.0;
    const double top = base + delta;
    // top^k - base^k = top * (top^{k-1} - base^{k-1}) + delta * base^{k-1};
    // every term is nonnegative.
    detail::CompensatedSum s;
    double diff = 0.0;
    double base_pow = 1.0;
    for (std::size_t k = 1; k < weights_.size(); ++k) {
      diff = top * diff + delta * base_pow;
      base_pow *= base;
      if (weights_[k] != 0.0) s.add(weights_[k] * diff);
    }
    return s.value();
  }

  double pgf_derivative(double u) const {
    double acc = 0.0;
    for (std::size_t k = weights_.size(); k-- > 1;) acc = acc * u + static_cast<double>(k) * weights_[k];
    return acc;
  }

private:
  OffspringLaw() = default;

  double horner(double u) const {
    double acc = 0.0;
    for (std::size_t k = weights_.size(); k-- > 0;) acc = acc * u + weights_[k];
    return acc;
  }

  // Monotone fixed-point iteration of the pgf from 0 converges to the
  // smallest root on [0, 1].
  double compute_extinction() const {
    if (weight(0) == 0.0) return 0.0;
    if (mean_ <= 1.0 + kNormTol) return 1.0;
    double s = 0.0;
    for (long it = 0; it < 100'000'000L; ++it) {
      const double next = horner(s);
      const double step = next - s;
      s = next;
      if (step <= 0.0) return s;
      const double contraction = pgf_derivative(s);
      const double err = contraction < 1.0 ? step * contraction / (1.0 - contraction) : step;
      if (err <= 1e-15) return s;
    }
    throw NumericError("extinction probability iteration did not converge");
  }

  std::vector<double> weights_;
  double mean_ = 0.0;
  double q_ = 0.0;
  double rho_ = kInf;
  int k_star_ = 0;
  bool schroeder_ = false;
};

inline OffspringLaw build_offspring(std::vector<double> weights) {
  return OffspringLaw::build(std::move(weights));
}

inline double pgf_eval(const OffspringLaw& law, double u) { return law.pgf(u); }

struct CgfValue {
  double value;
  double first_derivative;
  double second_derivative;
};

enum class StepKind { lattice, gaussian };

class StepLaw {
public:
  static StepLaw lattice(std::vector<std::int64_t> offsets, std::vector<double> probs) {
    if (offsets.empty() || offsets.size() != probs.size())
      throw ModelError("lattice", "offsets and probs must be nonempty and of equal length");
    for (std::size_t i = 1; i < offsets.size(); ++i) {
      if (offsets[i] <= offsets[i - 1]) throw ModelError("lattice", "offsets must be strictly increasing integers");
    }
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw ModelError("lattice", "step probabilities must be nonnegative");
    }
    const double total = detail::sum_of(probs);
    if (std::abs(total - 1.0) > kNormTol)
      throw ModelError("lattice", "step probabilities sum to " + std::to_string(total) + ", not 1");
    // Zero-probability atoms would widen the support hull spuriously.
    std::vector<std::int64_t> o;
    std::vector<double> p;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
      if (probs[i] > 0.0) {
        o.push_back(offsets[i]);
        p.push_back(probs[i]);
      }
    }
    StepLaw law;
    law.kind_ = StepKind::lattice;
    law.offsets_ = std::move(o);
    law.probs_ = std::move(p);
    detail::CompensatedSum m;
    for (std::size_t i = 0; i < law.offsets_.size(); ++i) m.add(static_cast<double>(law.offsets_[i]) * law.probs_[i]);
    law.mean_ = m.value();
    return law;
  }

  static StepLaw gaussian(double sigma, double mean = 0.0) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ModelError("gaussian", "sigma must be positive and finite");
    if (!std::isfinite(mean)) throw ModelError("gaussian", "mean must be finite");
    StepLaw law;
    law.kind_ = StepKind::gaussian;
    law.sigma_ = sigma;
    law.mean_ = mean;
    return law;
  }

  static StepLaw rademacher() { return lattice({-1, 1}, {0.5, 0.5}); }

  StepKind kind() const { return kind_; }
  bool is_lattice() const { return kind_ == StepKind::lattice; }
  std::span<const std::int64_t> offsets() const { return offsets_; }
  std::span<const double> probs() const { return probs_; }
  double sigma() const { return sigma_; }
  double mean() const { return mean_; }

  double support_min() const { return is_lattice() ? static_cast<double>(offsets_.front()) : -kInf; }
  double support_max() const { return is_lattice() ? static_cast<double>(offsets_.back()) : kInf; }

  /// Probability of the atom at `x` (0 off the lattice or for the gaussian kind).
  double atom(double x) const {
    if (!is_lattice()) return 0.0;
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      if (static_cast<double>(offsets_[i]) == x) return probs_[i];
    }
    return 0.0;
  }

  /// Shifts the law to mean zero. Lattice laws only shift by integers.
  StepLaw centered() const {
    if (!is_lattice()) return gaussian(sigma_, 0.0);
    const double shift = std::round(mean_);
    if (std::abs(shift - mean_) > 1e-12)
      throw ModelError("lattice", "centering by a non-integer mean is unrepresentable on the lattice");
    std::vector<std::int64_t> o(offsets_);
    for (auto& v : o) v -= static_cast<std::int64_t>(shift);
    return lattice(std::move(o), probs_);
  }

  /// Cumulant generating function with tilted mean and variance.
  CgfValue cgf(double lambda) const {
    if (!is_lattice()) {
      const double s2 = sigma_ * sigma_;
      return {mean_ * lambda + 0.5 * s2 * lambda * lambda, mean_ + s2 * lambda, s2};
    }
    double peak = -kInf;
    for (auto o : offsets_) peak = std::max(peak, lambda * static_cast<double>(o));
    detail::CompensatedSum z;
    detail::CompensatedSum z1;
    std::vector<double> w(offsets_.size());
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      w[i] = probs_[i] * std::exp(lambda * static_cast<double>(offsets_[i]) - peak);
      z.add(w[i]);
      z1.add(w[i] * static_cast<double>(offsets_[i]));
    }
    const double norm = z.value();
    const double tilted_mean = z1.value() / norm;
    detail::CompensatedSum z2;
    for (std::size_t i = 0; i < offsets_.size(); ++i) {
      const double d = static_cast<double>(offsets_[i]) - tilted_mean;
      z2.add(w[i] * d * d);
    }
    CgfValue out{peak + std::log(norm), tilted_mean, z2.value() / norm};
    if (!std::isfinite(out.value) || !std::isfinite(out.first_derivative))
      throw NumericError("cumulant generating function is not finite at lambda = " + std::to_string(lambda));
    return out;
  }

private:
  StepLaw() = default;

  StepKind kind_ = StepKind::lattice;
  std::vector<std::int64_t> offsets_;
  std::vector<double> probs_;
  double sigma_ = 0.0;
  double mean_ = 0.0;
};

inline CgfValue cgf(const StepLaw& step, double lambda) { return step.cgf(lambda); }

struct Model {
  OffspringLaw offspring;
  StepLaw step;
};

inline void require_supercritical(const OffspringLaw& law) {
  if (!law.supercritical())
    throw ModelError("supercritical", "offspring mean m = " + std::to_string(law.mean()) + " is not > 1");
}

inline void require_lattice(const StepLaw& step) {
  if (!step.is_lattice()) throw ModelError("lattice", "this operation needs an integer-lattice step law");
}

}  // namespace brwldp
