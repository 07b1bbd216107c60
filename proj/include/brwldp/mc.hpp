#pragma once

// Monte Carlo for Galton-Watson populations, the branching random walk
// maximum, the independent-walk maximum, and exponentially tilted walk tails.
//
// Every replicate draws from its own engine keyed by (root seed, replicate
// index), so results do not depend on how replicates are spread over threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "brwldp/exact.hpp"
#include "brwldp/model.hpp"
#include "brwldp/rates.hpp"

namespace brwldp {

inline constexpr double kZ99 = 2.5758293035489004;

struct EstimateCI {
  double point = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  long replicates = 0;
  long censored = 0;
  long used = 0;  // replicates entering the estimate (survivors when conditioned)
  std::uint64_t seed = 0;
};

struct BrwSnapshot {
  int n = 0;
  std::uint64_t population = 0;
  std::optional<double> max_position;  // empty when extinct
  double martingale_w = 0.0;
  bool censored = false;
  std::uint64_t particle_steps = 0;
};

enum class BrwSampler { automatic, breadth_first, pruned };

struct SimulationOptions {
  std::uint64_t budget = 10'000'000;  // particle-steps per replicate
  BrwSampler sampler = BrwSampler::automatic;
  unsigned threads = 0;  // 0: BRWLDP_THREADS or hardware concurrency
};

using Engine = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Engine for replicate `index` of a run rooted at `seed`.
inline Engine replicate_engine(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t key = splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Engine(seq);
}

inline unsigned worker_count(unsigned requested = 0) {
  unsigned n = requested;
  if (n == 0) {
    n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BRWLDP_THREADS")) {
      const long cap = std::strtol(env, nullptr, 10);
      if (cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
  }
  return n;
}

/// Runs fn(index) for index in [0, count) on a pool of workers and returns
/// the results in index order.
template <class Result, class Fn>
std::vector<Result> run_replicates(std::size_t count, unsigned threads, Fn fn) {
  std::vector<Result> out(count);
  const unsigned workers = std::max(1u, std::min<unsigned>(worker_count(threads), static_cast<unsigned>(std::max<std::size_t>(1, count))));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) out[i] = fn(i);
    });
  }
  pool.clear();
  return out;
}

inline EstimateCI wilson(long successes, long trials, double z = kZ99) {
  EstimateCI e;
  e.used = trials;
  if (trials <= 0) return e;
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  e.point = p;
  e.std_error = std::sqrt(p * (1.0 - p) / n);
  e.ci_low = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  e.ci_high = successes == trials ? 1.0 : std::min(1.0, centre + half);
  e.ci_low = std::min(e.ci_low, p);
  e.ci_high = std::max(e.ci_high, p);
  return e;
}

/// Normal-theory interval for a mean, with pairwise-summed moments.
inline EstimateCI mean_ci(const std::vector<double>& values, double z = kZ99) {
  EstimateCI e;
  e.used = static_cast<long>(values.size());
  if (values.empty()) return e;
  detail::CompensatedSum s;
  for (double v : values) s.add(v);
  const double n = static_cast<double>(values.size());
  const double mean = s.value() / n;
  detail::CompensatedSum ss;
  for (double v : values) ss.add((v - mean) * (v - mean));
  const double var = values.size() > 1 ? ss.value() / (n - 1.0) : 0.0;
  e.point = mean;
  e.std_error = std::sqrt(var / n);
  e.ci_low = mean - z * e.std_error;
  e.ci_high = mean + z * e.std_error;
  return e;
}

namespace detail {

inline std::int64_t draw_binomial(std::int64_t trials, double p, Engine& rng) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<std::int64_t> d(trials, p);
  return d(rng);
}

// Counts of a multinomial(trials, probs) draw by sequential binomials.
inline void draw_multinomial(std::int64_t trials, std::span<const double> probs, Engine& rng, std::vector<std::int64_t>& counts) {
  counts.assign(probs.size(), 0);
  double rest = 1.0;
  for (std::size_t i = 0; i + 1 < probs.size() && trials > 0; ++i) {
    const double p = rest > 0.0 ? std::clamp(probs[i] / rest, 0.0, 1.0) : 1.0;
    counts[i] = draw_binomial(trials, p, rng);
    trials -= counts[i];
    rest -= probs[i];
  }
  if (!probs.empty()) counts.back() += trials;
}

inline constexpr std::uint64_t kPopulationCeiling = std::uint64_t{1} << 60;

}  // namespace detail

/// Draws for one model: offspring counts, steps, and whole-population moves.
class ModelSampler {
public:
  explicit ModelSampler(const Model& model)
      : model_(model),
        offspring_(model.offspring.weights().begin(), model.offspring.weights().end()),
        step_(model.step.is_lattice() ? std::discrete_distribution<std::size_t>(model.step.probs().begin(), model.step.probs().end())
                                      : std::discrete_distribution<std::size_t>()) {}

  const Model& model() const { return model_; }

  int children(Engine& rng) { return static_cast<int>(offspring_(rng)); }

  double step(Engine& rng) {
    if (model_.step.is_lattice()) return static_cast<double>(model_.step.offsets()[step_(rng)]);
    std::normal_distribution<double> d(model_.step.mean(), model_.step.sigma());
    return d(rng);
  }

  /// Endpoint of an n-step walk.
  double walk(int n, Engine& rng) {
    if (!model_.step.is_lattice()) {
      std::normal_distribution<double> d(n * model_.step.mean(), model_.step.sigma() * std::sqrt(static_cast<double>(n)));
      return d(rng);
    }
    detail::draw_multinomial(n, model_.step.probs(), rng, counts_);
    double s = 0.0;
    for (std::size_t i = 0; i < counts_.size(); ++i) s += static_cast<double>(counts_[i]) * static_cast<double>(model_.step.offsets()[i]);
    return s;
  }

  /// Z after `generations` more generations from `start` particles; empty if
  /// the population passes 2^60.
  std::optional<std::uint64_t> population(std::uint64_t start, int generations, Engine& rng) {
    const auto w = model_.offspring.weights();
    std::uint64_t z = start;
    for (int g = 0; g < generations && z > 0; ++g) {
      detail::draw_multinomial(static_cast<std::int64_t>(z), w, rng, counts_);
      std::uint64_t next = 0;
      for (std::size_t k = 1; k < counts_.size(); ++k) next += static_cast<std::uint64_t>(counts_[k]) * k;
      if (next > detail::kPopulationCeiling) return std::nullopt;
      z = next;
    }
    return z;
  }

private:
  const Model& model_;
  std::discrete_distribution<std::size_t> offspring_;
  std::discrete_distribution<std::size_t> step_;
  std::vector<std::int64_t> counts_;
};

namespace detail {

inline void finish_snapshot(BrwSnapshot& s, const OffspringLaw& law) {
  s.martingale_w = static_cast<double>(s.population) / std::pow(law.mean(), s.n);
}

}  // namespace detail

/// Generation-by-generation simulation holding every particle of the current
/// generation.
inline BrwSnapshot sample_brw(const Model& model, int n, Engine& rng, const SimulationOptions& opts = {}) {
  ModelSampler sampler(model);
  BrwSnapshot snap;
  snap.n = n;
  std::vector<double> cur{0.0};
  std::vector<double> next;
  for (int g = 0; g < n && !cur.empty(); ++g) {
    next.clear();
    for (double pos : cur) {
      const int c = sampler.children(rng);
      for (int i = 0; i < c; ++i) next.push_back(pos + sampler.step(rng));
    }
    snap.particle_steps += next.size();
    if (snap.particle_steps > opts.budget) {
      snap.censored = true;
      return snap;
    }
    std::swap(cur, next);
  }
  snap.population = cur.size();
  if (!cur.empty()) snap.max_position = *std::max_element(cur.begin(), cur.end());
  detail::finish_snapshot(snap, model.offspring);
  return snap;
}

/// Depth-first branch-and-bound simulation with the same joint law of
/// (Z_n, M_n). Children are explored rightmost first; a particle at (g, s)
/// with s + (n - g) * max_step <= best found cannot carry the maximum, so only
/// its descendant count is drawn.
inline BrwSnapshot sample_brw_pruned(const Model& model, int n, Engine& rng, const SimulationOptions& opts = {}) {
  ModelSampler sampler(model);
  BrwSnapshot snap;
  snap.n = n;
  const double reach = model.step.support_max();
  struct Node {
    int gen;
    double pos;
  };
  std::vector<Node> stack{{0, 0.0}};
  std::vector<double> kids;
  // Subtrees that cannot beat the current best only contribute to Z_n; the
  // counts from all roots cut at one generation are drawn together.
  std::vector<std::uint64_t> pruned(static_cast<std::size_t>(n) + 1, 0);
  double best = -kInf;
  bool found = false;
  while (!stack.empty()) {
    const Node node = stack.back();
    stack.pop_back();
    if (node.gen == n) {
      ++snap.population;
      if (!found || node.pos > best) best = node.pos;
      found = true;
      continue;
    }
    if (found && node.pos + (n - node.gen) * reach <= best) {
      ++pruned[static_cast<std::size_t>(node.gen)];
      continue;
    }
    const int c = sampler.children(rng);
    kids.clear();
    for (int i = 0; i < c; ++i) kids.push_back(node.pos + sampler.step(rng));
    snap.particle_steps += static_cast<std::uint64_t>(c);
    if (snap.particle_steps > opts.budget) {
      snap.censored = true;
      return snap;
    }
    std::sort(kids.begin(), kids.end());
    for (double k : kids) stack.push_back({node.gen + 1, k});
  }
  for (int g = 0; g < n; ++g) {
    if (pruned[static_cast<std::size_t>(g)] == 0) continue;
    const auto z = sampler.population(pruned[static_cast<std::size_t>(g)], n - g, rng);
    if (!z || snap.population + *z > detail::kPopulationCeiling) {
      snap.censored = true;
      return snap;
    }
    snap.population += *z;
  }
  if (found) snap.max_position = best;
  detail::finish_snapshot(snap, model.offspring);
  return snap;
}

inline BrwSnapshot sample_brw_with(const Model& model, int n, Engine& rng, const SimulationOptions& opts) {
  const bool pruned = opts.sampler == BrwSampler::pruned ||
                      (opts.sampler == BrwSampler::automatic && model.step.is_lattice());
  return pruned ? sample_brw_pruned(model, n, rng, opts) : sample_brw(model, n, rng, opts);
}

inline BrwSnapshot sample_brw(const Model& model, int n, std::uint64_t seed, const SimulationOptions& opts = {}) {
  Engine rng = replicate_engine(seed, 0);
  return sample_brw(model, n, rng, opts);
}

/// Population from the Galton-Watson chain alone, then that many independent
/// walk endpoints.
inline BrwSnapshot sample_ind_max(const Model& model, int n, Engine& rng, const SimulationOptions& opts = {}) {
  ModelSampler sampler(model);
  BrwSnapshot snap;
  snap.n = n;
  const auto z = sampler.population(1, n, rng);
  if (!z || *z > opts.budget) {
    snap.censored = true;
    return snap;
  }
  snap.population = *z;
  snap.particle_steps = *z;
  if (*z > 0) {
    double best = -kInf;
    for (std::uint64_t i = 0; i < *z; ++i) best = std::max(best, sampler.walk(n, rng));
    snap.max_position = best;
  }
  detail::finish_snapshot(snap, model.offspring);
  return snap;
}

inline BrwSnapshot sample_ind_max(const Model& model, int n, std::uint64_t seed, const SimulationOptions& opts = {}) {
  Engine rng = replicate_engine(seed, 0);
  return sample_ind_max(model, n, rng, opts);
}

enum class Quantity { brw_max, ind_max, gw_count };

struct Event {
  Quantity quantity = Quantity::brw_max;
  Direction direction = Direction::at_most;
  double threshold = 0.0;
  bool conditioned = true;  // on {Z_n > 0}
};

/// Snapshots for replicates 0..count-1 of a run.
inline std::vector<BrwSnapshot> simulate_snapshots(const Model& model, Quantity quantity, int n, long replicates,
                                                   std::uint64_t seed, const SimulationOptions& opts = {}) {
  return run_replicates<BrwSnapshot>(static_cast<std::size_t>(replicates), opts.threads, [&](std::size_t i) {
    Engine rng = replicate_engine(seed, i);
    if (quantity == Quantity::brw_max) return sample_brw_with(model, n, rng, opts);
    if (quantity == Quantity::ind_max) return sample_ind_max(model, n, rng, opts);
    ModelSampler sampler(model);
    BrwSnapshot s;
    s.n = n;
    const auto z = sampler.population(1, n, rng);
    if (!z) {
      s.censored = true;
      return s;
    }
    s.population = *z;
    detail::finish_snapshot(s, model.offspring);
    return s;
  });
}

inline bool event_holds(const BrwSnapshot& s, const Event& ev) {
  const double value = ev.quantity == Quantity::gw_count ? static_cast<double>(s.population)
                                                         : (s.max_position ? *s.max_position : -kInf);
  return ev.direction == Direction::at_most ? value <= ev.threshold : value >= ev.threshold;
}

inline EstimateCI estimate_from_snapshots(const std::vector<BrwSnapshot>& snaps, const Event& ev, std::uint64_t seed) {
  long censored = 0;
  long trials = 0;
  long hits = 0;
  for (const auto& s : snaps) {
    if (s.censored) {
      ++censored;
      continue;
    }
    if (ev.conditioned && s.population == 0) continue;
    ++trials;
    if (event_holds(s, ev)) ++hits;
  }
  if (trials == 0) {
    if (censored == static_cast<long>(snaps.size())) throw BudgetError("estimate_event: all replicates censored");
    throw std::runtime_error("estimate_event: zero surviving replicates");
  }
  EstimateCI e = wilson(hits, trials);
  e.replicates = static_cast<long>(snaps.size());
  e.censored = censored;
  e.seed = seed;
  return e;
}

/// Proportion estimate of an event about the maximum or the population.
inline EstimateCI estimate_event(const Model& model, const Event& ev, int n, long replicates, std::uint64_t seed,
                                 const SimulationOptions& opts = {}) {
  if (replicates < 100) throw std::invalid_argument("estimate_event: needs at least 100 replicates");
  return estimate_from_snapshots(simulate_snapshots(model, ev.quantity, n, replicates, seed, opts), ev, seed);
}

/// Mean of W_n = Z_n / m^n over uncensored snapshots.
inline EstimateCI martingale_mean_from(const std::vector<BrwSnapshot>& snaps, std::uint64_t seed) {
  std::vector<double> w;
  long censored = 0;
  for (const auto& s : snaps) {
    if (s.censored)
      ++censored;
    else
      w.push_back(s.martingale_w);
  }
  if (w.empty()) throw BudgetError("martingale mean: all replicates censored");
  EstimateCI e = mean_ci(w);
  e.replicates = static_cast<long>(snaps.size());
  e.censored = censored;
  e.seed = seed;
  return e;
}

inline EstimateCI estimate_martingale_mean(const Model& model, int n, long replicates, std::uint64_t seed,
                                           const SimulationOptions& opts = {}) {
  return martingale_mean_from(simulate_snapshots(model, Quantity::brw_max, n, replicates, seed, opts), seed);
}

/// Mean of M_n / n over surviving uncensored snapshots.
inline EstimateCI speed_from(const std::vector<BrwSnapshot>& snaps, std::uint64_t seed) {
  std::vector<double> v;
  long censored = 0;
  for (const auto& s : snaps) {
    if (s.censored)
      ++censored;
    else if (s.max_position && s.n > 0)
      v.push_back(*s.max_position / s.n);
  }
  if (v.empty()) {
    if (censored == static_cast<long>(snaps.size())) throw BudgetError("speed: all replicates censored");
    throw std::runtime_error("speed: no surviving replicates");
  }
  EstimateCI e = mean_ci(v);
  e.replicates = static_cast<long>(snaps.size());
  e.censored = censored;
  e.seed = seed;
  return e;
}

inline EstimateCI estimate_speed(const Model& model, int n, long replicates, std::uint64_t seed, const SimulationOptions& opts = {}) {
  if (n <= 0) throw std::invalid_argument("estimate_speed: n must be positive");
  return speed_from(simulate_snapshots(model, Quantity::brw_max, n, replicates, seed, opts), seed);
}

/// Importance-sampled P(S_n >= x n) under the exponentially tilted step law
/// whose mean is x.
inline EstimateCI tilted_tail_rw(const StepLaw& step, double x, int n, long replicates, std::uint64_t seed, unsigned threads = 0) {
  if (!(x > step.mean())) throw std::domain_error("tilted_tail_rw: x must exceed the step mean (no tilt needed otherwise)");
  if (!(x < step.support_max()))
    throw std::domain_error("tilted_tail_rw: x at or beyond the support edge; use the exact boundary formula");
  if (n <= 0 || replicates < 2) throw std::invalid_argument("tilted_tail_rw: needs n >= 1 and replicates >= 2");
  const RatePoint rp = rate_rw(step, x);
  const double lambda = rp.argmax_lambda;
  const double cgf_value = step.cgf(lambda).value;
  const double target = x * n;

  std::vector<double> tilted;
  if (step.is_lattice()) {
    for (std::size_t i = 0; i < step.offsets().size(); ++i)
      tilted.push_back(step.probs()[i] * std::exp(lambda * static_cast<double>(step.offsets()[i]) - cgf_value));
    const double total = detail::sum_of(tilted);
    for (double& t : tilted) t /= total;
  }
  const auto weights = run_replicates<double>(static_cast<std::size_t>(replicates), threads, [&](std::size_t i) {
    Engine rng = replicate_engine(seed, i);
    double s = 0.0;
    if (step.is_lattice()) {
      std::vector<std::int64_t> counts;
      detail::draw_multinomial(n, tilted, rng, counts);
      for (std::size_t j = 0; j < counts.size(); ++j) s += static_cast<double>(counts[j]) * static_cast<double>(step.offsets()[j]);
    } else {
      std::normal_distribution<double> d(n * x, step.sigma() * std::sqrt(static_cast<double>(n)));
      s = d(rng);
    }
    return s >= target - 1e-9 ? std::exp(-lambda * s + n * cgf_value) : 0.0;
  });
  EstimateCI e = mean_ci(weights);
  e.ci_low = std::max(0.0, e.ci_low);
  e.replicates = replicates;
  e.seed = seed;
  return e;
}

/// n * P(Z_n > 0) for a critical offspring law.
inline EstimateCI critical_survival_mc(const OffspringLaw& offspring, int n, long replicates, std::uint64_t seed, unsigned threads = 0) {
  if (!offspring.critical()) throw ModelError("critical", "offspring mean must equal 1");
  if (!(offspring.weight(1) < 1.0)) throw ModelError("critical", "p(1) must be < 1");
  const Model model{offspring, StepLaw::lattice({0}, {1.0})};
  const auto alive = run_replicates<char>(static_cast<std::size_t>(replicates), threads, [&](std::size_t i) {
    Engine rng = replicate_engine(seed, i);
    ModelSampler sampler(model);
    const auto z = sampler.population(1, n, rng);
    return static_cast<char>(z && *z > 0);
  });
  long hits = 0;
  for (char a : alive) hits += a;
  EstimateCI e = wilson(hits, replicates);
  e.point *= n;
  e.std_error *= n;
  e.ci_low *= n;
  e.ci_high *= n;
  e.replicates = replicates;
  e.seed = seed;
  return e;
}

/// Two-sample Kolmogorov-Smirnov distance.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

/// Critical value c(alpha) * sqrt((n + m) / (n m)) of the two-sample test.
inline double ks_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width.
inline double dkw_band(std::size_t n, double alpha) { return std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n))); }

}  // namespace brwldp
