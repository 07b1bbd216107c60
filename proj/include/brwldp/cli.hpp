#pragma once

// Command-line surface: rates, exact, dominance, simulate, info.
//
// Exit codes: 0 success, 1 property violation or numeric failure, 2 config
// error, 3 resource/budget failure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brwldp/exact.hpp"
#include "brwldp/io.hpp"
#include "brwldp/mc.hpp"
#include "brwldp/model.hpp"
#include "brwldp/rates.hpp"

namespace brwldp::cli {

enum ExitCode : int { kOk = 0, kViolation = 1, kConfig = 2, kBudget = 3 };

struct RunConfig {
  std::string model_path;
  std::string xgrid = "-1:1:0.01";
  std::string x_list;  // comma separated; overrides xgrid for exact/simulate
  std::string n_list = "50,100,200";
  long replicates = 100000;
  std::optional<std::uint64_t> seed;
  std::string out;  // empty: stdout
  bool conditioned = true;
  int kcap = 2048;
  std::uint64_t budget = 10'000'000;
  bool with_speed = false;
  int n_max = 50;
  std::string fixture;
  std::string mode = "kesten-stigum";
  std::string snapshots;
  std::string quantity = "brw_max";
  std::string direction = "at_most";
  std::optional<double> threshold;
  std::string sampler = "auto";
  unsigned threads = 0;
};

namespace detail {

class Output {
public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw io::ConfigError("out: cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

private:
  std::ofstream file_;
};

inline Model load(const RunConfig& cfg) {
  if (cfg.model_path.empty()) throw io::ConfigError("model: --model PATH is required");
  return io::load_model(cfg.model_path);
}

inline void warn_assumptions(const Model& model, std::ostream& log) {
  if (!model.offspring.schroeder())
    log << "warning: schroeder: p(0) + p(1) = 0 (Boettcher case); rho = inf, lower-deviation rates are infinite\n";
}

inline std::vector<double> x_values(const RunConfig& cfg) {
  if (cfg.x_list.empty()) return io::parse_grid(cfg.xgrid);
  std::vector<double> xs;
  for (const auto& p : io::split(cfg.x_list, ',')) xs.push_back(io::parse_number(p));
  if (xs.empty()) throw io::ConfigError("x: empty list");
  return xs;
}

inline Direction parse_direction(const std::string& s) {
  if (s == "at_most") return Direction::at_most;
  if (s == "at_least") return Direction::at_least;
  throw io::ConfigError("direction: expected at_most or at_least, got \"" + s + "\"");
}

inline Quantity parse_quantity(const std::string& s) {
  if (s == "brw_max") return Quantity::brw_max;
  if (s == "ind_max") return Quantity::ind_max;
  if (s == "gw_count") return Quantity::gw_count;
  throw io::ConfigError("quantity: expected brw_max, ind_max or gw_count, got \"" + s + "\"");
}

inline BrwSampler parse_sampler(const std::string& s) {
  if (s == "auto") return BrwSampler::automatic;
  if (s == "breadth") return BrwSampler::breadth_first;
  if (s == "pruned") return BrwSampler::pruned;
  throw io::ConfigError("sampler: expected auto, breadth or pruned, got \"" + s + "\"");
}

template <class Fn>
int guarded(std::ostream& log, Fn fn) {
  try {
    return fn();
  } catch (const io::ConfigError& e) {
    log << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const ModelError& e) {
    log << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const CLI::Error& e) {
    log << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const BudgetError& e) {
    log << "error: budget: " << e.what() << '\n';
    return kBudget;
  } catch (const std::exception& e) {
    log << "error: numeric: " << e.what() << '\n';
    return kViolation;
  }
}

}  // namespace detail

/// Columns x, I, I_ind, I_brw, H_t_star.
inline int cmd_rates(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return detail::guarded(log, [&] {
    const Model model = detail::load(cfg);
    require_supercritical(model.offspring);
    detail::warn_assumptions(model, log);
    std::vector<double> xs = io::parse_grid(cfg.xgrid);
    const double x_star = speed(model.step, model.offspring);
    if (cfg.with_speed && x_star >= xs.front() && x_star <= xs.back() &&
        std::find(xs.begin(), xs.end(), x_star) == xs.end()) {
      xs.insert(std::upper_bound(xs.begin(), xs.end(), x_star), x_star);
    }
    detail::Output out(cfg.out);
    auto& os = out.stream();
    os << "x,I,I_ind,I_brw,H_t_star\n";
    for (double x : xs) {
      const RateRow r = rate_row(model.step, model.offspring, x, x_star);
      os << io::fmt(x) << ',' << io::fmt(r.rw) << ',' << io::fmt(r.ind) << ',' << io::fmt(r.brw) << ','
         << (r.t_star ? io::fmt(*r.t_star) : std::string("nan")) << '\n';
    }
    return kOk;
  });
}

struct ExactRow {
  double x;
  int n;
  std::string quantity;
  Direction direction;
  double probability;
  double rate_estimate;
  double analytic;
};

/// Per (n, x): exact probability of {M_n/n beyond x}, running decay-rate
/// estimate, analytic rate, absolute error. Sorted by n, then x.
inline std::vector<ExactRow> exact_table(const Model& model, const std::vector<double>& xs, const std::vector<int>& ns_in,
                                         bool conditioned) {
  require_lattice(model.step);
  require_supercritical(model.offspring);
  std::vector<int> ns = ns_in;
  std::sort(ns.begin(), ns.end());
  ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
  for (int n : ns) {
    try {
      (void)brwldp::detail::grid_bounds(model.step, n);
    } catch (const BudgetError& e) {
      throw BudgetError(std::string(e.what()) + " (offending n = " + std::to_string(n) + ")");
    }
  }
  const double x_star = speed(model.step, model.offspring);
  const auto brw = brw_max_cdfs(model.step, model.offspring, ns.back());

  std::vector<ExactRow> rows;
  for (int n : ns) {
    const LatticeCdf ind = ind_max_cdf(model.step, model.offspring, n);
    const LatticeCdf& b = brw[static_cast<std::size_t>(n)];
    for (double x : xs) {
      const Direction dir = x > x_star ? Direction::at_least : Direction::at_most;
      const double nx = x * n;
      const auto y = static_cast<std::int64_t>(dir == Direction::at_least ? std::ceil(nx - 1e-9) : std::floor(nx + 1e-9));
      auto prob = [&](const LatticeCdf& c) { return conditioned ? conditional_prob(c, dir, y) : unconditional_prob(c, dir, y); };
      rows.push_back({x, n, "brw_max", dir, prob(b), std::nan(""), rate_brw(model.step, model.offspring, x, x_star)});
      rows.push_back({x, n, "ind_max", dir, prob(ind), std::nan(""), rate_ind(model.step, model.offspring, x, x_star)});
    }
  }
  // Running estimates use every n up to the current one for the same (x, quantity).
  for (auto& r : rows) {
    std::vector<int> seq_n;
    std::vector<double> seq_p;
    for (const auto& o : rows) {
      if (o.x == r.x && o.quantity == r.quantity && o.n <= r.n && o.n > 0) {
        seq_n.push_back(o.n);
        seq_p.push_back(o.probability);
      }
    }
    try {
      r.rate_estimate = finite_n_rate(seq_n, seq_p, RateMode::successive);
    } catch (const std::domain_error&) {
      r.rate_estimate = std::nan("");
    }
  }
  return rows;
}

inline int cmd_exact(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return detail::guarded(log, [&] {
    const Model model = detail::load(cfg);
    detail::warn_assumptions(model, log);
    const auto rows = exact_table(model, detail::x_values(cfg), io::parse_int_list(cfg.n_list), cfg.conditioned);
    detail::Output out(cfg.out);
    auto& os = out.stream();
    os << "x,n,quantity,direction,probability,rate_estimate,analytic,abs_error\n";
    for (const auto& r : rows) {
      const double err = std::abs(r.rate_estimate - r.analytic);
      os << io::fmt(r.x) << ',' << r.n << ',' << r.quantity << ',' << (r.direction == Direction::at_most ? "at_most" : "at_least")
         << ',' << io::fmt(r.probability) << ',' << io::fmt(r.rate_estimate) << ',' << io::fmt(r.analytic) << ','
         << io::fmt(std::isnan(r.rate_estimate) ? std::nan("") : err) << '\n';
    }
    return kOk;
  });
}

/// Checks P(Mind_n <= y) <= P(M_n <= y) for every n <= n_max; exit 1 on any
/// violation. With a fixture, checks the rows of that CSV instead.
inline int cmd_dominance(const RunConfig& cfg, std::ostream& report = std::cout, std::ostream& log = std::cerr) {
  return detail::guarded(log, [&] {
    std::vector<DominanceRow> rows;
    if (!cfg.fixture.empty()) {
      std::ifstream in(cfg.fixture);
      if (!in) throw io::ConfigError("fixture: cannot open " + cfg.fixture);
      rows = io::read_dominance_csv(in);
    } else {
      const Model model = detail::load(cfg);
      require_lattice(model.step);
      require_supercritical(model.offspring);
      if (cfg.n_max < 0) throw io::ConfigError("nmax: must be nonnegative");
      (void)brwldp::detail::grid_bounds(model.step, cfg.n_max);
      rows = dominance_rows(model.step, model.offspring, cfg.n_max);
      if (!cfg.out.empty()) {
        detail::Output out(cfg.out);
        io::write_dominance_csv(out.stream(), rows);
      }
    }
    const DominanceReport rep = dominance_report(rows);
    const GapProfile* widest = nullptr;
    for (const auto& g : rep.profile) {
      if (!widest || g.max_gap > widest->max_gap) widest = &g;
    }
    report << "dominance: " << (rep.passed ? "PASS" : "FAIL") << '\n';
    report << "rows checked: " << rows.size() << ", tolerance " << io::fmt(rep.tolerance) << '\n';
    report << "violations: " << rep.violations << ", largest excess of P(Mind<=y) over P(M<=y): "
           << io::fmt(rep.max_violation) << " at n=" << rep.violation_n << " y=" << rep.violation_y << '\n';
    if (widest)
      report << "largest gap P(M<=y) - P(Mind<=y): " << io::fmt(widest->max_gap) << " at n=" << widest->n << " y=" << widest->y_at
             << '\n';
    report << "conditioning: none (unconditioned CDFs, extinction counted as -inf)\n";
    return rep.passed ? kOk : kViolation;
  });
}

inline nlohmann::ordered_json summary_json(const EstimateCI& e) {
  nlohmann::ordered_json j;
  j["point"] = e.point;
  j["stderr"] = e.std_error;
  j["ci_low"] = e.ci_low;
  j["ci_high"] = e.ci_high;
  j["confidence"] = 0.99;
  j["replicates"] = e.replicates;
  j["censored"] = e.censored;
  j["used"] = e.used;
  j["seed"] = e.seed;
  return j;
}

inline void write_snapshots(const std::string& path, const std::vector<BrwSnapshot>& snaps) {
  detail::Output out(path);
  auto& os = out.stream();
  os << "replicate,n,population,max_position,martingale_w,censored\n";
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const auto& s = snaps[i];
    os << i << ',' << s.n << ',' << s.population << ',' << io::fmt(s.max_position ? *s.max_position : -kInf) << ','
       << io::fmt(s.martingale_w) << ',' << (s.censored ? 1 : 0) << '\n';
  }
}

/// Modes: kesten-stigum, speed, event, tilted, critical.
inline int cmd_simulate(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return detail::guarded(log, [&] {
    const Model model = detail::load(cfg);
    if (cfg.replicates < 100) throw io::ConfigError("replicates: must be >= 100");
    const auto ns = io::parse_int_list(cfg.n_list);
    if (ns.size() != 1) throw io::ConfigError("n: simulate takes a single generation count");
    const int n = ns.front();
    std::uint64_t seed = 0;
    if (cfg.seed) {
      seed = *cfg.seed;
    } else {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
      log << "seed: " << seed << '\n';
    }
    SimulationOptions opts;
    opts.budget = cfg.budget;
    opts.sampler = detail::parse_sampler(cfg.sampler);
    opts.threads = cfg.threads;

    nlohmann::ordered_json summary;
    summary["mode"] = cfg.mode;
    summary["n"] = n;
    EstimateCI est;
    std::vector<BrwSnapshot> snaps;
    if (cfg.mode == "kesten-stigum" || cfg.mode == "speed") {
      if (cfg.mode == "kesten-stigum" || model.offspring.supercritical()) require_supercritical(model.offspring);
      snaps = simulate_snapshots(model, Quantity::brw_max, n, cfg.replicates, seed, opts);
      est = cfg.mode == "kesten-stigum" ? martingale_mean_from(snaps, seed) : speed_from(snaps, seed);
      summary["quantity"] = cfg.mode == "kesten-stigum" ? "mean W_n" : "mean M_n/n given Z_n > 0";
      if (cfg.mode == "speed") summary["x_star"] = speed(model.step, model.offspring);
    } else if (cfg.mode == "event") {
      if (!cfg.threshold) throw io::ConfigError("threshold: required for event mode");
      Event ev{detail::parse_quantity(cfg.quantity), detail::parse_direction(cfg.direction), *cfg.threshold, cfg.conditioned};
      snaps = simulate_snapshots(model, ev.quantity, n, cfg.replicates, seed, opts);
      est = estimate_from_snapshots(snaps, ev, seed);
      summary["quantity"] = cfg.quantity;
      summary["direction"] = cfg.direction;
      summary["threshold"] = *cfg.threshold;
      summary["conditioned"] = cfg.conditioned;
    } else if (cfg.mode == "tilted") {
      const auto xs = detail::x_values(cfg);
      if (cfg.x_list.empty() || xs.size() != 1) throw io::ConfigError("x: tilted mode takes a single --x value");
      est = tilted_tail_rw(model.step, xs.front(), n, cfg.replicates, seed, cfg.threads);
      summary["quantity"] = "P(S_n >= x n)";
      summary["x"] = xs.front();
      summary["relative_stderr"] = est.point > 0.0 ? est.std_error / est.point : kInf;
    } else if (cfg.mode == "critical") {
      est = critical_survival_mc(model.offspring, n, cfg.replicates, seed, cfg.threads);
      summary["quantity"] = "n P(Z_n > 0)";
      summary["exact"] = n * gw_survival(model.offspring, n);
      summary["limit"] = 2.0 / model.offspring.variance();
    } else {
      throw io::ConfigError("mode: expected kesten-stigum, speed, event, tilted or critical, got \"" + cfg.mode + "\"");
    }
    const auto fields = summary_json(est);
    for (const auto& [k, v] : fields.items()) summary[k] = v;
    if (!cfg.snapshots.empty()) {
      if (snaps.empty()) throw io::ConfigError("snapshots: only kesten-stigum, speed and event modes produce snapshots");
      write_snapshots(cfg.snapshots, snaps);
    }
    detail::Output out(cfg.out);
    out.stream() << summary.dump(2) << '\n';
    return kOk;
  });
}

/// Derived constants of a model.
inline int cmd_info(const RunConfig& cfg, std::ostream& os = std::cout, std::ostream& log = std::cerr) {
  return detail::guarded(log, [&] {
    const Model model = detail::load(cfg);
    nlohmann::ordered_json j;
    const auto& o = model.offspring;
    j["m"] = o.mean();
    j["q"] = o.extinction();
    j["rho"] = std::isinf(o.rho()) ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(o.rho());
    j["k_star"] = o.k_star();
    j["schroeder"] = o.schroeder();
    j["supercritical"] = o.supercritical();
    j["step_mean"] = model.step.mean();
    if (o.supercritical()) j["x_star"] = speed(model.step, o);
    os << j.dump(2) << '\n';
    return kOk;
  });
}

/// Parses argv and dispatches to a command.
inline int main(int argc, const char* const* argv, std::ostream& log = std::cerr) {
  CLI::App app{"Large-deviation rates for the maximum of a branching random walk"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::uint64_t seed = 0;
  std::string conditioned = "true";

  auto add_model = [&](CLI::App* sub) { sub->add_option("--model", cfg.model_path, "Model JSON file")->required(); };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", cfg.out, "Output path (default stdout)"); };

  auto* rates = app.add_subcommand("rates", "Rate-function curves as CSV");
  add_model(rates);
  add_out(rates);
  rates->add_option("--xgrid", cfg.xgrid, "LO:HI:STEP");
  rates->add_flag("--with-speed", cfg.with_speed, "Insert x* into the grid");

  auto* exact = app.add_subcommand("exact", "Exact lattice oracle vs analytic rates");
  add_model(exact);
  add_out(exact);
  exact->add_option("--xgrid", cfg.xgrid, "LO:HI:STEP");
  exact->add_option("--x", cfg.x_list, "Comma-separated x values (overrides --xgrid)");
  exact->add_option("--n", cfg.n_list, "Comma-separated generation counts");
  exact->add_option("--conditioned", conditioned, "Condition on {Z_n > 0} (true/false)");

  auto* dom = app.add_subcommand("dominance", "Check that the independent-walk maximum dominates");
  dom->add_option("--model", cfg.model_path, "Model JSON file");
  dom->add_option("--nmax", cfg.n_max, "Largest generation");
  dom->add_option("--out", cfg.out, "Write the CDF table (n,y,cdf_brw,cdf_ind,base)");
  dom->add_option("--fixture", cfg.fixture, "Check a CDF table instead of computing one");

  auto* sim = app.add_subcommand("simulate", "Monte Carlo estimates");
  add_model(sim);
  add_out(sim);
  sim->add_option("--mode", cfg.mode, "kesten-stigum | speed | event | tilted | critical");
  sim->add_option("--n", cfg.n_list, "Generation count");
  auto* seed_opt = sim->add_option("--seed", seed, "Root seed (generated and echoed when absent)");
  sim->add_option("--replicates", cfg.replicates, "Replicates (>= 100)");
  sim->add_option("--budget", cfg.budget, "Particle-step budget per replicate");
  sim->add_option("--conditioned", conditioned, "Condition on {Z_n > 0} (true/false)");
  sim->add_option("--x", cfg.x_list, "Tilted-tail speed x");
  sim->add_option("--threshold", cfg.threshold, "Event threshold");
  sim->add_option("--quantity", cfg.quantity, "brw_max | ind_max | gw_count");
  sim->add_option("--direction", cfg.direction, "at_most | at_least");
  sim->add_option("--snapshots", cfg.snapshots, "Per-replicate CSV");
  sim->add_option("--sampler", cfg.sampler, "auto | breadth | pruned");
  sim->add_option("--kcap", cfg.kcap, "Population cap for count-only sampling");
  sim->add_option("--threads", cfg.threads, "Worker threads (0: BRWLDP_THREADS or all cores)");

  auto* info = app.add_subcommand("info", "Derived constants of a model");
  add_model(info);

  // CLI11 wants a mutable argv-like vector in reverse order.
  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    log << "error: " << e.what() << '\n';
    return kConfig;
  }
  if (*seed_opt) cfg.seed = seed;
  if (conditioned == "true" || conditioned == "1")
    cfg.conditioned = true;
  else if (conditioned == "false" || conditioned == "0")
    cfg.conditioned = false;
  else {
    log << "error: conditioned: expected true or false\n";
    return kConfig;
  }

  if (rates->parsed()) return cmd_rates(cfg, log);
  if (exact->parsed()) return cmd_exact(cfg, log);
  if (dom->parsed()) {
    if (cfg.model_path.empty() && cfg.fixture.empty()) {
      log << "error: model: --model PATH or --fixture PATH is required\n";
      return kConfig;
    }
    return cmd_dominance(cfg, std::cout, log);
  }
  if (sim->parsed()) return cmd_simulate(cfg, log);
  return cmd_info(cfg, std::cout, log);
}

}  // namespace brwldp::cli
