// Acceptance suite. `acceptance` runs every criterion; `acceptance ID` runs one.
// Each criterion prints one PASS/FAIL line; the exit code is nonzero if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "brwldp/exact.hpp"
#include "brwldp/io.hpp"
#include "brwldp/mc.hpp"
#include "brwldp/rates.hpp"

using namespace brwldp;
namespace fs = std::filesystem;

namespace {

const OffspringLaw kA = build_offspring({0, 0.5, 0.5});
const OffspringLaw kQ = build_offspring({0.25, 0, 0.75});
const StepLaw kRad = StepLaw::rademacher();
const Model kModelA{kA, kRad};

double rademacher_rate(double x) {
  if (std::abs(x) > 1.0) return kInf;
  auto t = [](double u) { return u == 0.0 ? 0.0 : u * std::log(u); };
  return std::log(2.0) + t((1.0 + x) / 2.0) + t((1.0 - x) / 2.0);
}

// Root of I(x) = log 1.5 by bisection on the closed form.
double oracle_speed() {
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (rademacher_rate(mid) <= std::log(1.5) ? lo : hi) = mid;
  }
  return lo;
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v) { return io::fmt(v); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double successive_rate(const LatticeCdf& a, const LatticeCdf& b, Direction dir, double x) {
  auto y = [&](int n) {
    return static_cast<std::int64_t>(dir == Direction::at_least ? std::ceil(x * n - 1e-9) : std::floor(x * n + 1e-9));
  };
  const std::vector<int> ns{a.n, b.n};
  const std::vector<double> ps{conditional_prob(a, dir, y(a.n)), conditional_prob(b, dir, y(b.n))};
  return finite_n_rate(ns, ps, RateMode::successive);
}

Outcome c1() {
  const auto t0 = std::chrono::steady_clock::now();
  const double target = rademacher_rate(0.9) - std::log(1.5);
  const auto brw = brw_max_cdfs(kRad, kA, 200);
  const double r_brw = successive_rate(brw[100], brw[200], Direction::at_least, 0.9);
  const double r_ind = successive_rate(ind_max_cdf(kRad, kA, 100), ind_max_cdf(kRad, kA, 200), Direction::at_least, 0.9);
  const double secs = seconds_since(t0);
  const bool pass = std::abs(r_brw - target) <= 0.02 && std::abs(r_ind - target) <= 0.02 && secs < 30.0;
  return {pass, "target " + num(target) + ", brw " + num(r_brw) + ", ind " + num(r_ind) + " (tol 0.02), " + num(secs) + " s (< 30)"};
}

Outcome c2() {
  const auto brw = brw_max_cdfs(kRad, kA, 200);
  const double r_brw = successive_rate(brw[100], brw[200], Direction::at_most, 0.0);
  const double r_ind = successive_rate(ind_max_cdf(kRad, kA, 100), ind_max_cdf(kRad, kA, 200), Direction::at_most, 0.0);
  const double h = solve_H(kRad, kA, 0.0).value;
  const double rho = std::log(2.0);
  const bool pass = std::abs(r_ind - rho) <= 0.03 && std::abs(r_brw - h) <= 0.03 && r_brw < r_ind - 0.1;
  return {pass, "ind " + num(r_ind) + " vs rho " + num(rho) + ", brw " + num(r_brw) + " vs H(0) " + num(h) + " (tol 0.03), gap " +
                    num(r_ind - r_brw) + " (> 0.1)"};
}

Outcome c3() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = check_dominance(kRad, kA, 50, 1e-11);
  const auto q = check_dominance(kRad, kQ, 50, 1e-11);
  const double secs = seconds_since(t0);
  const bool pass = a.passed && q.passed && a.violations == 0 && q.violations == 0 && secs < 20.0;
  return {pass, "violations: model A " + std::to_string(a.violations) + ", [0.25,0,0.75] " + std::to_string(q.violations) +
                    " (tol 1e-11), " + num(secs) + " s (< 20)"};
}

Outcome c4() {
  std::vector<int> ns;
  std::vector<double> ps;
  for (int n : {25, 50, 100, 200}) {
    ns.push_back(n);
    ps.push_back(gw_pmf(kA, n, 4).probabilities[1]);
  }
  const double r_single = finite_n_rate(ns, ps);
  const int n = 200;
  const double target = std::log(2.0) * (1.0 - 0.2 / std::log(1.5));
  const auto br = gw_cdf_bracket(kA, n, std::exp(0.2 * n));
  const double r_hi = -std::log(br.conditional_lower()) / n;
  const double r_lo = -std::log(br.conditional_upper()) / n;
  const bool pass = std::abs(r_single - std::log(2.0)) <= 1e-12 && br.lower > 0.0 && std::abs(r_hi - target) <= 0.03 &&
                    std::abs(r_lo - target) <= 0.03;
  return {pass, "P(Z_n=1) rate " + num(r_single) + " (log 2 to 1e-12); P(Z_200 <= e^40 | Z_200 > 0) in [" + num(br.conditional_lower()) +
                    ", " + num(br.conditional_upper()) + "], rate in [" + num(r_lo) + ", " + num(r_hi) + "] vs I_GW(0.2) " + num(target) +
                    " (tol 0.03)"};
}

Outcome c5() {
  const auto e = estimate_martingale_mean(kModelA, 20, 100000, 20250101);
  const double z = (e.point - 1.0) / e.std_error;
  return {std::abs(z) <= 3.0 && e.censored == 0,
          "mean W_20 " + num(e.point) + " +- " + num(e.std_error) + " over " + std::to_string(e.replicates) + " replicates, z = " + num(z) +
              " (|z| <= 3)"};
}

Outcome c6() {
  const auto crit = build_offspring({0.5, 0, 0.5});
  const double exact1000 = 1000 * gw_survival(crit, 1000);
  const double exact200 = 200 * gw_survival(crit, 200);
  const auto e = critical_survival_mc(crit, 200, 1000000, 6);
  const bool pass = std::abs(exact1000 / 2.0 - 1.0) <= 0.03 && e.ci_low <= exact200 && exact200 <= e.ci_high;
  return {pass, "1000 P(Z_1000 > 0) = " + num(exact1000) + " (within 3% of 2); MC 200 P(Z_200 > 0) CI [" + num(e.ci_low) + ", " +
                    num(e.ci_high) + "] vs exact " + num(exact200)};
}

Outcome c7a() {
  const double xs = oracle_speed();
  const auto c = brw_max_cdf(kRad, kA, 200);
  std::int64_t median = c.hi;
  for (std::int64_t y = c.lo; y <= c.hi; ++y) {
    if (conditional_prob(c, Direction::at_most, y) >= 0.5) {
      median = y;
      break;
    }
  }
  const double m = static_cast<double>(median) / 200.0;
  return {std::abs(m - xs) <= 0.05, "oracle median M_200/200 = " + num(m) + " vs x* " + num(xs) + " (tol 0.05)"};
}

Outcome c7b() {
  const double xs = oracle_speed();
  const auto e = estimate_speed(kModelA, 60, 10000, 7);
  return {std::abs(e.point - xs) <= 0.05 && e.censored == 0,
          "MC mean M_60/60 = " + num(e.point) + " +- " + num(e.std_error) + " (" + std::to_string(e.censored) + " censored) vs x* " + num(xs) +
              " (tol 0.05)"};
}

Outcome c8() {
  const double xs = speed(kRad, kA);
  double worst_convex = 0.0;
  std::vector<double> b;
  for (int i = 0; i <= 100; ++i) b.push_back(rate_brw(kRad, kA, xs * i / 100.0, xs));
  for (int i = 1; i < 100; ++i) worst_convex = std::max(worst_convex, b[i] - 0.5 * (b[i - 1] + b[i + 1]));
  double worst_concave = 0.0;
  std::vector<double> d;
  for (int i = 0; i <= 100; ++i) d.push_back(rate_ind(kRad, kA, xs * i / 100.0, xs));
  for (int i = 1; i < 100; ++i) worst_concave = std::max(worst_concave, 0.5 * (d[i - 1] + d[i + 1]) - d[i]);
  // Below x* the two rates meet where the optimal time fraction is 1, so the
  // ordering is checked to round-off.
  double worst_order = 0.0;
  bool equal_above = true;
  for (int i = 0; i <= 200; ++i) {
    const double x = -1.0 + 0.01 * i;
    const double ind = rate_ind(kRad, kA, x, xs);
    const double brw = rate_brw(kRad, kA, x, xs);
    if (x < xs)
      worst_order = std::max(worst_order, brw - ind);
    else
      equal_above = equal_above && ind == brw;
  }
  const bool ordered = worst_order <= 1e-12 && equal_above && rate_ind(kRad, kA, xs, xs) == 0.0 && rate_brw(kRad, kA, xs, xs) == 0.0;
  const auto bott = build_offspring({0, 0, 1});
  const double xb = speed(kRad, bott);
  bool infinite = true;
  for (int i = 0; i < 100; ++i) infinite = infinite && std::isinf(rate_ind(kRad, bott, -1.0 + (xb + 1.0) * i / 100.0, xb));
  const bool pass = worst_convex <= 1e-7 && worst_concave <= 1e-7 && ordered && infinite;
  return {pass, "convexity defect " + num(worst_convex) + ", concavity defect " + num(worst_concave) + " (tol 1e-7), max(I_brw - I_ind) below x* " + num(worst_order) +
                    " (tol 1e-12), equality at/above x* " + (equal_above ? "holds" : "broken") + ", Boettcher I_ind below x* " + (infinite ? "inf" : "finite")};
}

Outcome c9() {
  const auto skew = StepLaw::lattice({-2, 0, 1, 3}, {0.1, 0.4, 0.3, 0.2});
  struct Cell {
    const StepLaw* step;
    double x;
    int n;
  };
  const std::vector<Cell> cells{{&kRad, 0.3, 50},   {&kRad, 0.5, 100}, {&kRad, 0.7, 100}, {&kRad, 0.9, 100}, {&kRad, 0.5, 200},
                                {&skew, 1.0, 40},   {&skew, 1.5, 60},  {&skew, 2.0, 80},  {&skew, 2.5, 100}, {&skew, 1.2, 150}};
  double worst = 0.0;
  int i = 0;
  for (const auto& c : cells) {
    const double exact = rw_cdf(*c.step, c.n).at_least(static_cast<std::int64_t>(std::ceil(c.x * c.n - 1e-9)));
    const auto e = tilted_tail_rw(*c.step, c.x, c.n, 100000, 900 + i++);
    worst = std::max(worst, std::abs(e.point / exact - 1.0));
  }
  return {worst <= 0.05, "worst relative error " + num(worst) + " over " + std::to_string(cells.size()) + " cells (tol 0.05)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome c10() {
  const fs::path dir = fs::temp_directory_path() / "brwldp_acceptance_10";
  fs::create_directories(dir);
  const std::string cli = BRWLDP_CLI;
  const std::string models = BRWLDP_MODELS;
  struct Run {
    std::string name;
    std::string args;
  };
  const std::vector<Run> runs{
      {"ks", "--mode kesten-stigum --n 15 --replicates 5000"},
      {"speed", "--mode speed --n 30 --replicates 2000"},
      {"event", "--mode event --n 12 --replicates 5000 --threshold 6 --direction at_least --quantity brw_max"},
      {"ind", "--mode event --n 12 --replicates 5000 --threshold 0 --direction at_most --quantity ind_max"},
      {"tilted", "--mode tilted --x 0.9 --n 100 --replicates 5000"},
  };
  bool same = true;
  int compared = 0;
  for (const auto& r : runs) {
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "1", "4"}) {
      const fs::path json = dir / (r.name + "_" + std::to_string(outputs.size()) + ".json");
      const fs::path csv = dir / (r.name + "_" + std::to_string(outputs.size()) + ".csv");
      std::string cmd = "\"" + cli + "\" simulate --model \"" + models + "/model_a.json\" --seed 42 " + r.args + " --threads " + threads +
                        " --out \"" + json.string() + "\"";
      if (r.name != "tilted") cmd += " --snapshots \"" + csv.string() + "\"";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
      outputs.push_back(slurp(json) + (r.name != "tilted" ? slurp(csv) : std::string()));
    }
    same = same && outputs[0] == outputs[1] && outputs[0] == outputs[2] && !outputs[0].empty();
    ++compared;
  }
  fs::remove_all(dir);
  return {same, std::to_string(compared) + " simulate commands rerun with seed 42 (1, 1 and 4 threads): outputs " +
                    (same ? "bit-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1", c1}, {"2", c2}, {"3", c3}, {"4", c4}, {"5", c5}, {"6", c6}, {"7a", c7a}, {"7b", c7b}, {"8", c8}, {"9", c9}, {"10", c10}};
  const std::map<std::string, std::string> titles{
      {"1", "upper-deviation rate above x*"},
      {"2", "lower-deviation rates differ at x = 0"},
      {"3", "stochastic domination M_n <= M~_n"},
      {"4", "Galton-Watson rates"},
      {"5", "Kesten-Stigum mean of W_20"},
      {"6", "critical survival n P(Z_n > 0) -> 2/Var"},
      {"7a", "speed: oracle median at n = 200"},
      {"7b", "speed: MC mean at n = 60"},
      {"8", "rate-function shape"},
      {"9", "importance sampling of walk tails"},
      {"10", "determinism of MC commands"},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  bool all_pass = true;
  int ran = 0;
  for (const auto& [id, fn] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all_pass = all_pass && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << titles.at(id) << ": " << o.detail << "  ("
              << num(std::round(seconds_since(t0) * 100.0) / 100.0) << " s)" << std::endl;
  }
  if (ran == 0) {
    std::cerr << "unknown criterion\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}
