#pragma once

// Model files (JSON) and locale-independent CSV formatting.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "brwldp/exact.hpp"
#include "brwldp/model.hpp"

namespace brwldp::io {

class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline const nlohmann::json& member(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + "." + key + ": missing key");
  return *it;
}

inline std::vector<double> number_array(const nlohmann::json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a nonempty array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(where + ": expected a nonempty array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

/// {"offspring": {"weights": [...]}, "step": {"kind": "lattice", "offsets":
/// [...], "probs": [...]} | {"kind": "gaussian", "sigma": s}}
inline Model parse_model(const nlohmann::json& doc) {
  const auto& off = detail::member(doc, "offspring", "model");
  const auto weights = detail::number_array(detail::member(off, "weights", "offspring"), "offspring.weights");
  const auto& st = detail::member(doc, "step", "model");
  const auto& kind = detail::member(st, "kind", "step");
  if (!kind.is_string()) throw ConfigError("step.kind: expected \"lattice\" or \"gaussian\"");
  const auto k = kind.get<std::string>();

  OffspringLaw offspring = [&] {
    try {
      return build_offspring(weights);
    } catch (const ModelError& e) {
      throw ConfigError(std::string("offspring.weights: ") + e.what());
    }
  }();

  if (k == "lattice") {
    const auto raw = detail::number_array(detail::member(st, "offsets", "step"), "step.offsets");
    std::vector<std::int64_t> offsets;
    for (double o : raw) {
      if (o != std::floor(o)) throw ConfigError("step.offsets: lattice offsets must be integers");
      offsets.push_back(static_cast<std::int64_t>(o));
    }
    const auto probs = detail::number_array(detail::member(st, "probs", "step"), "step.probs");
    try {
      return Model{std::move(offspring), StepLaw::lattice(std::move(offsets), probs)};
    } catch (const ModelError& e) {
      throw ConfigError(std::string("step: ") + e.what());
    }
  }
  if (k == "gaussian") {
    const auto& sigma = detail::member(st, "sigma", "step");
    if (!sigma.is_number()) throw ConfigError("step.sigma: expected a number");
    double mean = 0.0;
    if (auto it = st.find("mean"); it != st.end()) {
      if (!it->is_number()) throw ConfigError("step.mean: expected a number");
      mean = it->get<double>();
    }
    try {
      return Model{std::move(offspring), StepLaw::gaussian(sigma.get<double>(), mean)};
    } catch (const ModelError& e) {
      throw ConfigError(std::string("step.sigma: ") + e.what());
    }
  }
  throw ConfigError("step.kind: expected \"lattice\" or \"gaussian\", got \"" + k + "\"");
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("model: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model: " + path + " is not valid JSON (" + e.what() + ")");
  }
  return parse_model(doc);
}

/// Shortest round-trip decimal; "inf"/"-inf"/"nan" for non-finite values.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, end);
}

inline double parse_number(const std::string& s) {
  if (s == "inf" || s == "+inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan") return std::nan("");
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) throw ConfigError("not a number: \"" + s + "\"");
  return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

/// Grid "LO:HI:STEP", endpoints inclusive; points are rounded to 1e-12.
inline std::vector<double> parse_grid(const std::string& spec) {
  const auto parts = split(spec, ':');
  if (parts.size() != 3) throw ConfigError("xgrid: expected LO:HI:STEP, got \"" + spec + "\"");
  const double lo = parse_number(parts[0]);
  const double hi = parse_number(parts[1]);
  const double step = parse_number(parts[2]);
  if (!(step > 0.0) || !(hi >= lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw ConfigError("xgrid: need finite LO <= HI and STEP > 0");
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> xs;
  for (long i = 0; i < count; ++i) xs.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  return xs;
}

inline std::vector<int> parse_int_list(const std::string& spec) {
  std::vector<int> out;
  for (const auto& p : split(spec, ',')) {
    int v = 0;
    auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (ec != std::errc{} || end != p.data() + p.size() || v < 0)
      throw ConfigError("n: expected a comma-separated list of nonnegative integers, got \"" + spec + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("n: empty list");
  return out;
}

inline const char* dominance_header() { return "n,y,cdf_brw,cdf_ind,base"; }

inline void write_dominance_csv(std::ostream& out, const std::vector<DominanceRow>& rows) {
  out << dominance_header() << '\n';
  for (const auto& r : rows)
    out << r.n << ',' << r.y << ',' << fmt(r.cdf_brw) << ',' << fmt(r.cdf_ind) << ',' << fmt(r.base) << '\n';
}

inline std::vector<DominanceRow> read_dominance_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("fixture: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != dominance_header()) throw ConfigError(std::string("fixture: header must be ") + dominance_header());
  std::vector<DominanceRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw ConfigError("fixture: expected 5 columns in \"" + line + "\"");
    rows.push_back({static_cast<int>(parse_number(f[0])), static_cast<std::int64_t>(parse_number(f[1])), parse_number(f[2]),
                    parse_number(f[3]), parse_number(f[4])});
  }
  return rows;
}

}  // namespace brwldp::io
