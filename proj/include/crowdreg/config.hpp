#pragma once

// Experiment configuration and its text format.
//
// One `key = value` per line; `#` starts a comment. List-valued keys take
// comma-separated items, and integer lists also accept `lo..hi` ranges, so
// `r = 2..4, 8` means {2, 3, 4, 8}. A `preset` line is applied before the rest
// of the file regardless of where it appears. Unknown keys are errors.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crowdreg/csv.hpp"
#include "crowdreg/error.hpp"
#include "crowdreg/kernel.hpp"
#include "crowdreg/synth.hpp"

namespace crowdreg {

enum class Algorithm { average, nbi, bi, strong_oracle, weak_oracle };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::average, Algorithm::nbi, Algorithm::bi,
                                               Algorithm::strong_oracle, Algorithm::weak_oracle};

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::average: return "average";
    case Algorithm::nbi: return "nbi";
    case Algorithm::bi: return "bi";
    case Algorithm::strong_oracle: return "strong_oracle";
    case Algorithm::weak_oracle: return "weak_oracle";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  s = csv::trim(s);
  for (Algorithm a : kAllAlgorithms)
    if (s == to_string(a)) return a;
  if (s == "strong") return Algorithm::strong_oracle;
  if (s == "weak") return Algorithm::weak_oracle;
  throw ConfigError("unknown algorithm '" + std::string(s) +
                    "' (expected average, nbi, bi, strong_oracle, weak_oracle)");
}

inline std::vector<Algorithm> parse_algorithm_list(std::string_view s) {
  std::vector<Algorithm> out;
  for (auto item : csv::split(s)) {
    if (csv::trim(item) == "all") {
      out.assign(std::begin(kAllAlgorithms), std::end(kAllAlgorithms));
      continue;
    }
    const Algorithm a = parse_algorithm(item);
    if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  }
  if (out.empty()) throw ConfigError("algorithm list is empty");
  return out;
}

// How a sweep point whose n*ell is not divisible by r is handled.
enum class NRounding { strict, up };

struct ExperimentConfig {
  std::size_t n_tasks = 200;
  std::size_t dim = 2;
  std::vector<std::size_t> ell_values{5};
  std::vector<std::size_t> r_values{5};
  VarianceSupport support = VarianceSupport::small();
  PriorVariance tau2 = PriorVariance::flat();
  double prior_mean = 50.0;
  PositionMode positions = UniformBoxPositions{0.0, 100.0};
  std::size_t trials = 50;
  std::uint64_t seed = 1;
  std::vector<Algorithm> algorithms{std::begin(kAllAlgorithms), std::end(kAllAlgorithms)};
  std::size_t bi_k_max = 100;
  bool bi_k_log_log = false;  // k_max = loglog: use k_max_log_log(n) at each sweep point
  double bi_tolerance = 1e-10;
  std::size_t nbi_k_max = 100;
  double nbi_tolerance = 1e-8;
  double nbi_floor = 1e-9;
  std::uint32_t weak_depth = 3;
  KernelOptions kernel;
  NRounding n_rounding = NRounding::strict;
  std::size_t threads = 1;

  bool runs(Algorithm a) const {
    return std::find(algorithms.begin(), algorithms.end(), a) != algorithms.end();
  }

  // Task count used at (ell, r): n_tasks itself, or under `up` the smallest
  // n >= n_tasks with n*ell divisible by r.
  std::size_t n_for(std::size_t ell, std::size_t r) const {
    if (n_rounding == NRounding::strict || r == 0) return n_tasks;
    const std::size_t step = r / std::gcd(ell, r);
    return (n_tasks + step - 1) / step * step;
  }

  TaskPrior task_prior(std::size_t n) const {
    if (tau2.is_flat()) return TaskPrior::flat(n, dim);
    return TaskPrior::gaussian(std::vector<double>(n * dim, prior_mean), dim, tau2.tau2());
  }

  void validate() const {
    if (n_tasks == 0) throw ConfigError("n_tasks must be >= 1");
    if (dim == 0) throw ConfigError("dim must be >= 1");
    if (ell_values.empty() || r_values.empty()) throw ConfigError("ell and r lists must be non-empty");
    if (trials == 0) throw ConfigError("trials must be >= 1");
    if (algorithms.empty()) throw ConfigError("algorithm list is empty");
    if (bi_k_max == 0 || nbi_k_max == 0) throw ConfigError("k_max must be >= 1");
    if (!(bi_tolerance >= 0.0) || !(nbi_tolerance >= 0.0)) throw ConfigError("tolerances must be >= 0");
    if (!(nbi_floor > 0.0)) throw ConfigError("nbi_floor must be > 0");
    if (weak_depth % 2 == 0) throw ConfigError("weak_depth must be odd");
    if (threads == 0) throw ConfigError("threads must be >= 1");
    if (std::holds_alternative<PriorGaussianPositions>(positions) && tau2.is_flat())
      throw ConfigError("positions = prior needs a finite tau2");
    if (const auto* box = std::get_if<UniformBoxPositions>(&positions); box && !(box->hi > box->lo))
      throw ConfigError("box_lo must be below box_hi");
    for (std::size_t ell : ell_values)
      for (std::size_t r : r_values) {
        if (ell == 0 || r == 0) throw ConfigError("ell and r must be >= 1");
        const std::size_t n = n_for(ell, r);
        if ((n * ell) % r != 0)
          throw ConfigError("n*ell = " + std::to_string(n * ell) + " is not divisible by r = " +
                            std::to_string(r) + " at ell = " + std::to_string(ell) +
                            " (set n_rounding = up to round n)");
      }
  }
};

namespace detail {

inline std::uint64_t config_uint(std::string_view v, const std::string& key) {
  try {
    return csv::parse_uint(v, key);
  } catch (const FormatError&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + std::string(csv::trim(v)) + "'");
  }
}

inline double config_double(std::string_view v, const std::string& key) {
  try {
    return csv::parse_double(v, key);
  } catch (const FormatError&) {
    throw ConfigError(key + ": expected a number, got '" + std::string(csv::trim(v)) + "'");
  }
}

inline std::vector<std::size_t> config_uint_list(std::string_view v, const std::string& key) {
  std::vector<std::size_t> out;
  for (auto item : csv::split(v)) {
    item = csv::trim(item);
    const auto dots = item.find("..");
    if (dots == std::string_view::npos) {
      out.push_back(config_uint(item, key));
      continue;
    }
    const auto lo = config_uint(item.substr(0, dots), key);
    const auto hi = config_uint(item.substr(dots + 2), key);
    if (hi < lo) throw ConfigError(key + ": empty range '" + std::string(item) + "'");
    for (auto x = lo; x <= hi; ++x) out.push_back(x);
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

inline VarianceSupport config_support(std::string_view v) {
  v = csv::trim(v);
  if (v == "small") return VarianceSupport::small();
  if (v == "large") return VarianceSupport::large();
  std::vector<double> values;
  for (auto item : csv::split(v, v.find(';') != std::string_view::npos ? ';' : ','))
    values.push_back(config_double(item, "support"));
  std::sort(values.begin(), values.end());
  return VarianceSupport(std::move(values));
}

}  // namespace detail

// Applies a named preset. fig1a/fig1b sweep r at ell = 5 over S_small/S_large;
// fig1c/fig1d sweep ell at r = 5.
inline void apply_preset(ExperimentConfig& c, std::string_view name) {
  name = csv::trim(name);
  ExperimentConfig base;
  base.n_rounding = NRounding::up;
  base.trials = 50;
  std::vector<std::size_t> sweep;
  for (std::size_t x = 2; x <= 15; ++x) sweep.push_back(x);
  if (name == "fig1a" || name == "fig1b") {
    base.ell_values = {5};
    base.r_values = sweep;
  } else if (name == "fig1c" || name == "fig1d") {
    base.ell_values = sweep;
    base.r_values = {5};
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected fig1a..fig1d)");
  }
  base.support = (name == "fig1a" || name == "fig1c") ? VarianceSupport::small() : VarianceSupport::large();
  base.threads = c.threads;
  c = base;
}

inline void apply_config_value(ExperimentConfig& c, const std::string& key, std::string_view v) {
  using namespace detail;
  v = csv::trim(v);
  if (key == "n_tasks" || key == "n") c.n_tasks = config_uint(v, key);
  else if (key == "dim" || key == "d") c.dim = config_uint(v, key);
  else if (key == "ell") c.ell_values = config_uint_list(v, key);
  else if (key == "r") c.r_values = config_uint_list(v, key);
  else if (key == "support") c.support = config_support(v);
  else if (key == "prior") {
    if (v == "flat") c.tau2 = PriorVariance::flat();
    else if (v == "gaussian") {
      if (c.tau2.is_flat()) c.tau2 = PriorVariance::finite(100.0);
    } else throw ConfigError("prior: expected flat or gaussian, got '" + std::string(v) + "'");
  } else if (key == "tau2") c.tau2 = PriorVariance::finite(config_double(v, key));
  else if (key == "prior_mean") c.prior_mean = config_double(v, key);
  else if (key == "positions") {
    if (v == "prior") c.positions = PriorGaussianPositions{};
    else if (v == "uniform_box") {
      if (!std::holds_alternative<UniformBoxPositions>(c.positions)) c.positions = UniformBoxPositions{};
    } else throw ConfigError("positions: expected prior or uniform_box, got '" + std::string(v) + "'");
  } else if (key == "box_lo" || key == "box_hi") {
    auto box = std::holds_alternative<UniformBoxPositions>(c.positions)
                   ? std::get<UniformBoxPositions>(c.positions) : UniformBoxPositions{};
    (key == "box_lo" ? box.lo : box.hi) = config_double(v, key);
    c.positions = box;
  } else if (key == "trials") c.trials = config_uint(v, key);
  else if (key == "seed") c.seed = config_uint(v, key);
  else if (key == "algorithms" || key == "algo") c.algorithms = parse_algorithm_list(v);
  else if (key == "bi_k_max" || key == "k_max") {
    c.bi_k_log_log = v == "loglog";
    if (!c.bi_k_log_log) c.bi_k_max = config_uint(v, key);
  }
  else if (key == "bi_tolerance") c.bi_tolerance = config_double(v, key);
  else if (key == "nbi_k_max") c.nbi_k_max = config_uint(v, key);
  else if (key == "nbi_tolerance") c.nbi_tolerance = config_double(v, key);
  else if (key == "nbi_floor") c.nbi_floor = config_double(v, key);
  else if (key == "weak_depth") c.weak_depth = static_cast<std::uint32_t>(config_uint(v, key));
  else if (key == "kernel") {
    if (v == "auto") c.kernel.mode = KernelMode::automatic;
    else if (v == "enumerate") c.kernel.mode = KernelMode::enumerate;
    else if (v == "quadrature") c.kernel.mode = KernelMode::quadrature;
    else throw ConfigError("kernel: expected auto, enumerate or quadrature");
  } else if (key == "enumeration_limit") c.kernel.enumeration_limit = config_uint(v, key);
  else if (key == "step_factor") c.kernel.step_factor = config_double(v, key);
  else if (key == "truncation_nats") c.kernel.truncation_nats = config_double(v, key);
  else if (key == "n_rounding") {
    if (v == "strict") c.n_rounding = NRounding::strict;
    else if (v == "up") c.n_rounding = NRounding::up;
    else throw ConfigError("n_rounding: expected strict or up");
  } else if (key == "threads") c.threads = config_uint(v, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& name = "config") {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  std::string preset;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = csv::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(name + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key(csv::trim(body.substr(0, eq)));
    std::string value(csv::trim(body.substr(eq + 1)));
    if (key.empty()) throw ConfigError(name + ":" + std::to_string(line_no) + ": missing key");
    if (key == "preset") preset = value;
    else entries.emplace_back(std::move(key), std::move(value));
  }
  ExperimentConfig c;
  if (!preset.empty()) apply_preset(c, preset);
  for (const auto& [k, v] : entries) apply_config_value(c, k, v);
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

}  // namespace crowdreg
