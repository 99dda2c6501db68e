#pragma once

#include "coosci/coo/bfgs.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace coosci {

struct Phase0Config {
  std::size_t num_runs = 64;
  std::size_t cycles = 10;
  std::size_t max_final_dets = 100;
  std::size_t initial_hf = 1;
  std::size_t initial_random = 10000;
  std::size_t first_cycle_keep_size = 10;
  double threshold = 1e-2;
  double pool_core_ratio = 40;
  std::pair<double, double> core_set_ratio{1.0, 1.1};
  std::size_t num_groups = 20;
  double local_trim_keep_ratio = 4;
  std::size_t max_rounds = 4;
  bool orbital_optimization = true;
  bool tracking_dets = false;
  double loaded_dets_randomness = 0.0;
  std::string basin;  // keep only runs whose spin pattern matches, when set
  double davidson_tol = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_runs == 0) throw std::invalid_argument("num_runs must be positive");
    if (max_final_dets == 0) throw std::invalid_argument("max_final_dets must be positive");
    if (initial_hf + initial_random == 0) throw std::invalid_argument("no initial determinants requested");
    if (first_cycle_keep_size == 0) throw std::invalid_argument("first_cycle_keep_size must be positive");
    if (!(threshold > 0.0)) throw std::invalid_argument("threshold must be positive");
    if (!(pool_core_ratio > 0.0)) throw std::invalid_argument("pool_core_ratio must be positive");
    if (!(core_set_ratio.first >= 1.0 && core_set_ratio.second >= core_set_ratio.first))
      throw std::invalid_argument("core_set_ratio must satisfy 1 <= lo <= hi");
    if (num_groups == 0) throw std::invalid_argument("num_groups must be positive");
    if (!(local_trim_keep_ratio > 0.0)) throw std::invalid_argument("local_trim_keep_ratio must be positive");
    if (max_rounds == 0) throw std::invalid_argument("max_rounds must be positive");
    if (!(loaded_dets_randomness >= 0.0 && loaded_dets_randomness <= 1.0))
      throw std::invalid_argument("loaded_dets_randomness must lie in [0, 1]");
  }
};

struct PhaseGrowthConfig {
  std::size_t max_n_dets = 1'000'000;
  double growth_factor = 1.1;
  bool orbital_optimization = true;
  std::size_t orbital_opt_max_iter = 50;
  bool use_connection_cache = true;
  double energy_tol = 1e-4;
  bool pt2_correction = false;
  double pt2_eps_hc = 1e-6;
  double oversample = 2.0;
  double threshold = 1e-2;
  std::size_t max_rounds = 200;

  void validate() const {
    if (max_n_dets == 0) throw std::invalid_argument("max_n_dets must be positive");
    if (!(growth_factor >= 1.0)) throw std::invalid_argument("growth_factor must be at least 1");
    if (!(energy_tol > 0.0)) throw std::invalid_argument("energy_tol must be positive");
    if (!(oversample >= 1.0)) throw std::invalid_argument("oversample must be at least 1");
  }
};

inline PhaseGrowthConfig phase1_defaults() { return {}; }

inline PhaseGrowthConfig phase2_defaults() {
  PhaseGrowthConfig c;
  c.max_n_dets = 100'000'000;
  c.growth_factor = 2.0;
  c.orbital_optimization = false;
  c.use_connection_cache = false;
  c.energy_tol = 1e-5;
  c.pt2_correction = true;
  return c;
}

// Flat "key = value" file; '#' starts a comment.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      const auto eq = line.find('=');
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) continue;
      if (eq == std::string::npos) throw std::runtime_error("line " + std::to_string(lineno) + ": expected key = value");
      c.values_[key] = trim(line.substr(eq + 1));
    }
    return c;
  }
  static KeyValueConfig parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config " + path);
    return parse(f);
  }

  bool has(const std::string& k) const { return values_.count(k) != 0; }
  void set(const std::string& k, const std::string& v) { values_[k] = v; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& k, const std::string& def) const {
    used_.insert({k, 0});
    auto it = values_.find(k);
    return it == values_.end() ? def : it->second;
  }
  double get(const std::string& k, double def) const {
    const auto s = get(k, std::string{});
    return s.empty() ? def : parse_double(k, s);
  }
  std::size_t get(const std::string& k, std::size_t def) const {
    const auto s = get(k, std::string{});
    if (s.empty()) return def;
    const double v = parse_double(k, s);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw std::invalid_argument(k + ": expected a non-negative integer");
    return static_cast<std::size_t>(v);
  }
  bool get(const std::string& k, bool def) const {
    auto s = get(k, std::string{});
    if (s.empty()) return def;
    for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument(k + ": expected a boolean");
  }
  std::vector<double> get_list(const std::string& k) const {
    std::string s = get(k, std::string{});
    for (char& ch : s)
      if (ch == ',' || ch == '[' || ch == ']') ch = ' ';
    std::vector<double> out;
    std::istringstream ss(s);
    for (std::string tok; ss >> tok;) out.push_back(parse_double(k, tok));
    return out;
  }

  // Keys present in the file that no reader asked for.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) out.push_back(k);
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
  }
  static double parse_double(const std::string& k, const std::string& s) {
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != s.size()) throw std::invalid_argument(k + ": cannot parse '" + s + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
  mutable std::map<std::string, int> used_;
};

inline Phase0Config phase0_from(const KeyValueConfig& kv, Phase0Config c = {}) {
  c.num_runs = kv.get("num_runs", c.num_runs);
  c.cycles = kv.get("cycles", c.cycles);
  c.max_final_dets = kv.get("max_final_dets", c.max_final_dets);
  if (kv.has("initial_dets_dict")) {
    // HF=1, rand=[1,10000]: the last number of each entry is the count.
    std::string s = kv.get("initial_dets_dict", std::string{});
    std::vector<std::string> entries(1);
    int depth = 0;
    for (char ch : s) {
      if (ch == '[') ++depth;
      if (ch == ']') --depth;
      if ((ch == ',' || ch == ';') && depth == 0) entries.emplace_back();
      else entries.back().push_back(ch);
    }
    for (const std::string& entry : entries) {
      const auto eq = entry.find('=');
      if (eq == std::string::npos) continue;
      std::string key = entry.substr(0, eq);
      key.erase(0, key.find_first_not_of(" \t"));
      key.erase(key.find_last_not_of(" \t") + 1);
      std::string val = entry.substr(eq + 1);
      for (char& ch : val)
        if (ch == ',' || ch == '[' || ch == ']') ch = ' ';
      std::istringstream vs(val);
      double last = 0;
      for (double x; vs >> x;) last = x;
      if (key == "HF") c.initial_hf = static_cast<std::size_t>(last);
      else if (key == "rand") c.initial_random = static_cast<std::size_t>(last);
      else throw std::invalid_argument("initial_dets_dict: unknown entry " + key);
    }
  }
  c.initial_hf = kv.get("initial_dets_hf", c.initial_hf);
  c.initial_random = kv.get("initial_dets_rand", c.initial_random);
  c.first_cycle_keep_size = kv.get("first_cycle_keep_size", c.first_cycle_keep_size);
  c.threshold = kv.get("threshold", c.threshold);
  c.pool_core_ratio = kv.get("pool_core_ratio", c.pool_core_ratio);
  if (kv.has("core_set_ratio")) {
    const auto r = kv.get_list("core_set_ratio");
    if (r.size() == 1) c.core_set_ratio = {r[0], r[0]};
    else if (r.size() == 2) c.core_set_ratio = {r[0], r[1]};
    else throw std::invalid_argument("core_set_ratio: expected one or two numbers");
  }
  c.num_groups = kv.get("num_groups", c.num_groups);
  c.local_trim_keep_ratio = kv.get("local_trim_keep_ratio", c.local_trim_keep_ratio);
  c.max_rounds = kv.get("max_rounds", c.max_rounds);
  if (kv.has("pool_build_strategy") && kv.get("pool_build_strategy", std::string{}) != "heat_bath")
    throw std::invalid_argument("pool_build_strategy: only heat_bath is available");
  c.orbital_optimization = kv.get("phase0.orbital_optimization", c.orbital_optimization);
  c.tracking_dets = kv.get("tracking_dets", c.tracking_dets);
  c.loaded_dets_randomness = kv.get("loaded_dets_randomness", c.loaded_dets_randomness);
  c.basin = kv.get("basin", c.basin);
  c.davidson_tol = kv.get("phase0.davidson_tol", c.davidson_tol);
  c.seed = kv.get("seed", static_cast<std::size_t>(c.seed));
  c.validate();
  return c;
}

inline BfgsConfig bfgs_from(const KeyValueConfig& kv, BfgsConfig c = {}) {
  c.max_iter = kv.get("maxiter", c.max_iter);
  c.ftol = kv.get("ftol", c.ftol);
  c.davidson_tol = kv.get("davidson_tol", c.davidson_tol);
  c.delta_tol = kv.get("delta_tol", c.delta_tol);
  if (kv.has("optimizer") && kv.get("optimizer", std::string{}) != "bfgs")
    throw std::invalid_argument("optimizer: only bfgs is available");
  return c;
}

// Growth keys may carry a phase prefix ("phase1." / "phase2.") so one file
// can configure both expansion phases.
inline PhaseGrowthConfig growth_from(const KeyValueConfig& kv, const std::string& prefix, PhaseGrowthConfig c) {
  auto key = [&](const char* k) {
    const std::string p = prefix + k;
    return kv.has(p) ? p : std::string(k);
  };
  c.max_n_dets = kv.get(key("max_n_dets"), c.max_n_dets);
  c.growth_factor = kv.get(key("growth_factor"), c.growth_factor);
  c.orbital_optimization = kv.get(key("orbital_optimization"), c.orbital_optimization);
  c.orbital_opt_max_iter = kv.get(key("orbital_opt_max_iter"), c.orbital_opt_max_iter);
  c.use_connection_cache = kv.get(key("use_connection_cache"), c.use_connection_cache);
  c.energy_tol = kv.get(key("davidson.energy_tol"), c.energy_tol);
  c.pt2_correction = kv.get(key("pt2_correction"), c.pt2_correction);
  c.pt2_eps_hc = kv.get(key("eps_hc"), c.pt2_eps_hc);
  c.max_rounds = kv.get(key("max_expand_rounds"), c.max_rounds);
  c.validate();
  return c;
}

}  // namespace coosci
