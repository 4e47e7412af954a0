#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "penace/csv.hpp"
#include "penace/dgp.hpp"
#include "penace/simulation.hpp"

namespace penace {

/// Flat sectioned key-value scenario file:
///
///   [example]            # or [population] csv = <path>
///   id = 1
///   p = 50
///   seed = 1
///   [run]
///   n_A = 80
///   replications = 1000
///   methods = unadjust,OLS,Lasso,EN,naiveEN,Ada,Ridge
///   base_seed = 42
///   [cv]
///   folds = 10
///
/// '#' starts a comment; keys are `section.key` internally.
struct ConfigFile {
  std::map<std::string, std::string> entries;

  bool has(const std::string& key) const { return entries.count(key) > 0; }
  const std::string& get(const std::string& key) const {
    const auto it = entries.find(key);
    if (it == entries.end()) throw std::invalid_argument("config: missing key '" + key + "'");
    return it->second;
  }
  std::string get_or(const std::string& key, const std::string& fallback) const {
    const auto it = entries.find(key);
    return it == entries.end() ? fallback : it->second;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.erase(s.begin());
  while (!s.empty() && is_space(s.back())) s.pop_back();
  return s;
}

}  // namespace detail

inline ConfigFile parse_config(std::istream& is, const std::string& name = "<config>") {
  ConfigFile cfg;
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument(name + ":" + std::to_string(line_no) +
                                    ": unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(name + ":" + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument(name + ":" + std::to_string(line_no) + ": empty key");
    cfg.entries[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

inline ConfigFile parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file: " + path);
  return parse_config(is, path);
}

/// Canonical digest: entries sorted by key, joined as `key=value` lines,
/// FNV-1a hashed. Key order in the file does not matter.
inline std::string config_digest(const ConfigFile& cfg) {
  std::string canon;
  for (const auto& [key, value] : cfg.entries) {  // std::map iterates sorted
    canon += key;
    canon += '=';
    canon += value;
    canon += '\n';
  }
  return hex64(fnv1a64(canon));
}

/// Population source plus scenario settings extracted from a config file.
struct Scenario {
  std::optional<ExampleSpec> example;
  std::optional<std::string> population_csv;
  ScenarioConfig run;
};

inline std::vector<Method> parse_method_list(const std::string& csv_list) {
  std::vector<Method> methods;
  for (const auto& tok : split(csv_list)) {
    const std::string t = detail::trim(std::string(tok));
    if (!t.empty()) methods.push_back(method_from_string(t));
  }
  return methods;
}

inline std::vector<double> parse_double_list(const std::string& csv_list) {
  std::vector<double> values;
  for (const auto& tok : split(csv_list)) {
    const std::string t = detail::trim(std::string(tok));
    if (!t.empty()) values.push_back(parse_double(t));
  }
  return values;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config: cannot parse boolean from '" + s + "'");
}

inline Scenario scenario_from_config(const ConfigFile& cfg) {
  Scenario sc;
  if (cfg.has("population.csv")) {
    sc.population_csv = cfg.get("population.csv");
  } else {
    ExampleSpec spec = ExampleSpec::defaults(
        static_cast<int>(parse_int(cfg.get("example.id"), "example.id")));
    if (cfg.has("example.p")) spec.p = static_cast<int>(parse_int(cfg.get("example.p")));
    if (cfg.has("example.n")) spec.n = static_cast<int>(parse_int(cfg.get("example.n")));
    if (cfg.has("example.s")) spec.s = static_cast<int>(parse_int(cfg.get("example.s")));
    if (cfg.has("example.sigma_noise"))
      spec.sigma_noise = parse_double(cfg.get("example.sigma_noise"));
    if (cfg.has("example.seed"))
      spec.seed = static_cast<std::uint64_t>(parse_int(cfg.get("example.seed")));
    spec.validate();
    sc.example = spec;
  }

  ScenarioConfig& run = sc.run;
  run.n_A = static_cast<int>(parse_int(cfg.get("run.n_A"), "run.n_A"));
  run.methods = parse_method_list(
      cfg.get_or("run.methods", "unadjust,OLS,Lasso,EN,naiveEN,Ada,Ridge"));
  run.replications = static_cast<int>(parse_int(cfg.get_or("run.replications", "1000")));
  run.base_seed = static_cast<std::uint64_t>(parse_int(cfg.get_or("run.base_seed", "0")));
  run.ci_level = parse_double(cfg.get_or("run.ci_level", "0.95"));
  run.standardize = parse_bool(cfg.get_or("solver.standardize", "false"));

  CvConfig& cv = run.cv;
  cv.folds = static_cast<int>(parse_int(cfg.get_or("cv.folds", "10")));
  cv.n_lambda1 = static_cast<int>(parse_int(cfg.get_or("cv.n_lambda1", "100")));
  cv.lambda1_min_ratio = parse_double(cfg.get_or("cv.lambda1_min_ratio", "0.001"));
  if (cfg.has("cv.lambda2_grid")) cv.lambda2_grid = parse_double_list(cfg.get("cv.lambda2_grid"));
  cv.seed = static_cast<std::uint64_t>(parse_int(cfg.get_or("cv.seed", "0")));
  cv.validate();
  return sc;
}

}  // namespace penace
