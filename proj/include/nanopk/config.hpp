#pragma once

// Flat "key = value" run configuration. Lines starting with '#' are
// comments; later assignments win, and command-line overrides are applied
// after the file.

#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nanopk/dataset.hpp"
#include "nanopk/error.hpp"
#include "nanopk/pipeline.hpp"
#include "nanopk/synth.hpp"

namespace nanopk {

struct RunConfig {
  std::string data;
  std::string out = "out";
  std::string checkpoint;
  PipelineOptions pipeline;
  SynthConfig synth;

  void set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> echo() const;
};

namespace detail {

inline double config_number(const std::string& key, const std::string& value) {
  auto v = parse_number(value);
  if (!v) throw Error(Errc::BadConfig, key + ": not a number '" + value + "'");
  return *v;
}

inline long long config_integer(const std::string& key, const std::string& value, long long lo = 0) {
  const double v = config_number(key, value);
  if (v != std::floor(v) || v < static_cast<double>(lo) || v > 9.0e15)
    throw Error(Errc::BadConfig, key + ": expected an integer >= " + std::to_string(lo));
  return static_cast<long long>(v);
}

inline bool config_bool(const std::string& key, const std::string& value) {
  const auto t = normalize_token(value);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw Error(Errc::BadConfig, key + ": expected true or false");
}

inline std::vector<std::string> config_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.emplace_back(trim(item));
  return out;
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  auto& p = pipeline;
  if (key == "data") data = value;
  else if (key == "out") out = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "seed") {
    p.seed = static_cast<std::uint64_t>(config_integer(key, value));
    synth.seed = p.seed;
  } else if (key == "folds") p.folds = static_cast<std::size_t>(config_integer(key, value, 2));
  else if (key == "inner_val_fraction") {
    p.inner_val_fraction = config_number(key, value);
    if (!(p.inner_val_fraction > 0.0 && p.inner_val_fraction < 1.0))
      throw Error(Errc::BadConfig, "inner_val_fraction must lie in (0,1)");
  } else if (key == "split.train") p.split_ratios[0] = config_number(key, value);
  else if (key == "split.val") p.split_ratios[1] = config_number(key, value);
  else if (key == "split.test") p.split_ratios[2] = config_number(key, value);
  else if (key == "budget") p.budget = static_cast<int>(config_integer(key, value, 1));
  else if (key == "roster") p.roster = parse_roster(value);
  else if (key == "threads") p.threads = static_cast<unsigned>(config_integer(key, value, 1));
  else if (key == "augment.rare_quantile") p.augment.rare_quantile = config_number(key, value);
  else if (key == "augment.k_neighbors") p.augment.k_neighbors = static_cast<int>(config_integer(key, value, 1));
  else if (key == "augment.oversample_factor") p.augment.oversample_factor = config_number(key, value);
  else if (key == "augment.seed") p.augment.seed = static_cast<std::uint64_t>(config_integer(key, value));
  else if (key == "augment.enabled") p.augment.enabled = config_bool(key, value);
  else if (set_criterion(p.criteria, key, value)) {
  } else if (key.rfind("dnn.", 0) == 0) {
    const std::string sub = key.substr(4);
    if (sub == "arch" || sub == "views" || sub == "seed")
      throw Error(Errc::BadConfig, key + " is chosen by the roster and run seed");
    if (!p.dnn.set(sub, value)) throw Error(Errc::BadConfig, "unknown key " + key);
    p.dnn.validate();
  } else if (key == "search.hidden_min") p.space.hidden_min = static_cast<int>(config_integer(key, value, 1));
  else if (key == "search.hidden_max") p.space.hidden_max = static_cast<int>(config_integer(key, value, 1));
  else if (key == "search.aux_min") p.space.aux_min = static_cast<int>(config_integer(key, value, 1));
  else if (key == "search.aux_max") p.space.aux_max = static_cast<int>(config_integer(key, value, 1));
  else if (key == "search.learning_rates") {
    p.space.learning_rates.clear();
    for (const auto& s : config_list(value)) p.space.learning_rates.push_back(config_number(key, s));
    if (p.space.learning_rates.empty()) throw Error(Errc::BadConfig, key + " is empty");
  } else if (key == "search.optimizers") {
    p.space.optimizers.clear();
    for (const auto& s : config_list(value)) {
      const auto t = normalize_token(s);
      if (t == "adam") p.space.optimizers.push_back(ad::OptimizerKind::Adam);
      else if (t == "sgd") p.space.optimizers.push_back(ad::OptimizerKind::Sgd);
      else throw Error(Errc::BadConfig, key + ": unknown optimizer '" + s + "'");
    }
    if (p.space.optimizers.empty()) throw Error(Errc::BadConfig, key + " is empty");
  } else if (key == "forest.n_trees") p.forest.n_trees = static_cast<int>(config_integer(key, value, 1));
  else if (key == "forest.max_depth") p.forest.max_depth = static_cast<int>(config_integer(key, value));
  else if (key == "forest.min_leaf") p.forest.min_leaf = static_cast<std::size_t>(config_integer(key, value, 1));
  else if (key == "forest.features_per_split")
    p.forest.features_per_split = static_cast<std::size_t>(config_integer(key, value));
  else if (key == "forest.bootstrap") p.forest.bootstrap = config_bool(key, value);
  else if (key == "forest.seed") p.forest.seed = static_cast<std::uint64_t>(config_integer(key, value));
  else if (key == "gbt.n_rounds") p.gbt.n_rounds = static_cast<int>(config_integer(key, value, 1));
  else if (key == "gbt.learning_rate") {
    p.gbt.learning_rate = config_number(key, value);
    if (!(p.gbt.learning_rate > 0.0 && p.gbt.learning_rate <= 1.0))
      throw Error(Errc::BadConfig, "gbt.learning_rate must lie in (0,1]");
  } else if (key == "gbt.max_depth") p.gbt.max_depth = static_cast<int>(config_integer(key, value));
  else if (key == "gbt.leaf_l2") p.gbt.leaf_l2 = config_number(key, value);
  else if (key == "gbt.min_leaf") p.gbt.min_leaf = static_cast<std::size_t>(config_integer(key, value, 1));
  else if (key == "gbt.seed") p.gbt.seed = static_cast<std::uint64_t>(config_integer(key, value));
  else if (key == "ensemble.grid_step") p.grid_step = config_number(key, value);
  else if (key == "synth.n") synth.n = static_cast<std::size_t>(config_integer(key, value, 1));
  else if (key == "synth.noise") synth.noise_ratio = config_number(key, value);
  else if (key == "synth.missing_rate") synth.missing_rate = config_number(key, value);
  else throw Error(Errc::BadConfig, "unknown key '" + key + "'");
  p.augment.validate();
}

inline std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  using detail::format_number;
  const auto& p = pipeline;
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("seed", std::to_string(p.seed));
  kv.emplace_back("folds", std::to_string(p.folds));
  kv.emplace_back("inner_val_fraction", format_number(p.inner_val_fraction));
  kv.emplace_back("split.train", format_number(p.split_ratios[0]));
  kv.emplace_back("split.val", format_number(p.split_ratios[1]));
  kv.emplace_back("split.test", format_number(p.split_ratios[2]));
  kv.emplace_back("budget", std::to_string(p.budget));
  std::string roster;
  for (const auto& e : p.roster) roster += (roster.empty() ? "" : ",") + e.label;
  kv.emplace_back("roster", roster);
  kv.emplace_back("augment.rare_quantile", format_number(p.augment.rare_quantile));
  kv.emplace_back("augment.k_neighbors", std::to_string(p.augment.k_neighbors));
  kv.emplace_back("augment.oversample_factor", format_number(p.augment.oversample_factor));
  kv.emplace_back("augment.seed", std::to_string(p.augment.seed));
  kv.emplace_back("augment.enabled", p.augment.enabled ? "true" : "false");
  for (const auto& e : criteria_to_kv(p.criteria)) kv.push_back(e);
  for (const auto& [k, v] : p.dnn.to_kv())
    if (k != "arch" && k != "views" && k != "seed") kv.emplace_back("dnn." + k, v);
  kv.emplace_back("search.hidden_min", std::to_string(p.space.hidden_min));
  kv.emplace_back("search.hidden_max", std::to_string(p.space.hidden_max));
  kv.emplace_back("search.aux_min", std::to_string(p.space.aux_min));
  kv.emplace_back("search.aux_max", std::to_string(p.space.aux_max));
  std::string lrs, opts;
  for (double lr : p.space.learning_rates) lrs += (lrs.empty() ? "" : ",") + format_number(lr);
  for (auto o : p.space.optimizers) opts += (opts.empty() ? "" : ",") + std::string(to_string(o));
  kv.emplace_back("search.learning_rates", lrs);
  kv.emplace_back("search.optimizers", opts);
  kv.emplace_back("forest.n_trees", std::to_string(p.forest.n_trees));
  kv.emplace_back("forest.max_depth", std::to_string(p.forest.max_depth));
  kv.emplace_back("forest.min_leaf", std::to_string(p.forest.min_leaf));
  kv.emplace_back("forest.features_per_split", std::to_string(p.forest.features_per_split));
  kv.emplace_back("forest.bootstrap", p.forest.bootstrap ? "true" : "false");
  kv.emplace_back("forest.seed", std::to_string(p.forest.seed));
  kv.emplace_back("gbt.n_rounds", std::to_string(p.gbt.n_rounds));
  kv.emplace_back("gbt.learning_rate", format_number(p.gbt.learning_rate));
  kv.emplace_back("gbt.max_depth", std::to_string(p.gbt.max_depth));
  kv.emplace_back("gbt.leaf_l2", format_number(p.gbt.leaf_l2));
  kv.emplace_back("gbt.min_leaf", std::to_string(p.gbt.min_leaf));
  kv.emplace_back("gbt.seed", std::to_string(p.gbt.seed));
  kv.emplace_back("ensemble.grid_step", format_number(p.grid_step));
  return kv;
}

/// Applies every assignment in `in` to `cfg`. Errors name the line.
inline void parse_config(std::istream& in, RunConfig& cfg, const std::string& origin = "config") {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::BadConfig, origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key(detail::trim(t.substr(0, eq)));
    const std::string value(detail::trim(t.substr(eq + 1)));
    try {
      cfg.set(key, value);
    } catch (const Error& e) {
      throw Error(e.code(), origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

inline void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::BadConfig, "cannot open config " + path);
  parse_config(in, cfg, path);
}

}  // namespace nanopk
