#pragma once

// JSON and CSV renderings of cross-validation, holdout and saliency results.

#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "nanopk/dataset.hpp"
#include "nanopk/features.hpp"
#include "nanopk/pipeline.hpp"
#include "nanopk/saliency.hpp"

namespace nanopk {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json per_output(const std::array<double, kTargetCount>& v) {
  Json j = Json::object();
  for (std::size_t o = 0; o < kTargetCount; ++o) j[std::string(kTargetNames[o])] = v[o];
  return j;
}

inline Json config_json(const MultiviewConfig& c) {
  Json j = Json::object();
  for (const auto& [k, v] : c.to_kv()) j[k] = v;
  return j;
}

inline Json split_json(const SplitOutcome& s) {
  Json j;
  j["split"] = s.split;
  j["n_train"] = s.n_train;
  j["n_synthetic"] = s.n_synthetic;
  j["n_val"] = s.n_val;
  j["n_test"] = s.n_test;
  j["too_few_rare"] = s.too_few_rare;
  Json members = Json::object();
  for (const auto& [m, v] : s.member_val_rmse) {
    Json mj;
    mj["val_rmse"] = per_output(v);
    auto it = s.chosen.find(m);
    if (it != s.chosen.end()) {
      mj["config"] = config_json(it->second);
      Json trials = Json::array();
      for (const auto& t : s.trials.at(m)) {
        Json tj;
        tj["val_rmse"] = t.val_rmse;
        tj["epochs"] = t.history.epochs_run;
        tj["best_epoch"] = t.history.best_epoch;
        trials.push_back(tj);
      }
      mj["trials"] = trials;
    }
    members[member_name(m)] = mj;
  }
  j["members"] = members;
  Json entries = Json::array();
  for (const auto& e : s.entries) {
    Json ej;
    ej["model"] = e.label;
    ej["members"] = e.members;
    Json test = Json::object();
    for (std::size_t o = 0; o < kTargetCount; ++o)
      test[std::string(kTargetNames[o])] = {{"r2", e.test[o].r2}, {"rmse", e.test[o].rmse}};
    ej["test"] = test;
    ej["val_rmse"] = per_output(e.val_rmse);
    if (e.weights) {
      Json w = Json::object();
      for (std::size_t o = 0; o < kTargetCount; ++o) {
        Json wo = Json::object();
        for (std::size_t k = 0; k < e.members.size(); ++k) wo[e.members[k]] = e.weights->weights[o][k];
        w[std::string(kTargetNames[o])] = wo;
      }
      ej["weights"] = w;
    }
    entries.push_back(ej);
  }
  j["models"] = entries;
  return j;
}

}  // namespace detail

inline Json report_json(const CVReport& r) {
  Json j;
  j["kind"] = "cross_validation";
  j["k"] = r.k;
  j["seed"] = r.seed;
  j["targets"] = std::vector<std::string>(kTargetNames.begin(), kTargetNames.end());
  j["roster"] = r.roster;
  Json cfg = Json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  Json agg = Json::array();
  for (const auto& a : r.aggregates) {
    Json aj;
    aj["model"] = a.label;
    aj["r2_mean"] = detail::per_output(a.r2_mean);
    aj["r2_std"] = detail::per_output(a.r2_std);
    aj["rmse_mean"] = detail::per_output(a.rmse_mean);
    aj["rmse_std"] = detail::per_output(a.rmse_std);
    agg.push_back(aj);
  }
  j["aggregate"] = agg;
  Json sig = Json::array();
  for (const auto& s : r.significance) {
    Json sj;
    sj["target"] = std::string(kTargetNames[s.output]);
    sj["reference"] = s.reference;
    sj["comparator"] = s.comparator;
    sj["p_value"] = s.p_value ? Json(*s.p_value) : Json(nullptr);
    sj["pairs"] = s.pairs;
    sj["exact"] = s.exact;
    if (!s.note.empty()) sj["note"] = s.note;
    sig.push_back(sj);
  }
  j["wilcoxon"] = sig;
  Json folds = Json::array();
  for (const auto& f : r.folds) folds.push_back(detail::split_json(f));
  j["folds"] = folds;
  return j;
}

inline Json holdout_json(const SplitOutcome& s, std::uint64_t seed,
                         const std::vector<std::pair<std::string, std::string>>& config) {
  Json j;
  j["kind"] = "holdout";
  j["seed"] = seed;
  Json cfg = Json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = cfg;
  j["result"] = detail::split_json(s);
  return j;
}

/// One row per (split, model, target).
inline void write_metrics_csv(std::ostream& out, const std::vector<SplitOutcome>& splits) {
  out << "split,model,target,r2,rmse,val_rmse,weights\n";
  for (const auto& s : splits)
    for (const auto& e : s.entries)
      for (std::size_t o = 0; o < kTargetCount; ++o) {
        out << s.split << ",\"" << e.label << "\"," << kTargetNames[o] << ',' << detail::format_number(e.test[o].r2)
            << ',' << detail::format_number(e.test[o].rmse) << ',' << detail::format_number(e.val_rmse[o]) << ',';
        if (e.weights) {
          out << '"';
          for (std::size_t k = 0; k < e.members.size(); ++k)
            out << (k ? ";" : "") << e.members[k] << '=' << detail::format_number(e.weights->weights[o][k]);
          out << '"';
        }
        out << '\n';
      }
}

inline void write_aggregate_csv(std::ostream& out, const std::vector<Aggregate>& aggs) {
  out << "model,target,r2_mean,r2_std,rmse_mean,rmse_std\n";
  for (const auto& a : aggs)
    for (std::size_t o = 0; o < kTargetCount; ++o)
      out << '"' << a.label << "\"," << kTargetNames[o] << ',' << detail::format_number(a.r2_mean[o]) << ','
          << detail::format_number(a.r2_std[o]) << ',' << detail::format_number(a.rmse_mean[o]) << ','
          << detail::format_number(a.rmse_std[o]) << '\n';
}

/// Long format: target, feature, score; `channel` names the input view.
inline void write_saliency_csv(std::ostream& out, const Matrix& scores, const std::vector<std::string>& names) {
  out << "target,feature,saliency\n";
  for (std::size_t o = 0; o < scores.rows(); ++o)
    for (std::size_t j = 0; j < scores.cols(); ++j)
      out << kTargetNames[o] << ",\"" << names.at(j) << "\"," << detail::format_number(scores(o, j)) << '\n';
}

inline void write_secondary_csv(std::ostream& out, std::span<const SampleRecord> records,
                                const OrganCriteria& criteria) {
  const auto& names = SecondaryFeatures::column_names();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << '\n';
  for (const auto& r : records) {
    const auto f = extract_secondary(r, criteria);
    for (std::size_t i = 0; i < f.xt.size(); ++i) out << (i ? "," : "") << detail::format_number(f.xt[i]);
    out << '\n';
  }
}

}  // namespace nanopk
