#pragma once

// Leakage-free evaluation: per split, augment and fit every statistic on the
// training rows only, pick DNN configurations and ensemble weights on the
// validation rows, and score on the held-out rows. Every fitting step records
// which source rows it read so an audit can prove the held-out rows were
// never touched.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nanopk/augment.hpp"
#include "nanopk/checkpoint.hpp"
#include "nanopk/dataset.hpp"
#include "nanopk/ensemble.hpp"
#include "nanopk/features.hpp"
#include "nanopk/metrics.hpp"
#include "nanopk/multiview.hpp"
#include "nanopk/priors.hpp"
#include "nanopk/random.hpp"
#include "nanopk/trees.hpp"

namespace nanopk {

// ---------------------------------------------------------------------------
// Provenance
// ---------------------------------------------------------------------------

/// Source rows (clean-dataset indices) a prepared row was built from.
/// Synthetic rows carry their SMOTE seed and neighbour.
struct RowTag {
  std::size_t source = 0;
  std::size_t partner = 0;
  bool synthetic = false;
};

struct AuditEntry {
  std::size_t split = 0;
  std::string purpose;
  std::vector<std::size_t> rows;  // sorted, unique
};

/// Thread-safe record of which rows each fitting step read.
class AuditLog {
 public:
  void register_split(std::size_t split, std::vector<std::size_t> train, std::vector<std::size_t> val,
                      std::vector<std::size_t> test) {
    std::lock_guard lock(mu_);
    roles_[split] = {std::move(train), std::move(val), std::move(test)};
  }

  void record(std::size_t split, std::string purpose, std::span<const RowTag> tags) {
    std::set<std::size_t> rows;
    for (const auto& t : tags) {
      rows.insert(t.source);
      rows.insert(t.partner);
    }
    std::lock_guard lock(mu_);
    entries_.push_back({split, std::move(purpose), std::vector<std::size_t>(rows.begin(), rows.end())});
  }

  std::vector<AuditEntry> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  /// Purposes that may read validation rows; everything else is fitting on
  /// training rows only.
  static bool validation_purpose(const std::string& p) {
    return p == "early_stopping" || p == "model_selection" || p == "ensemble_weights";
  }

  /// Human-readable descriptions of every held-out read (and every fitting
  /// read of a validation row). Empty means the audit passed.
  std::vector<std::string> violations() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& e : entries_) {
      auto it = roles_.find(e.split);
      if (it == roles_.end()) {
        out.push_back("split " + std::to_string(e.split) + " was never registered");
        continue;
      }
      const auto& [train, val, test] = it->second;
      for (std::size_t r : e.rows) {
        if (std::binary_search(test.begin(), test.end(), r))
          out.push_back(e.purpose + " in split " + std::to_string(e.split) + " read held-out row " + std::to_string(r));
        else if (!validation_purpose(e.purpose) && std::binary_search(val.begin(), val.end(), r))
          out.push_back(e.purpose + " in split " + std::to_string(e.split) + " read validation row " +
                        std::to_string(r));
        else if (!std::binary_search(train.begin(), train.end(), r) &&
                 !std::binary_search(val.begin(), val.end(), r))
          out.push_back(e.purpose + " in split " + std::to_string(e.split) + " read unassigned row " +
                        std::to_string(r));
      }
    }
    return out;
  }

  std::set<std::string> purposes() const {
    std::lock_guard lock(mu_);
    std::set<std::string> p;
    for (const auto& e : entries_) p.insert(e.purpose);
    return p;
  }

 private:
  struct Roles {
    std::vector<std::size_t> train, val, test;
  };
  mutable std::mutex mu_;
  std::vector<AuditEntry> entries_;
  std::map<std::size_t, Roles> roles_;
};

// ---------------------------------------------------------------------------
// Feature preparation
// ---------------------------------------------------------------------------

/// Encoder for x plus standardizer for x~, both fitted on training rows.
struct Preprocessor {
  Encoder encoder;
  OrganCriteria criteria = OrganCriteria::defaults();
  Standardizer secondary;

  static Preprocessor fit(std::span<const SampleRecord> stats_rows, const OrganCriteria& criteria) {
    Preprocessor p;
    p.criteria = criteria;
    std::vector<std::size_t> all(stats_rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    p.encoder = Encoder::fit(stats_rows, all);
    p.secondary = Standardizer::fit(extract_secondary(stats_rows, criteria));
    return p;
  }

  Matrix primary(std::span<const SampleRecord> recs) const { return encoder.transform(recs); }
  Matrix secondary_view(std::span<const SampleRecord> recs) const {
    return secondary.apply(extract_secondary(recs, criteria));
  }

  ViewData prepare(std::span<const SampleRecord> recs) const {
    ViewData v{primary(recs), secondary_view(recs), Matrix(recs.size(), kTargetCount)};
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto y = target_vector(recs[i]);
      std::copy(y.begin(), y.end(), v.y.row(i).begin());
    }
    return v;
  }

  void to_checkpoint(Checkpoint& ck) const {
    const auto& em = encoder.means();
    const auto& es = encoder.stddevs();
    ck.add("prep.encoder_mean", 1, kNumericCount, std::vector<double>(em.begin(), em.end()));
    ck.add("prep.encoder_stddev", 1, kNumericCount, std::vector<double>(es.begin(), es.end()));
    ck.add("prep.secondary_mean", 1, secondary.width(), secondary.means());
    ck.add("prep.secondary_stddev", 1, secondary.width(), secondary.stddevs());
    for (const auto& [k, v] : criteria_to_kv(criteria)) ck.set_meta(k, v);
  }

  static Preprocessor from_checkpoint(const Checkpoint& ck) {
    Preprocessor p;
    auto arr = [&](const std::string& name, std::size_t n) {
      const auto& t = ck.tensor(name);
      if (t.values.size() != n) throw Error(Errc::BadCheckpoint, "size of " + name);
      return t.values;
    };
    const auto em = arr("prep.encoder_mean", kNumericCount), es = arr("prep.encoder_stddev", kNumericCount);
    std::array<double, kNumericCount> m{}, s{};
    std::copy(em.begin(), em.end(), m.begin());
    std::copy(es.begin(), es.end(), s.begin());
    p.encoder = Encoder(m, s);
    p.secondary = Standardizer(arr("prep.secondary_mean", kSecondaryWidth), arr("prep.secondary_stddev", kSecondaryWidth));
    for (const auto& [k, v] : ck.meta)
      if (k.rfind("priors.", 0) == 0) {
        try {
          set_criterion(p.criteria, k, v);
        } catch (const Error& e) {
          throw Error(Errc::BadCheckpoint, e.what());
        }
      }
    return p;
  }
};

// ---------------------------------------------------------------------------
// Rosters
// ---------------------------------------------------------------------------

enum class Member { Dnn, DnnPrimary, DnnSecondary, Mlp, Xgb, Rf };

inline const char* member_name(Member m) {
  switch (m) {
    case Member::Dnn: return "DNN";
    case Member::DnnPrimary: return "DNN Primary";
    case Member::DnnSecondary: return "DNN Secondary";
    case Member::Mlp: return "MLP";
    case Member::Xgb: return "XGB";
    case Member::Rf: return "RF";
  }
  return "?";
}

inline bool is_network(Member m) { return m != Member::Xgb && m != Member::Rf; }

struct RosterEntry {
  std::string label;
  std::vector<Member> members;  // more than one: validation-weighted ensemble
};

inline const std::vector<RosterEntry>& known_entries() {
  static const std::vector<RosterEntry> all = {
      {"DNN Primary", {Member::DnnPrimary}},
      {"DNN Secondary", {Member::DnnSecondary}},
      {"DNN", {Member::Dnn}},
      {"DNN+XGB", {Member::Dnn, Member::Xgb}},
      {"DNN+RF", {Member::Dnn, Member::Rf}},
      {"DNN+XGB+RF", {Member::Dnn, Member::Xgb, Member::Rf}},
      {"RF", {Member::Rf}},
      {"XGB", {Member::Xgb}},
      {"MLP", {Member::Mlp}},
  };
  return all;
}

namespace detail {

inline std::string roster_key(std::string_view s) {
  std::string k;
  for (char c : trim(s)) {
    if (c == '-' || c == '_' || c == ' ') {
      if (!k.empty() && k.back() != ' ') k += ' ';
    } else {
      k += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
  }
  while (!k.empty() && k.back() == ' ') k.pop_back();
  return k;
}

}  // namespace detail

/// Accepts a preset (ensemble, ablation, benchmark, full) or a comma list of
/// entry labels; '-' and '_' may stand in for spaces.
inline std::vector<RosterEntry> parse_roster(const std::string& text) {
  const std::string key = detail::roster_key(text);
  auto pick = [](std::initializer_list<const char*> labels) {
    std::vector<RosterEntry> out;
    for (const char* l : labels)
      for (const auto& e : known_entries())
        if (e.label == l) out.push_back(e);
    return out;
  };
  if (key == "ENSEMBLE") return pick({"DNN+XGB+RF"});
  if (key == "ABLATION") return pick({"DNN Primary", "DNN Secondary", "DNN", "DNN+XGB", "DNN+RF", "DNN+XGB+RF"});
  if (key == "BENCHMARK") return pick({"RF", "XGB", "MLP", "DNN+XGB+RF"});
  if (key == "FULL")
    return pick({"RF", "XGB", "MLP", "DNN Primary", "DNN Secondary", "DNN", "DNN+XGB", "DNN+RF", "DNN+XGB+RF"});

  std::vector<RosterEntry> out;
  std::string item;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ',') {
      const std::string k = detail::roster_key(item);
      item.clear();
      if (k.empty()) continue;
      bool found = false;
      for (const auto& e : known_entries())
        if (detail::roster_key(e.label) == k) {
          for (const auto& seen : out)
            if (seen.label == e.label) throw Error(Errc::BadConfig, "roster lists " + e.label + " twice");
          out.push_back(e);
          found = true;
        }
      if (!found) throw Error(Errc::BadConfig, "unknown roster entry '" + k + "'");
    } else {
      item += text[i];
    }
  }
  if (out.empty()) throw Error(Errc::BadConfig, "empty roster");
  return out;
}

// ---------------------------------------------------------------------------
// Options and results
// ---------------------------------------------------------------------------

struct PipelineOptions {
  std::uint64_t seed = 0;
  std::size_t folds = 5;
  double inner_val_fraction = 0.2;
  std::array<double, 3> split_ratios = {0.6, 0.2, 0.2};
  int budget = 10;
  AugmentConfig augment;
  OrganCriteria criteria = OrganCriteria::defaults();
  MultiviewConfig dnn;
  SearchSpace space;
  ForestConfig forest;
  GbtConfig gbt;
  double grid_step = 0.05;
  std::vector<RosterEntry> roster = parse_roster("ensemble");
  unsigned threads = 1;
  /// Test hook: fit feature statistics on every row, held-out ones included,
  /// so the audit has something to catch.
  bool leak_heldout_into_stats = false;
};

struct EntryResult {
  std::string label;
  std::vector<std::string> members;
  std::array<MetricPair, kTargetCount> test{};
  std::array<double, kTargetCount> val_rmse{};
  std::optional<EnsembleWeights> weights;
  Matrix test_pred;
};

struct TrainedModels {
  std::map<Member, MultiviewModel> networks;
  std::array<Forest, kTargetCount> forests;
  std::array<Booster, kTargetCount> boosters;
  bool has_forest = false;
  bool has_booster = false;
};

struct SplitOutcome {
  std::size_t split = 0;
  std::size_t n_train = 0;      // original training rows
  std::size_t n_synthetic = 0;  // SMOTE rows added
  std::size_t n_val = 0;
  std::size_t n_test = 0;
  bool too_few_rare = false;
  std::vector<std::size_t> test_rows;
  Matrix test_targets;
  std::map<Member, std::array<double, kTargetCount>> member_val_rmse;
  std::map<Member, MultiviewConfig> chosen;
  std::map<Member, std::vector<SearchTrial>> trials;
  std::vector<EntryResult> entries;
  std::optional<TrainedModels> models;
  Preprocessor prep;

  const EntryResult& entry(const std::string& label) const {
    for (const auto& e : entries)
      if (e.label == label) return e;
    throw Error(Errc::BadConfig, "no roster entry " + label);
  }
};

namespace detail {

inline std::array<double, kTargetCount> per_output_rmse(const Matrix& y, const Matrix& pred) {
  std::array<double, kTargetCount> out{};
  for (std::size_t o = 0; o < kTargetCount; ++o) out[o] = rmse(y.column(o), pred.column(o));
  return out;
}

inline std::vector<RowTag> original_tags(std::span<const std::size_t> rows) {
  std::vector<RowTag> t;
  for (std::size_t r : rows) t.push_back({r, r, false});
  return t;
}

inline std::vector<std::size_t> sorted_copy(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// Trains and scores every roster entry on one (train, val, test) split.
inline SplitOutcome run_split(const CleanDataset& data, const std::vector<std::size_t>& train_idx,
                              const std::vector<std::size_t>& val_idx, const std::vector<std::size_t>& test_idx,
                              const PipelineOptions& opt, std::uint64_t split_seed, std::size_t split_id,
                              AuditLog* audit, bool keep_models = false) {
  if (train_idx.size() < 2) throw Error(Errc::TooFewSamples, "split needs at least 2 training rows");
  if (val_idx.empty()) throw Error(Errc::EmptyValidation, "split has no validation rows");
  if (test_idx.empty()) throw Error(Errc::TooFewSamples, "split has no held-out rows");
  if (audit)
    audit->register_split(split_id, detail::sorted_copy(train_idx), detail::sorted_copy(val_idx),
                          detail::sorted_copy(test_idx));
  auto log = [&](const char* purpose, std::span<const RowTag> tags) {
    if (audit) audit->record(split_id, purpose, tags);
  };

  auto gather = [&](std::span<const std::size_t> idx) {
    std::vector<SampleRecord> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(data.records.at(i));
    return out;
  };
  const auto train_recs = gather(train_idx), val_recs = gather(val_idx), test_recs = gather(test_idx);

  // Augmentation on training rows only.
  AugmentConfig aug = opt.augment;
  aug.seed = derive_seed(split_seed, {0x41554721, opt.augment.seed});
  const auto augmented = augment_records(train_recs, aug);
  const auto train_tags_orig = detail::original_tags(train_idx);
  std::vector<RowTag> train_tags = train_tags_orig;
  for (const auto& o : augmented.origins) train_tags.push_back({train_idx[o.seed_row], train_idx[o.neighbor_row], true});
  log("smote_pool", train_tags_orig);
  log("smote_synthesis", std::span<const RowTag>(train_tags).subspan(train_idx.size()));

  // Feature statistics from original training rows.
  SplitOutcome out;
  out.split = split_id;
  if (opt.leak_heldout_into_stats) {
    out.prep = Preprocessor::fit(data.records, opt.criteria);
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    log("standardization", detail::original_tags(all));
  } else {
    out.prep = Preprocessor::fit(train_recs, opt.criteria);
    log("standardization", train_tags_orig);
  }
  const ViewData train = out.prep.prepare(augmented.records);
  const ViewData val = out.prep.prepare(val_recs);
  const ViewData test = out.prep.prepare(test_recs);
  const auto val_tags = detail::original_tags(val_idx);

  out.n_train = train_idx.size();
  out.n_synthetic = augmented.records.size() - train_idx.size();
  out.n_val = val_idx.size();
  out.n_test = test_idx.size();
  out.too_few_rare = augmented.too_few_rare;
  out.test_rows = test_idx;
  out.test_targets = test.y;

  std::set<Member> needed;
  for (const auto& e : opt.roster) needed.insert(e.members.begin(), e.members.end());

  std::map<Member, Matrix> val_pred, test_pred;
  TrainedModels models;
  for (Member m : needed) {
    const auto mtag = static_cast<std::uint64_t>(m) + 1;
    if (is_network(m)) {
      MultiviewConfig base = opt.dnn;
      base.arch = m == Member::Mlp ? Architecture::PlainMlp : Architecture::CrossAttention;
      base.views = m == Member::DnnPrimary ? ViewMode::PrimaryOnly
                   : m == Member::DnnSecondary ? ViewMode::SecondaryOnly
                                               : ViewMode::Both;
      auto res = hyperparameter_search(opt.space, base, opt.budget, derive_seed(split_seed, {0x444e4e, mtag}), train, val);
      log("dnn_training", train_tags);
      log("early_stopping", val_tags);
      log("model_selection", val_tags);
      val_pred[m] = res.best.predict(val.x, val.xt);
      test_pred[m] = res.best.predict(test.x, test.xt);
      out.chosen[m] = res.best.cfg;
      out.trials[m] = std::move(res.trials);
      if (keep_models) models.networks.emplace(m, std::move(res.best));
    } else {
      const Matrix xtr = Matrix::hconcat(train.x, train.xt);
      const Matrix xva = Matrix::hconcat(val.x, val.xt);
      const Matrix xte = Matrix::hconcat(test.x, test.xt);
      Matrix pv(val.size(), kTargetCount), pt(test.size(), kTargetCount);
      for (std::size_t o = 0; o < kTargetCount; ++o) {
        const auto y = train.y.column(o);
        std::vector<double> a, b;
        if (m == Member::Rf) {
          ForestConfig fc = opt.forest;
          fc.seed = derive_seed(split_seed, {0x5246, o, opt.forest.seed});
          models.forests[o] = fit_forest(xtr, y, fc);
          a = predict_forest(models.forests[o], xva);
          b = predict_forest(models.forests[o], xte);
          models.has_forest = true;
        } else {
          GbtConfig gc = opt.gbt;
          gc.seed = derive_seed(split_seed, {0x584742, o, opt.gbt.seed});
          models.boosters[o] = fit_gbt(xtr, y, gc);
          a = predict_gbt(models.boosters[o], xva);
          b = predict_gbt(models.boosters[o], xte);
          models.has_booster = true;
        }
        for (std::size_t i = 0; i < a.size(); ++i) pv(i, o) = a[i];
        for (std::size_t i = 0; i < b.size(); ++i) pt(i, o) = b[i];
      }
      log("tree_training", train_tags);
      val_pred[m] = std::move(pv);
      test_pred[m] = std::move(pt);
    }
    out.member_val_rmse[m] = detail::per_output_rmse(val.y, val_pred[m]);
  }

  for (const auto& e : opt.roster) {
    EntryResult r;
    r.label = e.label;
    for (Member m : e.members) r.members.emplace_back(member_name(m));
    Matrix vp;
    if (e.members.size() == 1) {
      vp = val_pred[e.members[0]];
      r.test_pred = test_pred[e.members[0]];
    } else {
      std::vector<Matrix> vps, tps;
      for (Member m : e.members) {
        vps.push_back(val_pred[m]);
        tps.push_back(test_pred[m]);
      }
      r.weights = fit_weights(vps, val.y, opt.grid_step);
      log("ensemble_weights", val_tags);
      vp = ensemble_predict(vps, *r.weights);
      r.test_pred = ensemble_predict(tps, *r.weights);
    }
    r.val_rmse = detail::per_output_rmse(val.y, vp);
    for (std::size_t o = 0; o < kTargetCount; ++o)
      r.test[o] = evaluate(test.y.column(o), r.test_pred.column(o));
    out.entries.push_back(std::move(r));
  }
  if (keep_models) out.models = std::move(models);
  return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct Aggregate {
  std::string label;
  std::array<double, kTargetCount> r2_mean{}, r2_std{}, rmse_mean{}, rmse_std{};
};

struct Significance {
  std::size_t output = 0;
  std::string reference;
  std::string comparator;
  std::optional<double> p_value;
  std::size_t pairs = 0;
  bool exact = false;
  std::string note;
};

struct CVReport {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> roster;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<SplitOutcome> folds;
  std::vector<Aggregate> aggregates;
  std::vector<Significance> significance;

  const Aggregate& aggregate(const std::string& label) const {
    for (const auto& a : aggregates)
      if (a.label == label) return a;
    throw Error(Errc::BadConfig, "no aggregate for " + label);
  }
};

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

inline std::vector<Aggregate> aggregate_folds(const std::vector<SplitOutcome>& folds,
                                              const std::vector<std::string>& labels) {
  std::vector<Aggregate> out;
  for (const auto& label : labels) {
    Aggregate a;
    a.label = label;
    for (std::size_t o = 0; o < kTargetCount; ++o) {
      std::vector<double> r2s, rmses;
      for (const auto& f : folds) {
        r2s.push_back(f.entry(label).test[o].r2);
        rmses.push_back(f.entry(label).test[o].rmse);
      }
      std::tie(a.r2_mean[o], a.r2_std[o]) = mean_std(r2s);
      std::tie(a.rmse_mean[o], a.rmse_std[o]) = mean_std(rmses);
    }
    out.push_back(a);
  }
  return out;
}

/// Reference: the full ensemble when rostered, otherwise the first entry.
/// Comparator: the other entry with the lowest mean RMSE for that output.
inline std::vector<Significance> significance_tests(const std::vector<SplitOutcome>& folds,
                                                    const std::vector<Aggregate>& aggregates) {
  std::vector<Significance> out;
  if (aggregates.size() < 2) return out;
  std::string reference = aggregates.front().label;
  for (const auto& a : aggregates)
    if (a.label == "DNN+XGB+RF") reference = a.label;
  for (std::size_t o = 0; o < kTargetCount; ++o) {
    Significance s;
    s.output = o;
    s.reference = reference;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& a : aggregates)
      if (a.label != reference && a.rmse_mean[o] < best) {
        best = a.rmse_mean[o];
        s.comparator = a.label;
      }
    std::vector<double> ea, eb;
    for (const auto& f : folds) {
      const auto& pa = f.entry(reference).test_pred;
      const auto& pb = f.entry(s.comparator).test_pred;
      for (std::size_t i = 0; i < f.test_targets.rows(); ++i) {
        const double y = f.test_targets(i, o);
        ea.push_back((pa(i, o) - y) * (pa(i, o) - y));
        eb.push_back((pb(i, o) - y) * (pb(i, o) - y));
      }
    }
    try {
      const auto w = wilcoxon_one_sided(ea, eb);
      s.p_value = w.p_value;
      s.pairs = w.n;
      s.exact = w.exact;
    } catch (const Error& e) {
      s.note = e.what();
    }
    out.push_back(s);
  }
  return out;
}

/// Inner split of a fold's training portion: the first `fraction` of a
/// seeded shuffle validates, the rest trains. Both returned sorted.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> inner_split(std::vector<std::size_t> portion,
                                                                                  double fraction,
                                                                                  std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(Errc::BadConfig, "inner_val_fraction must lie in (0,1)");
  Rng rng(seed);
  shuffle(std::span<std::size_t>(portion), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(portion.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, portion.size() - 1);
  std::vector<std::size_t> val(portion.begin(), portion.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(portion.begin() + static_cast<std::ptrdiff_t>(n_val), portion.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

inline CVReport run_cv(const CleanDataset& data, const FoldPlan& plan, const PipelineOptions& opt,
                       AuditLog* audit = nullptr) {
  if (plan.folds.size() < 2) throw Error(Errc::BadConfig, "cross-validation needs at least 2 folds");
  CVReport rep;
  rep.k = plan.folds.size();
  rep.seed = opt.seed;
  for (const auto& e : opt.roster) rep.roster.push_back(e.label);

  auto one_fold = [&](std::size_t f) {
    auto [train, val] = inner_split(plan.training_portion(f), plan.inner_val_fraction,
                                    derive_seed(opt.seed, {0x494e4e4552, f}));
    return run_split(data, train, val, plan.folds[f], opt, derive_seed(opt.seed, {0x464f4c44, f}), f, audit);
  };

  rep.folds.resize(plan.folds.size());
  const unsigned threads = std::max(1u, opt.threads);
  for (std::size_t start = 0; start < plan.folds.size(); start += threads) {
    const std::size_t end = std::min(plan.folds.size(), start + threads);
    if (threads == 1) {
      rep.folds[start] = one_fold(start);
      continue;
    }
    std::vector<std::future<SplitOutcome>> jobs;
    for (std::size_t f = start; f < end; ++f) jobs.push_back(std::async(std::launch::async, one_fold, f));
    for (std::size_t f = start; f < end; ++f) rep.folds[f] = jobs[f - start].get();
  }
  rep.aggregates = aggregate_folds(rep.folds, rep.roster);
  rep.significance = significance_tests(rep.folds, rep.aggregates);
  return rep;
}

/// Single 60/20/20 split; models are kept for checkpointing.
inline SplitOutcome run_holdout(const CleanDataset& data, const SplitPlan& plan, const PipelineOptions& opt,
                                AuditLog* audit = nullptr) {
  return run_split(data, detail::sorted_copy(plan.train_idx), detail::sorted_copy(plan.val_idx),
                   detail::sorted_copy(plan.test_idx), opt, derive_seed(opt.seed, {0x484f4c44}), 0, audit, true);
}

}  // namespace nanopk
