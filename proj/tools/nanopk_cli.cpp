// nanopk command-line front end.
//
//   nanopk ingest    --data FILE
//   nanopk features  --data FILE --out DIR
//   nanopk synth     --out FILE [--n N] [--noise R]
//   nanopk train     --data FILE --out DIR
//   nanopk cv        --data FILE --out DIR
//   nanopk benchmark --data FILE --out DIR
//   nanopk saliency  --data FILE --checkpoint FILE --out DIR
//
// Exit codes: 0 success, 1 usage/config, 2 data, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "nanopk/nanopk.hpp"

namespace fs = std::filesystem;
using namespace nanopk;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string roster;
  std::optional<int> budget;
  std::string data;
  std::string checkpoint;
  std::vector<std::string> sets;
  std::optional<std::size_t> n;
  std::optional<double> noise;
  std::optional<double> missing;
};

RunConfig resolve(const Flags& f, const std::string& default_roster = {}) {
  RunConfig cfg;
  if (!default_roster.empty()) cfg.set("roster", default_roster);
  if (!f.config.empty()) load_config_file(f.config, cfg);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error(Errc::BadConfig, "--set expects key=value, got '" + s + "'");
    cfg.set(std::string(detail::trim(s.substr(0, eq))), std::string(detail::trim(s.substr(eq + 1))));
  }
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.roster.empty()) cfg.set("roster", f.roster);
  if (f.budget) cfg.set("budget", std::to_string(*f.budget));
  if (!f.data.empty()) cfg.data = f.data;
  if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;
  if (f.n) cfg.synth.n = *f.n;
  if (f.noise) cfg.synth.noise_ratio = *f.noise;
  if (f.missing) cfg.synth.missing_rate = *f.missing;
  return cfg;
}

/// Writes all files or none: each goes to a temp name first, then every
/// temp file is renamed into place.
void commit_files(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string());
  std::vector<std::pair<fs::path, fs::path>> staged;
  try {
    for (const auto& [name, content] : files) {
      const fs::path final_path = dir / name;
      const fs::path tmp = dir / (name + ".partial");
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(Errc::Io, "cannot write " + tmp.string());
      out << content;
      out.close();
      if (!out) throw Error(Errc::Io, "write failed for " + tmp.string());
      staged.emplace_back(tmp, final_path);
    }
  } catch (...) {
    for (const auto& s : staged) fs::remove(s.first, ec);
    throw;
  }
  for (const auto& [tmp, final_path] : staged) {
    fs::rename(tmp, final_path, ec);
    if (ec) throw Error(Errc::Io, "cannot move " + tmp.string() + " into place");
  }
}

struct Loaded {
  std::size_t loaded = 0;
  CleanDataset clean;
};

Loaded load(const RunConfig& cfg) {
  if (cfg.data.empty()) throw Error(Errc::BadConfig, "no dataset given (--data or 'data =' in the config)");
  const auto raw = load_dataset(cfg.data);
  Loaded l;
  l.loaded = raw.size();
  l.clean = clean(raw, cfg.data);
  return l;
}

struct ColumnRange {
  const char* name;
  double lo, hi;
};

// Documented value ranges of the source schema.
constexpr ColumnRange kRanges[] = {
    {"HD", 5, 456},         {"ZP", 0, 274},           {"TW", 0.02, 5.09},      {"TSiz", 0.02, 1.8},
    {"Dose", 0.001, 1220},  {"BW", 16, 35},           {"KTRESmax", 0.001, 25}, {"KTRESn", 0.01, 10},
    {"KTRES50", 0.00001, 180}, {"KTRESrelease", 0.0001, 14},
};

int cmd_ingest(const RunConfig& cfg) {
  const auto l = load(cfg);
  std::cout << l.loaded << " loaded, " << l.clean.size() << " retained\n";
  Json j;
  j["loaded"] = l.loaded;
  j["retained"] = l.clean.size();
  Json cols = Json::array();
  std::cout << "column,min,max,documented_min,documented_max,outside\n";
  for (const auto& r : kRanges) {
    std::vector<double> v;
    for (const auto& rec : l.clean.records) {
      const auto num = numeric_vector(rec);
      const auto tgt = target_vector(rec);
      for (std::size_t i = 0; i < kNumericCount; ++i)
        if (kNumericNames[i] == r.name) v.push_back(num[i]);
      for (std::size_t i = 0; i < kTargetCount; ++i)
        if (kTargetNames[i] == r.name) v.push_back(tgt[i]);
    }
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    std::size_t outside = 0;
    for (double x : v) outside += (x < r.lo || x > r.hi) ? 1 : 0;
    std::cout << r.name << ',' << detail::format_number(*mn) << ',' << detail::format_number(*mx) << ','
              << detail::format_number(r.lo) << ',' << detail::format_number(r.hi) << ',' << outside << '\n';
    cols.push_back({{"column", r.name}, {"min", *mn}, {"max", *mx}, {"outside_documented", outside}});
  }
  j["columns"] = cols;
  if (!cfg.out.empty() && cfg.out != "out") commit_files(cfg.out, {{"ingest.json", j.dump(2) + "\n"}});
  return 0;
}

int cmd_features(const RunConfig& cfg) {
  const auto l = load(cfg);
  std::ostringstream os;
  write_secondary_csv(os, l.clean.records, cfg.pipeline.criteria);
  commit_files(cfg.out, {{"secondary_features.csv", os.str()}});
  std::cout << "wrote " << l.clean.size() << " rows to " << (fs::path(cfg.out) / "secondary_features.csv").string()
            << '\n';
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  const auto res = generate_synthetic(cfg.synth);
  std::ostringstream os;
  write_dataset(os, res.records);
  fs::path target = cfg.out;
  if (target.extension() != ".csv") target /= "synthetic.csv";
  commit_files(target.parent_path().empty() ? fs::path(".") : target.parent_path(),
               {{target.filename().string(), os.str()}});
  std::cout << "wrote " << res.records.size() << " rows (" << res.incomplete << " with a blank field) to "
            << target.string() << '\n';
  return 0;
}

void print_aggregates(const std::vector<Aggregate>& aggs) {
  std::cout << "model";
  for (auto t : kTargetNames) std::cout << " | " << t << " R2 / RMSE";
  std::cout << '\n';
  for (const auto& a : aggs) {
    std::cout << a.label;
    for (std::size_t o = 0; o < kTargetCount; ++o)
      std::cout << " | " << detail::format_number(std::round(a.r2_mean[o] * 1000) / 1000) << " / "
                << detail::format_number(std::round(a.rmse_mean[o] * 1000) / 1000);
    std::cout << '\n';
  }
}

int cmd_cv(const RunConfig& cfg) {
  const auto l = load(cfg);
  const auto plan = make_cv_folds(l.clean.size(), cfg.pipeline.folds, cfg.pipeline.seed, cfg.pipeline.inner_val_fraction);
  AuditLog audit;
  CVReport rep = run_cv(l.clean, plan, cfg.pipeline, &audit);
  rep.config = cfg.echo();
  const auto violations = audit.violations();
  Json j = report_json(rep);
  j["audit"] = {{"entries", audit.entries().size()}, {"violations", violations}};
  std::ostringstream metrics, agg;
  write_metrics_csv(metrics, rep.folds);
  write_aggregate_csv(agg, rep.aggregates);
  commit_files(cfg.out, {{"report.json", j.dump(2) + "\n"}, {"metrics.csv", metrics.str()}, {"aggregate.csv", agg.str()}});
  print_aggregates(rep.aggregates);
  if (!violations.empty()) {
    std::cerr << "audit found " << violations.size() << " held-out reads\n";
    return 2;
  }
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto l = load(cfg);
  const auto plan = make_holdout_split(l.clean.size(), cfg.pipeline.split_ratios, cfg.pipeline.seed);
  AuditLog audit;
  const auto out = run_holdout(l.clean, plan, cfg.pipeline, &audit);
  std::vector<std::pair<std::string, std::string>> files;
  Json j = holdout_json(out, cfg.pipeline.seed, cfg.echo());
  j["audit"] = {{"entries", audit.entries().size()}, {"violations", audit.violations()}};
  files.emplace_back("report.json", j.dump(2) + "\n");
  std::ostringstream metrics;
  write_metrics_csv(metrics, {out});
  files.emplace_back("metrics.csv", metrics.str());
  for (const auto& [m, model] : out.models->networks) {
    Checkpoint ck = model.to_checkpoint();
    out.prep.to_checkpoint(ck);
    ck.set_meta("member", member_name(m));
    std::ostringstream bin;
    write_checkpoint(bin, ck);
    std::string name = member_name(m);
    for (char& c : name) c = c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    files.emplace_back(name + ".ckpt", bin.str());
  }
  for (std::size_t o = 0; o < kTargetCount; ++o) {
    if (out.models->has_forest) {
      std::ostringstream os;
      write_forest(os, out.models->forests[o]);
      files.emplace_back("rf_" + std::string(kTargetNames[o]) + ".trees", os.str());
    }
    if (out.models->has_booster) {
      std::ostringstream os;
      write_booster(os, out.models->boosters[o]);
      files.emplace_back("xgb_" + std::string(kTargetNames[o]) + ".trees", os.str());
    }
  }
  commit_files(cfg.out, files);
  std::cout << "train " << out.n_train << " (+" << out.n_synthetic << " synthetic), val " << out.n_val << ", test "
            << out.n_test << '\n';
  for (const auto& e : out.entries) {
    std::cout << e.label;
    for (std::size_t o = 0; o < kTargetCount; ++o)
      std::cout << " | " << kTargetNames[o] << " R2 " << detail::format_number(std::round(e.test[o].r2 * 1000) / 1000);
    std::cout << '\n';
  }
  return 0;
}

int cmd_saliency(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw Error(Errc::BadConfig, "saliency needs --checkpoint");
  const Checkpoint ck = load_checkpoint(cfg.checkpoint);
  const MultiviewModel model = model_from_checkpoint(ck);
  const Preprocessor prep = Preprocessor::from_checkpoint(ck);
  const auto l = load(cfg);
  const ViewData v = prep.prepare(l.clean.records);
  const auto rep = saliency(model, v.x, v.xt);
  std::ostringstream p, s;
  write_saliency_csv(p, rep.primary, Encoder::column_names());
  write_saliency_csv(s, rep.secondary, SecondaryFeatures::column_names());
  commit_files(cfg.out, {{"saliency_primary.csv", p.str()}, {"saliency_secondary.csv", s.str()}});
  bool degenerate = model.optimizer_steps == 0;
  for (std::size_t o = 0; o < kTargetCount; ++o)
    if (rep.primary_all_zero[o] && rep.secondary_all_zero[o]) degenerate = true;
  if (model.optimizer_steps == 0) std::cerr << "warning: checkpoint holds an untrained model\n";
  for (std::size_t o = 0; o < kTargetCount; ++o) {
    if (rep.primary_all_zero[o]) std::cerr << "warning: primary saliency is all zero for " << kTargetNames[o] << '\n';
    if (rep.secondary_all_zero[o]) std::cerr << "warning: secondary saliency is all zero for " << kTargetNames[o] << '\n';
  }
  std::cout << "saliency over " << v.size() << " samples" << (degenerate ? " (degenerate)" : "") << '\n';
  return 0;
}

int exit_code(Errc c) {
  switch (classify(c)) {
    case ErrorClass::Usage: return 1;
    case ErrorClass::Data: return 2;
    case ErrorClass::Numeric: return 3;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nanopk: tumour-delivery pharmacokinetics from nanoparticle descriptors"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "key = value config file");
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--out", f.out, "output directory (file for synth)");
    sub->add_option("--data", f.data, "dataset CSV");
    sub->add_option("--set", f.sets, "override one config key (key=value)");
  };
  auto modelling = [&](CLI::App* sub) {
    sub->add_option("--roster", f.roster, "ensemble | ablation | benchmark | full | comma list");
    sub->add_option("--budget", f.budget, "random-search trials per network");
  };
  auto* ingest = app.add_subcommand("ingest", "load, clean and summarise a dataset");
  auto* features = app.add_subcommand("features", "write the 16-column secondary feature table");
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with a planted signal");
  auto* train = app.add_subcommand("train", "fit on a 60/20/20 split and save models");
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation report");
  auto* bench = app.add_subcommand("benchmark", "cross-validation over the benchmark roster");
  auto* sal = app.add_subcommand("saliency", "gradient saliency tables for a checkpoint");
  for (auto* s : {ingest, features, synth, train, cv, bench, sal}) common(s);
  for (auto* s : {train, cv, bench}) modelling(s);
  synth->add_option("--n", f.n, "row count");
  synth->add_option("--noise", f.noise, "noise sd as a multiple of the signal sd");
  synth->add_option("--missing-rate", f.missing, "fraction of rows with one blank field");
  sal->add_option("--checkpoint", f.checkpoint, "network checkpoint written by train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(resolve(f));
    if (features->parsed()) return cmd_features(resolve(f));
    if (synth->parsed()) {
      Flags g = f;
      if (g.out.empty()) g.out = "synthetic.csv";
      return cmd_synth(resolve(g));
    }
    if (train->parsed()) return cmd_train(resolve(f));
    if (cv->parsed()) return cmd_cv(resolve(f));
    if (bench->parsed()) return cmd_cv(resolve(f, "benchmark"));
    if (sal->parsed()) return cmd_saliency(resolve(f));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
