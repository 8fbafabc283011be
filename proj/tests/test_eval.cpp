#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "test_support.hpp"

using namespace nanopk;
using nanopk::testing::random_matrix;

namespace {

// P(W+ <= observed) by visiting all 2^n sign patterns of the ranks.
double brute_force_p(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[idx[j + 1]]) == std::abs(d[idx[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = (static_cast<double>(i + j) + 2.0) / 2.0;
    i = j + 1;
  }
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0) observed += rank[i];
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) w += rank[i];
    if (w <= observed + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

PipelineOptions quick_options(std::uint64_t seed) {
  PipelineOptions opt;
  opt.seed = seed;
  opt.budget = 1;
  opt.dnn.max_epochs = 4;
  opt.dnn.patience = 2;
  opt.space.hidden_min = 16;
  opt.space.hidden_max = 32;
  opt.space.aux_max = 1;
  opt.space.head_max = {2, 2, 2, 2};
  opt.forest.n_trees = 8;
  opt.gbt.n_rounds = 15;
  return opt;
}

CleanDataset synthetic_data(std::size_t n, std::uint64_t seed) {
  return clean(generate_synthetic({.n = n, .noise_ratio = 0.3, .missing_rate = 0, .seed = seed}).records, "synthetic");
}

}  // namespace

TEST(Metrics, Examples) {
  const std::vector<double> y = {1, 2, 3}, flat = {2, 2, 2};
  EXPECT_DOUBLE_EQ(r2(y, flat), 0.0);
  EXPECT_DOUBLE_EQ(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}), std::sqrt(12.5));
  EXPECT_DOUBLE_EQ(r2(y, y), 1.0);
  try {
    r2(flat, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ZeroVarianceTargets);
  }
}

TEST(Metrics, AffineBehaviour) {
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> y(20), p(20), ya(20), pa(20);
    const double a = uniform_real(rng, 0.1, 10), b = uniform_real(rng, -5, 5);
    for (std::size_t i = 0; i < 20; ++i) {
      y[i] = uniform_real(rng, -3, 3);
      p[i] = y[i] + standard_normal(rng);
      ya[i] = a * y[i] + b;
      pa[i] = a * p[i] + b;
    }
    EXPECT_NEAR(r2(ya, pa), r2(y, p), 1e-10);
    EXPECT_NEAR(rmse(ya, pa), a * rmse(y, p), 1e-10 * a);
    EXPECT_LE(r2(y, p), 1.0);
    EXPECT_GE(rmse(y, p), 0.0);
  }
}

TEST(Wilcoxon, AllNegativeFivePairs) {
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 4, 6, 8, 10};
  const auto w = wilcoxon_one_sided(a, b);
  EXPECT_DOUBLE_EQ(w.p_value, 0.03125);
  EXPECT_EQ(w.w_plus, 0.0);
  EXPECT_TRUE(w.exact);
}

TEST(Wilcoxon, MatchesBruteForceUpToTwelvePairs) {
  Rng rng(2);
  for (std::size_t n = 5; n <= 12; ++n)
    for (int t = 0; t < 6; ++t) {
      std::vector<double> a(n), b(n, 0.0), d(n);
      for (std::size_t i = 0; i < n; ++i) {
        // Every third trial draws from a coarse grid so ties occur.
        a[i] = t % 3 == 0 ? std::round(uniform_real(rng, -4, 3)) : uniform_real(rng, -1, 0.6);
        if (a[i] == 0.0) a[i] = 1.0;
        d[i] = a[i];
      }
      const auto w = wilcoxon_one_sided(a, b);
      EXPECT_NEAR(w.p_value, brute_force_p(d), 1e-12) << "n=" << n;
      const double scaled = w.p_value * std::ldexp(1.0, static_cast<int>(n));
      EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
      EXPECT_GT(w.p_value, 0.0);
      EXPECT_LE(w.p_value, 1.0);
    }
}

TEST(Wilcoxon, DegenerateInputs) {
  const std::vector<double> same = {1, 2, 3, 4, 5, 6};
  try {
    wilcoxon_one_sided(same, same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllZeroDifferences);
  }
  try {
    wilcoxon_one_sided(std::vector<double>{1, 2, 3, 4}, std::vector<double>{2, 3, 4, 5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewPairs);
  }
  // Zero differences are dropped before counting pairs.
  const auto w = wilcoxon_one_sided(std::vector<double>{0, 0, 1, 2, 3, 4, 5}, std::vector<double>{0, 0, 2, 3, 4, 5, 6});
  EXPECT_EQ(w.n, 5u);
}

TEST(Wilcoxon, NormalApproximationAboveTwentyPairs) {
  Rng rng(3);
  std::vector<double> a(21), b(21, 0.0);
  for (auto& v : a) v = uniform_real(rng, -1, 0.5);
  const auto w = wilcoxon_one_sided(a, b);
  EXPECT_FALSE(w.exact);
  EXPECT_NEAR(w.p_value, brute_force_p(a), 0.01);

  std::vector<double> neg(30), zero(30, 0.0);
  for (std::size_t i = 0; i < 30; ++i) neg[i] = -1.0 - static_cast<double>(i);
  EXPECT_LT(wilcoxon_one_sided(neg, zero).p_value, 1e-5);
}

TEST(Saliency, LinearModelIsProportionalToWeights) {
  Rng rng(4);
  const Matrix w = random_matrix(5, 4, rng, -3, 3), v = random_matrix(3, 4, rng, -3, 3);
  const auto tw = ad::Tensor::from_matrix(w), tv = ad::Tensor::from_matrix(v);
  const auto rep = saliency([&](const ad::Tensor& x, const ad::Tensor& xt) { return ad::add(ad::matmul(x, tw), ad::matmul(xt, tv)); },
                            random_matrix(10, 5, rng), random_matrix(10, 3, rng));
  for (std::size_t o = 0; o < 4; ++o) {
    double mx = 0.0;
    for (std::size_t j = 0; j < 5; ++j) mx = std::max(mx, std::abs(w(j, o)));
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(rep.primary(o, j), std::abs(w(j, o)) / mx, 1e-12);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(rep.raw_secondary(o, j), std::abs(v(j, o)), 1e-12);
    EXPECT_FALSE(rep.primary_all_zero[o]);
  }
}

TEST(Saliency, UnusedChannelIsAllZero) {
  MultiviewConfig c;
  c.hidden_units = 8;
  c.tq = c.tk = 2;
  c.views = ViewMode::PrimaryOnly;
  const auto primary = build_multiview(c, 6, 4);
  Rng rng(5);
  const Matrix x = random_matrix(7, 6, rng), xt = random_matrix(7, 4, rng);
  const auto rp = saliency(primary, x, xt);
  for (std::size_t o = 0; o < 4; ++o) {
    EXPECT_TRUE(rp.secondary_all_zero[o]);
    EXPECT_FALSE(rp.primary_all_zero[o]);
  }
  c.views = ViewMode::SecondaryOnly;
  const auto rs = saliency(build_multiview(c, 6, 4), x, xt);
  for (std::size_t o = 0; o < 4; ++o) {
    EXPECT_TRUE(rs.primary_all_zero[o]);
    EXPECT_FALSE(rs.secondary_all_zero[o]);
  }
}

TEST(Saliency, AgreesWithFiniteDifferences) {
  MultiviewConfig c;
  c.hidden_units = 8;
  c.tq = c.tk = 2;
  c.head_layers = {1, 2, 2, 3};
  c.seed = 12;
  auto m = build_multiview(c, 5, 3);
  m.target_scale = Standardizer({1, 2, 3, 4}, {0.5, 2, 1, 3});
  Rng rng(6);
  const Matrix x = random_matrix(4, 5, rng), xt = random_matrix(4, 3, rng);
  const auto rep = saliency(m, x, xt);
  const double h = 1e-6;
  for (std::size_t j = 0; j < 5; ++j) {
    std::vector<double> acc(4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
      Matrix up = x, dn = x;
      up(i, j) += h;
      dn(i, j) -= h;
      const Matrix pu = m.predict(up, xt), pd = m.predict(dn, xt);
      for (std::size_t o = 0; o < 4; ++o) acc[o] += std::abs((pu(i, o) - pd(i, o)) / (2 * h)) / 4.0;
    }
    for (std::size_t o = 0; o < 4; ++o) EXPECT_NEAR(rep.raw_primary(o, j), acc[o], 1e-5 * std::max(1.0, acc[o]));
  }
}

TEST(Roster, PresetsAndLists) {
  auto labels = [](const std::vector<RosterEntry>& r) {
    std::vector<std::string> out;
    for (const auto& e : r) out.push_back(e.label);
    return out;
  };
  EXPECT_EQ(labels(parse_roster("ensemble")), (std::vector<std::string>{"DNN+XGB+RF"}));
  EXPECT_EQ(labels(parse_roster("ablation")).size(), 6u);
  EXPECT_EQ(labels(parse_roster("benchmark")), (std::vector<std::string>{"RF", "XGB", "MLP", "DNN+XGB+RF"}));
  EXPECT_EQ(labels(parse_roster("full")).size(), 9u);
  EXPECT_EQ(labels(parse_roster("dnn_primary, rf")), (std::vector<std::string>{"DNN Primary", "RF"}));
  EXPECT_THROW(parse_roster("RF,RF"), Error);
  EXPECT_THROW(parse_roster("SVM"), Error);
}

TEST(Config, ParsesAssignmentsAndReportsLine) {
  RunConfig cfg;
  std::istringstream in("# comment\nseed = 9\nbudget=3\n\ndnn.hidden_units = 64\nroster = ablation\n");
  parse_config(in, cfg);
  EXPECT_EQ(cfg.pipeline.seed, 9u);
  EXPECT_EQ(cfg.pipeline.budget, 3);
  EXPECT_EQ(cfg.pipeline.dnn.hidden_units, 64);
  EXPECT_EQ(cfg.pipeline.roster.size(), 6u);

  std::istringstream bad("seed = 1\nfrobnicate = 2\n");
  try {
    parse_config(bad, cfg, "run.cfg");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadConfig);
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
  }
  EXPECT_THROW(cfg.set("dnn.views", "both"), Error);
  EXPECT_THROW(cfg.set("dnn.hidden_units", "-4"), Error);
}

TEST(Config, EchoRoundTrips) {
  RunConfig a;
  a.set("seed", "31");
  a.set("forest.n_trees", "17");
  a.set("priors.size.lung.max", "120");
  a.set("search.optimizers", "adam");
  RunConfig b;
  for (const auto& [k, v] : a.echo()) b.set(k, v);
  EXPECT_EQ(b.echo(), a.echo());
}

TEST(CrossValidation, DeterministicDominantAndAuditClean) {
  const auto data = synthetic_data(60, 3);
  const auto plan = make_cv_folds(data.size(), 3, 5);
  auto opt = quick_options(5);
  AuditLog audit;
  const auto a = run_cv(data, plan, opt, &audit);
  const auto b = run_cv(data, plan, opt);
  ASSERT_EQ(a.folds.size(), 3u);
  EXPECT_TRUE(audit.violations().empty());
  for (const char* p : {"standardization", "smote_pool", "dnn_training", "tree_training", "early_stopping",
                        "model_selection", "ensemble_weights"})
    EXPECT_TRUE(audit.purposes().count(p)) << p;

  for (std::size_t f = 0; f < 3; ++f) {
    const auto& ea = a.folds[f].entry("DNN+XGB+RF");
    EXPECT_EQ(ea.test_pred, b.folds[f].entry("DNN+XGB+RF").test_pred);
    for (std::size_t o = 0; o < kTargetCount; ++o)
      for (const auto& [m, v] : a.folds[f].member_val_rmse) EXPECT_LE(ea.val_rmse[o], v[o] + 1e-12);
    std::vector<std::size_t> seen = a.folds[f].test_rows;
    EXPECT_EQ(seen, plan.folds[f]);
  }
  const auto& agg = a.aggregate("DNN+XGB+RF");
  for (std::size_t o = 0; o < kTargetCount; ++o) EXPECT_TRUE(std::isfinite(agg.rmse_mean[o]));
}

TEST(CrossValidation, LeakedStatisticsAreCaught) {
  const auto data = synthetic_data(40, 4);
  const auto plan = make_cv_folds(data.size(), 2, 1);
  auto opt = quick_options(1);
  opt.roster = parse_roster("RF");
  opt.leak_heldout_into_stats = true;
  AuditLog audit;
  run_cv(data, plan, opt, &audit);
  const auto v = audit.violations();
  ASSERT_FALSE(v.empty());
  EXPECT_NE(v.front().find("standardization"), std::string::npos);
}

TEST(Aggregation, MeanAndSampleStd) {
  const std::vector<double> v = {1, 2, 3, 4};
  const auto [m, s] = mean_std(v);
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{7}).second, 0.0);
}
