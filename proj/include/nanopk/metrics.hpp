#pragma once

// Regression metrics and the one-sided paired Wilcoxon signed-rank test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "nanopk/error.hpp"

namespace nanopk {

struct MetricPair {
  double r2 = 0.0;
  double rmse = 0.0;
};

inline double rmse(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw Error(Errc::ShapeMismatch, "rmse length mismatch");
  if (y.empty()) throw Error(Errc::TooFewSamples, "rmse of empty sample");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

inline double r2(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw Error(Errc::ShapeMismatch, "r2 length mismatch");
  if (y.size() < 2) throw Error(Errc::TooFewSamples, "r2 needs at least two samples");
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    ss_res += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) throw Error(Errc::ZeroVarianceTargets, "targets are constant");
  return 1.0 - ss_res / ss_tot;
}

inline MetricPair evaluate(std::span<const double> y, std::span<const double> yhat) {
  return {r2(y, yhat), rmse(y, yhat)};
}

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // sum of ranks of positive differences
  std::size_t n = 0;    // pairs left after dropping zero differences
  bool exact = true;
};

inline double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Tests H1: a is stochastically smaller than b, on differences a - b.
/// p = P(W+ <= observed) under the symmetric null. Exact for n <= 20.
inline WilcoxonResult wilcoxon_one_sided(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::ShapeMismatch, "wilcoxon needs paired samples");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  if (d.empty()) throw Error(Errc::AllZeroDifferences, "every paired difference is zero");
  const std::size_t n = d.size();
  if (n < 5) throw Error(Errc::TooFewPairs, std::to_string(n) + " non-zero differences");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(d[i]) < std::abs(d[j]); });
  // Doubled average ranks keep tied ranks integral.
  std::vector<std::uint64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const std::uint64_t r2x = static_cast<std::uint64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2x;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::uint64_t obs2 = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (d[i] > 0.0) obs2 += rank2[i];

  WilcoxonResult res;
  res.n = n;
  res.w_plus = static_cast<double>(obs2) / 2.0;
  if (n <= 20) {
    const std::uint64_t total = std::accumulate(rank2.begin(), rank2.end(), std::uint64_t{0});
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    std::uint64_t reach = 0;
    for (std::uint64_t r : rank2) {
      for (std::uint64_t s = reach + 1; s-- > 0;)
        if (count[s] != 0.0) count[s + r] += count[s];
      reach += r;
    }
    double le = 0.0;
    for (std::uint64_t s = 0; s <= obs2; ++s) le += count[s];
    res.p_value = le / std::ldexp(1.0, static_cast<int>(n));
    res.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double z = (res.w_plus - mean + 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, standard_normal_cdf(z));
    res.exact = false;
  }
  return res;
}

}  // namespace nanopk
