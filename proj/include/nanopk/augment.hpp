#pragma once

// SMOTE-style oversampling for regression. Rare rows are those whose target
// lies above a per-target empirical quantile; synthetic rows interpolate a
// rare seed row towards one of its nearest rare neighbours, moving numeric
// features and targets by the same fraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "nanopk/dataset.hpp"
#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/random.hpp"
#include "nanopk/standardize.hpp"

namespace nanopk {

struct AugmentConfig {
  double rare_quantile = 0.9;
  int k_neighbors = 5;
  double oversample_factor = 1.0;
  std::uint64_t seed = 0;
  bool enabled = true;

  void validate() const {
    if (!(rare_quantile > 0.0 && rare_quantile < 1.0))
      throw Error(Errc::BadConfig, "augment.rare_quantile must lie in (0,1)");
    if (k_neighbors < 1) throw Error(Errc::BadConfig, "augment.k_neighbors must be >= 1");
    if (!(oversample_factor >= 0.0)) throw Error(Errc::BadConfig, "augment.oversample_factor must be >= 0");
  }
};

/// Linear-interpolation empirical quantile (type 7).
inline double empirical_quantile(std::span<const double> values, double q) {
  if (values.empty()) throw Error(Errc::TooFewSamples, "quantile of empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Indices whose target strictly exceeds the `rare_quantile` quantile.
inline std::vector<std::size_t> identify_rare(std::span<const double> targets, double rare_quantile) {
  if (targets.empty()) throw Error(Errc::TooFewSamples, "identify_rare needs targets");
  const double threshold = empirical_quantile(targets, rare_quantile);
  std::vector<std::size_t> rare;
  for (std::size_t i = 0; i < targets.size(); ++i)
    if (targets[i] > threshold) rare.push_back(i);
  return rare;
}

/// Union over target columns of the per-column rare sets, ascending.
inline std::vector<std::size_t> identify_rare_union(const Matrix& targets, double rare_quantile) {
  std::vector<char> flag(targets.rows(), 0);
  for (std::size_t c = 0; c < targets.cols(); ++c) {
    const auto col = targets.column(c);
    for (std::size_t i : identify_rare(col, rare_quantile)) flag[i] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < flag.size(); ++i)
    if (flag[i]) out.push_back(i);
  return out;
}

/// out = seed + lambda * (neighbor - seed)
inline void smote_interpolate(std::span<const double> seed, std::span<const double> neighbor, double lambda,
                              std::span<double> out) {
  for (std::size_t j = 0; j < seed.size(); ++j) out[j] = seed[j] + lambda * (neighbor[j] - seed[j]);
}

struct SyntheticOrigin {
  std::size_t seed_row;
  std::size_t neighbor_row;
  double lambda;
};

struct SmoteResult {
  Matrix rows;     // originals first, synthetic rows appended
  Matrix targets;  // aligned with rows
  std::size_t original_count = 0;
  std::vector<SyntheticOrigin> origins;  // one per synthetic row
  bool too_few_rare = false;
};

namespace detail {

/// Up to k nearest rare rows to `self` (excluding it), by Euclidean distance
/// in standardized feature space; ties resolved by row index.
inline std::vector<std::size_t> nearest_rare(const Matrix& z, std::span<const std::size_t> rare, std::size_t self,
                                             std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(rare.size());
  for (std::size_t r : rare) {
    if (r == self) continue;
    double d = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      const double diff = z(r, c) - z(self, c);
      d += diff * diff;
    }
    dist.emplace_back(d, r);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = dist[i].second;
  return out;
}

}  // namespace detail

inline SmoteResult smote_regression(const Matrix& rows, const Matrix& targets, const AugmentConfig& cfg) {
  cfg.validate();
  if (rows.rows() != targets.rows()) throw Error(Errc::ShapeMismatch, "rows/targets length");
  SmoteResult out{rows, targets, rows.rows(), {}, false};
  if (!cfg.enabled || cfg.oversample_factor == 0.0 || rows.rows() == 0) return out;

  const auto rare = identify_rare_union(targets, cfg.rare_quantile);
  if (rare.size() < 2) {
    out.too_few_rare = true;
    return out;
  }

  const Matrix z = Standardizer::fit(rows).apply(rows);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.k_neighbors), rare.size() - 1);
  std::vector<std::vector<std::size_t>> neighbors(rows.rows());
  for (std::size_t r : rare) neighbors[r] = detail::nearest_rare(z, rare, r, k);

  const auto n_synth =
      static_cast<std::size_t>(std::llround(cfg.oversample_factor * static_cast<double>(rare.size())));
  Rng rng(cfg.seed);
  std::vector<double> x(rows.cols()), y(targets.cols());
  for (std::size_t s = 0; s < n_synth; ++s) {
    const std::size_t seed_row = rare[uniform_index(rng, rare.size())];
    const auto& nb = neighbors[seed_row];
    const std::size_t neighbor_row = nb[uniform_index(rng, nb.size())];
    const double lambda = uniform01(rng);
    smote_interpolate(rows.row(seed_row), rows.row(neighbor_row), lambda, x);
    smote_interpolate(targets.row(seed_row), targets.row(neighbor_row), lambda, y);
    out.rows.append_row(x);
    out.targets.append_row(y);
    out.origins.push_back({seed_row, neighbor_row, lambda});
  }
  return out;
}

struct AugmentedRecords {
  std::vector<SampleRecord> records;  // originals first
  std::size_t original_count = 0;
  std::vector<SyntheticOrigin> origins;  // positions refer to the input span
  bool too_few_rare = false;
};

/// Record-level SMOTE: numeric fields and targets are interpolated,
/// categorical fields are copied from the seed row.
inline AugmentedRecords augment_records(std::span<const SampleRecord> records, const AugmentConfig& cfg) {
  Matrix numerics(records.size(), kNumericCount), targets(records.size(), kTargetCount);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].complete()) throw Error(Errc::BadConfig, "augmentation needs complete records");
    const auto v = numeric_vector(records[i]);
    const auto t = target_vector(records[i]);
    std::copy(v.begin(), v.end(), numerics.row(i).begin());
    std::copy(t.begin(), t.end(), targets.row(i).begin());
  }
  const SmoteResult sm = smote_regression(numerics, targets, cfg);
  AugmentedRecords out;
  out.records.assign(records.begin(), records.end());
  out.original_count = records.size();
  out.origins = sm.origins;
  out.too_few_rare = sm.too_few_rare;
  for (std::size_t s = 0; s < sm.origins.size(); ++s) {
    SampleRecord r = records[sm.origins[s].seed_row];
    set_numerics(r, sm.rows.row(records.size() + s));
    set_targets(r, sm.targets.row(records.size() + s));
    out.records.push_back(r);
  }
  return out;
}

}  // namespace nanopk
