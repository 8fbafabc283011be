#pragma once

// Per-output convex combinations of member predictions, with weights chosen
// by exhaustive search over a regular simplex grid.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/metrics.hpp"

namespace nanopk {

struct EnsembleWeights {
  /// weights[o][k]: weight of member k for output o; each row sums to 1.
  std::vector<std::vector<double>> weights;

  std::size_t outputs() const { return weights.size(); }
  std::size_t members() const { return weights.empty() ? 0 : weights[0].size(); }
};

namespace detail {

/// Visits every composition of `total` into `parts` non-negative integers,
/// first component descending, then the rest in descending lexicographic order.
inline void for_each_composition(int total, std::size_t parts, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> c(parts, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == parts) {
      c[i] = left;
      fn(c);
      return;
    }
    for (int v = left; v >= 0; --v) {
      c[i] = v;
      rec(i + 1, left - v);
    }
  };
  rec(0, total);
}

/// sum_k w_k p_k with zero weights skipped, so a vertex reproduces its
/// member exactly.
inline double combine(std::span<const double> w, std::span<const double> p) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k] != 0.0) s += w[k] * p[k];
  return s;
}

}  // namespace detail

/// Chooses, per output, the grid point with the lowest validation RMSE. Ties
/// go to the larger first weight, then to the lexicographically larger rest.
/// A member whose predictions duplicate an earlier member's bit for bit is
/// pinned at weight 0.
inline EnsembleWeights fit_weights(const std::vector<Matrix>& val_preds, const Matrix& val_targets,
                                   double grid_step = 0.05) {
  if (val_preds.empty()) throw Error(Errc::BadConfig, "ensemble needs at least one member");
  if (val_targets.rows() == 0) throw Error(Errc::EmptyValidation, "ensemble weights need validation rows");
  for (const auto& p : val_preds)
    if (p.rows() != val_targets.rows() || p.cols() != val_targets.cols())
      throw Error(Errc::ShapeMismatch, "member prediction shape differs from targets");
  if (!(grid_step > 0.0 && grid_step <= 1.0)) throw Error(Errc::BadConfig, "grid_step must lie in (0,1]");
  const double divisions = 1.0 / grid_step;
  const int g = static_cast<int>(std::llround(divisions));
  if (std::abs(divisions - g) > 1e-9) throw Error(Errc::BadConfig, "grid_step must divide 1");

  const std::size_t m = val_preds.size(), n = val_targets.rows();
  EnsembleWeights out;
  for (std::size_t o = 0; o < val_targets.cols(); ++o) {
    std::vector<std::vector<double>> cols(m);
    for (std::size_t k = 0; k < m; ++k) cols[k] = val_preds[k].column(o);
    const auto y = val_targets.column(o);
    std::vector<char> pinned(m, 0);
    for (std::size_t k = 1; k < m; ++k)
      for (std::size_t j = 0; j < k; ++j)
        if (!pinned[j] && cols[j] == cols[k]) pinned[k] = 1;

    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_w;
    std::vector<double> w(m), p(m), yhat(n);
    detail::for_each_composition(g, m, [&](const std::vector<int>& c) {
      for (std::size_t k = 0; k < m; ++k) {
        if (pinned[k] && c[k] != 0) return;
        w[k] = static_cast<double>(c[k]) / static_cast<double>(g);
      }
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < m; ++k) p[k] = cols[k][i];
        yhat[i] = detail::combine(w, p);
      }
      const double e = rmse(y, yhat);
      if (e < best) {
        best = e;
        best_w = w;
      }
    });
    out.weights.push_back(best_w);
  }
  return out;
}

inline Matrix ensemble_predict(const std::vector<Matrix>& preds, const EnsembleWeights& w) {
  if (preds.empty() || preds.size() != w.members()) throw Error(Errc::ShapeMismatch, "ensemble member count");
  const std::size_t n = preds[0].rows(), q = preds[0].cols();
  if (q != w.outputs()) throw Error(Errc::ShapeMismatch, "ensemble output count");
  for (const auto& p : preds)
    if (p.rows() != n || p.cols() != q) throw Error(Errc::ShapeMismatch, "member prediction shapes differ");
  Matrix out(n, q);
  std::vector<double> p(preds.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < q; ++o) {
      for (std::size_t k = 0; k < preds.size(); ++k) p[k] = preds[k](i, o);
      out(i, o) = detail::combine(w.weights[o], p);
    }
  return out;
}

}  // namespace nanopk
