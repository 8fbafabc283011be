#pragma once

// CART regression trees, bagged forests and gradient-boosted trees.
//
// A split maximises G_L^2/(n_L+l2) + G_R^2/(n_R+l2) - G^2/(n+l2) where G is
// the node's target sum; with l2 = 0 that is the squared-error reduction.
// Leaves predict G/(n+l2). Zero-gain splits are still taken while a node is
// impure, so XOR-like patterns separate at depth two.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/random.hpp"

namespace nanopk {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    if (nodes.empty()) throw Error(Errc::BadConfig, "empty tree");
    std::size_t i = 0;
    while (nodes[i].feature >= 0)
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                       : nodes[i].right);
    return nodes[i].value;
  }

  std::size_t depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t best = 0;
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (nodes[i].feature >= 0) {
        stack.emplace_back(static_cast<std::size_t>(nodes[i].left), d + 1);
        stack.emplace_back(static_cast<std::size_t>(nodes[i].right), d + 1);
      }
    }
    return best;
  }
};

struct TreeParams {
  int max_depth = 0;                  // 0 = unlimited
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = all
  double leaf_l2 = 0.0;
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, const TreeParams& p, Rng& rng)
      : x_(x), y_(y), p_(p), rng_(rng) {
    features_.resize(x.cols());
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  RegressionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  double leaf_value(double sum, std::size_t n) const { return sum / (static_cast<double>(n) + p_.leaf_l2); }

  int grow(std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double sum = 0.0;
    bool pure = true;
    for (std::size_t r : rows) {
      sum += y_[r];
      if (y_[r] != y_[rows.front()]) pure = false;
    }
    tree_.nodes[static_cast<std::size_t>(id)].value = leaf_value(sum, rows.size());
    const bool depth_left = p_.max_depth <= 0 || depth < p_.max_depth;
    if (pure || !depth_left || rows.size() < 2 * p_.min_leaf) return id;

    const std::size_t m = p_.features_per_split == 0 ? features_.size()
                                                     : std::min(p_.features_per_split, features_.size());
    if (m < features_.size())
      for (std::size_t i = 0; i < m; ++i)
        std::swap(features_[i], features_[i + uniform_index(rng_, features_.size() - i)]);

    const double parent = sum * sum / (static_cast<double>(rows.size()) + p_.leaf_l2);
    double best_gain = -1e-12 * (std::abs(parent) + 1.0);
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::pair<double, double>> sorted(rows.size());
    for (std::size_t fi = 0; fi < m; ++fi) {
      const std::size_t f = features_[fi];
      for (std::size_t i = 0; i < rows.size(); ++i) sorted[i] = {x_(rows[i], f), y_[rows[i]]};
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        left += sorted[i].second;
        const std::size_t nl = i + 1, nr = sorted.size() - nl;
        if (sorted[i].first == sorted[i + 1].first) continue;
        if (nl < p_.min_leaf || nr < p_.min_leaf) continue;
        const double right = sum - left;
        const double gain = left * left / (static_cast<double>(nl) + p_.leaf_l2) +
                            right * right / (static_cast<double>(nr) + p_.leaf_l2) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          const double mid = 0.5 * (sorted[i].first + sorted[i + 1].first);
          best_threshold = mid < sorted[i + 1].first ? mid : sorted[i].first;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (std::size_t r : rows)
      (x_(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(lrows, depth + 1);
    const int r = grow(rrows, depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const Matrix& x_;
  std::span<const double> y_;
  TreeParams p_;
  Rng& rng_;
  std::vector<std::size_t> features_;
  RegressionTree tree_;
};

}  // namespace detail

inline RegressionTree fit_tree(const Matrix& x, std::span<const double> y, std::vector<std::size_t> rows,
                               const TreeParams& params, Rng& rng) {
  if (x.rows() != y.size()) throw Error(Errc::ShapeMismatch, "tree rows/targets length");
  if (rows.empty()) throw Error(Errc::TooFewSamples, "tree needs at least one row");
  if (params.min_leaf < 1) throw Error(Errc::BadConfig, "min_leaf must be >= 1");
  if (!(params.leaf_l2 >= 0.0)) throw Error(Errc::BadConfig, "leaf_l2 must be >= 0");
  return detail::TreeBuilder(x, y, params, rng).build(std::move(rows));
}

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

struct ForestConfig {
  int n_trees = 200;
  int max_depth = 0;
  std::size_t min_leaf = 1;
  std::size_t features_per_split = 0;  // 0 = max(1, p/3)
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct Forest {
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const {
    double s = 0.0;
    for (const auto& t : trees) s += t.predict(x);
    return s / static_cast<double>(trees.size());
  }
};

inline Forest fit_forest(const Matrix& x, std::span<const double> y, const ForestConfig& cfg) {
  if (cfg.n_trees < 1) throw Error(Errc::BadConfig, "forest needs n_trees >= 1");
  if (x.rows() < cfg.min_leaf || x.rows() == 0) throw Error(Errc::TooFewSamples, "forest has fewer rows than min_leaf");
  TreeParams tp;
  tp.max_depth = cfg.max_depth;
  tp.min_leaf = cfg.min_leaf;
  tp.features_per_split = cfg.features_per_split ? cfg.features_per_split : std::max<std::size_t>(1, x.cols() / 3);
  Forest f;
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(t)}));
    std::vector<std::size_t> rows(x.rows());
    if (cfg.bootstrap)
      for (auto& r : rows) r = uniform_index(rng, x.rows());
    else
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    f.trees.push_back(fit_tree(x, y, std::move(rows), tp, rng));
  }
  return f;
}

inline std::vector<double> predict_forest(const Forest& f, const Matrix& x) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = f.predict(x.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-boosted trees (squared loss)
// ---------------------------------------------------------------------------

struct GbtConfig {
  int n_rounds = 300;
  double learning_rate = 0.05;
  int max_depth = 4;
  double leaf_l2 = 1.0;
  std::size_t min_leaf = 1;
  std::uint64_t seed = 0;
};

struct Booster {
  double base_score = 0.0;
  double shrinkage = 1.0;
  std::vector<RegressionTree> trees;

  double predict(std::span<const double> x) const { return predict_rounds(x, trees.size()); }

  /// Prediction using only the first `rounds` trees.
  double predict_rounds(std::span<const double> x, std::size_t rounds) const {
    double s = base_score;
    for (std::size_t t = 0; t < rounds && t < trees.size(); ++t) s += shrinkage * trees[t].predict(x);
    return s;
  }
};

inline Booster fit_gbt(const Matrix& x, std::span<const double> y, const GbtConfig& cfg) {
  if (cfg.n_rounds < 1) throw Error(Errc::BadConfig, "gbt needs n_rounds >= 1");
  if (!(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0))
    throw Error(Errc::BadConfig, "gbt shrinkage must lie in (0,1]");
  if (x.rows() == 0) throw Error(Errc::TooFewSamples, "gbt needs rows");
  Booster b;
  b.shrinkage = cfg.learning_rate;
  b.base_score = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  TreeParams tp;
  tp.max_depth = cfg.max_depth;
  tp.min_leaf = cfg.min_leaf;
  tp.leaf_l2 = cfg.leaf_l2;
  std::vector<double> f(y.size(), b.base_score), resid(y.size());
  std::vector<std::size_t> all(y.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Rng rng(cfg.seed);
  for (int t = 0; t < cfg.n_rounds; ++t) {
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] = y[i] - f[i];
    b.trees.push_back(fit_tree(x, resid, all, tp, rng));
    for (std::size_t i = 0; i < y.size(); ++i) f[i] += b.shrinkage * b.trees.back().predict(x.row(i));
  }
  return b;
}

inline std::vector<double> predict_gbt(const Booster& b, const Matrix& x) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = b.predict(x.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Text serialization
//
//   forest <n_trees>            | gbt <n_trees> <base_score> <shrinkage>
//   tree <n_nodes>
//   <feature> <threshold> <left> <right> <value>     one line per node
//
// Reals are written as C99 hex floats so they round-trip exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string hexfloat(double v) {
  std::ostringstream os;
  os << std::hexfloat << v;
  return os.str();
}

inline double read_hexfloat(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw Error(Errc::BadCheckpoint, "truncated tree file");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || !std::isfinite(v)) throw Error(Errc::BadCheckpoint, "bad real '" + tok + "'");
  return v;
}

inline long read_int(std::istream& in) {
  long v;
  if (!(in >> v)) throw Error(Errc::BadCheckpoint, "truncated tree file");
  return v;
}

inline void write_tree(std::ostream& out, const RegressionTree& t) {
  out << "tree " << t.nodes.size() << '\n';
  for (const auto& n : t.nodes)
    out << n.feature << ' ' << hexfloat(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << hexfloat(n.value)
        << '\n';
}

inline RegressionTree read_tree(std::istream& in) {
  std::string tag;
  if (!(in >> tag) || tag != "tree") throw Error(Errc::BadCheckpoint, "expected 'tree'");
  const long n = read_int(in);
  if (n < 1 || n > (1L << 24)) throw Error(Errc::BadCheckpoint, "tree node count");
  RegressionTree t;
  t.nodes.resize(static_cast<std::size_t>(n));
  for (auto& node : t.nodes) {
    node.feature = static_cast<int>(read_int(in));
    node.threshold = read_hexfloat(in);
    node.left = static_cast<int>(read_int(in));
    node.right = static_cast<int>(read_int(in));
    node.value = read_hexfloat(in);
    if (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || node.left >= n || node.right >= n))
      throw Error(Errc::BadCheckpoint, "tree child index out of range");
  }
  return t;
}

}  // namespace detail

inline void write_forest(std::ostream& out, const Forest& f) {
  out << "forest " << f.trees.size() << '\n';
  for (const auto& t : f.trees) detail::write_tree(out, t);
}

inline Forest read_forest(std::istream& in) {
  std::string tag;
  if (!(in >> tag) || tag != "forest") throw Error(Errc::BadCheckpoint, "expected 'forest'");
  const long n = detail::read_int(in);
  if (n < 1) throw Error(Errc::BadCheckpoint, "forest tree count");
  Forest f;
  for (long i = 0; i < n; ++i) f.trees.push_back(detail::read_tree(in));
  return f;
}

inline void write_booster(std::ostream& out, const Booster& b) {
  out << "gbt " << b.trees.size() << ' ' << detail::hexfloat(b.base_score) << ' ' << detail::hexfloat(b.shrinkage)
      << '\n';
  for (const auto& t : b.trees) detail::write_tree(out, t);
}

inline Booster read_booster(std::istream& in) {
  std::string tag;
  if (!(in >> tag) || tag != "gbt") throw Error(Errc::BadCheckpoint, "expected 'gbt'");
  const long n = detail::read_int(in);
  if (n < 0) throw Error(Errc::BadCheckpoint, "gbt tree count");
  Booster b;
  b.base_score = detail::read_hexfloat(in);
  b.shrinkage = detail::read_hexfloat(in);
  for (long i = 0; i < n; ++i) b.trees.push_back(detail::read_tree(in));
  return b;
}

}  // namespace nanopk
