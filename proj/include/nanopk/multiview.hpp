#pragma once

// Cross-attention multi-view regressor and its plain-MLP sibling.
//
// Keys come from a dense projection of the primary view x, queries and
// values from two projections of the secondary view. The attended tokens
// pass through layer norm, dropout and batch norm; an auxiliary MLP reads
// concat(x, x~). Both branches feed four per-target head MLPs.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nanopk/autodiff.hpp"
#include "nanopk/checkpoint.hpp"
#include "nanopk/dataset.hpp"
#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/metrics.hpp"
#include "nanopk/random.hpp"
#include "nanopk/standardize.hpp"

namespace nanopk {

enum class Architecture { CrossAttention, PlainMlp };
/// Which inputs the network may read.
enum class ViewMode { Both, PrimaryOnly, SecondaryOnly };

inline const char* to_string(Architecture a) { return a == Architecture::CrossAttention ? "cross_attention" : "mlp"; }
inline const char* to_string(ViewMode v) {
  switch (v) {
    case ViewMode::Both: return "both";
    case ViewMode::PrimaryOnly: return "primary";
    case ViewMode::SecondaryOnly: return "secondary";
  }
  return "both";
}
inline const char* to_string(ad::OptimizerKind k) { return k == ad::OptimizerKind::Adam ? "adam" : "sgd"; }

struct MultiviewConfig {
  Architecture arch = Architecture::CrossAttention;
  ViewMode views = ViewMode::Both;
  int hidden_units = 128;
  int aux_mlp_layers = 2;
  int tq = 4;
  int tk = 4;
  double attn_dropout = 0.3;
  double mlp_dropout = 0.2;
  std::array<int, kTargetCount> head_layers = {2, 2, 2, 2};
  double head_l2 = 0.02;
  ad::OptimizerKind optimizer = ad::OptimizerKind::Adam;
  double learning_rate = 1e-3;
  int batch_size = 32;
  int max_epochs = 1000;
  int patience = 50;
  std::uint64_t seed = 0;

  /// Token width shared by queries, keys and values.
  int model_dim() const { return hidden_units / tk; }
  int head_width() const { return std::max(1, hidden_units / 2); }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(Errc::BadConfig, m); };
    if (hidden_units < 1) bad("hidden_units must be positive");
    if (aux_mlp_layers < 1) bad("aux_mlp_layers must be >= 1");
    if (tq < 1 || tk < 1) bad("token counts must be positive");
    if (arch == Architecture::CrossAttention && hidden_units % tk != 0) bad("hidden_units must be a multiple of tk");
    if (!(attn_dropout >= 0.0 && attn_dropout < 1.0) || !(mlp_dropout >= 0.0 && mlp_dropout < 1.0))
      bad("dropout rates must lie in [0,1)");
    for (int h : head_layers)
      if (h < 1) bad("head_layers must be >= 1");
    if (!(head_l2 >= 0.0)) bad("head_l2 must be >= 0");
    if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
    if (batch_size < 2) bad("batch_size must be >= 2");
    if (max_epochs < 1) bad("max_epochs must be >= 1");
    if (patience < 0) bad("patience must be >= 0");
  }

  std::map<std::string, std::string> to_kv() const {
    std::map<std::string, std::string> kv;
    kv["arch"] = to_string(arch);
    kv["views"] = to_string(views);
    kv["hidden_units"] = std::to_string(hidden_units);
    kv["aux_mlp_layers"] = std::to_string(aux_mlp_layers);
    kv["tq"] = std::to_string(tq);
    kv["tk"] = std::to_string(tk);
    kv["attn_dropout"] = detail::format_number(attn_dropout);
    kv["mlp_dropout"] = detail::format_number(mlp_dropout);
    std::string heads;
    for (std::size_t o = 0; o < head_layers.size(); ++o) heads += (o ? "," : "") + std::to_string(head_layers[o]);
    kv["head_layers"] = heads;
    kv["head_l2"] = detail::format_number(head_l2);
    kv["optimizer"] = to_string(optimizer);
    kv["learning_rate"] = detail::format_number(learning_rate);
    kv["batch_size"] = std::to_string(batch_size);
    kv["max_epochs"] = std::to_string(max_epochs);
    kv["patience"] = std::to_string(patience);
    kv["seed"] = std::to_string(seed);
    return kv;
  }

  /// Sets one field from its text form; false when the key is unknown.
  bool set(const std::string& key, const std::string& value) {
    auto num = [&](double& out) {
      auto v = detail::parse_number(value);
      if (!v) throw Error(Errc::BadConfig, key + ": not a number '" + value + "'");
      out = *v;
    };
    auto integer = [&](int& out) {
      double v;
      num(v);
      if (v != std::floor(v) || std::abs(v) > 1e9) throw Error(Errc::BadConfig, key + ": not an integer");
      out = static_cast<int>(v);
    };
    if (key == "arch") {
      if (value == "cross_attention") arch = Architecture::CrossAttention;
      else if (value == "mlp") arch = Architecture::PlainMlp;
      else throw Error(Errc::BadConfig, "arch must be cross_attention or mlp");
    } else if (key == "views") {
      if (value == "both") views = ViewMode::Both;
      else if (value == "primary") views = ViewMode::PrimaryOnly;
      else if (value == "secondary") views = ViewMode::SecondaryOnly;
      else throw Error(Errc::BadConfig, "views must be both, primary or secondary");
    } else if (key == "hidden_units") integer(hidden_units);
    else if (key == "aux_mlp_layers") integer(aux_mlp_layers);
    else if (key == "tq") integer(tq);
    else if (key == "tk") integer(tk);
    else if (key == "attn_dropout") num(attn_dropout);
    else if (key == "mlp_dropout") num(mlp_dropout);
    else if (key == "head_layers") {
      std::stringstream ss(value);
      std::string item;
      std::size_t o = 0;
      while (std::getline(ss, item, ',')) {
        if (o >= head_layers.size()) throw Error(Errc::BadConfig, "head_layers needs four entries");
        auto v = detail::parse_number(item);
        if (!v || *v != std::floor(*v)) throw Error(Errc::BadConfig, "head_layers entry '" + item + "'");
        head_layers[o++] = static_cast<int>(*v);
      }
      if (o != head_layers.size()) throw Error(Errc::BadConfig, "head_layers needs four entries");
    } else if (key == "head_l2") num(head_l2);
    else if (key == "optimizer") {
      if (value == "adam") optimizer = ad::OptimizerKind::Adam;
      else if (value == "sgd") optimizer = ad::OptimizerKind::Sgd;
      else throw Error(Errc::BadConfig, "optimizer must be adam or sgd");
    } else if (key == "learning_rate") num(learning_rate);
    else if (key == "batch_size") integer(batch_size);
    else if (key == "max_epochs") integer(max_epochs);
    else if (key == "patience") integer(patience);
    else if (key == "seed") {
      const auto t = detail::trim(value);
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), seed);
      if (ec != std::errc() || ptr != t.data() + t.size()) throw Error(Errc::BadConfig, "seed: not an integer");
    } else return false;
    return true;
  }
};

inline std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = uniform_real(rng, -limit, limit);
  return w;
}

class MultiviewModel {
 public:
  MultiviewConfig cfg;
  std::size_t primary_width = 0;
  std::size_t secondary_width = 0;
  ad::ParamStore params;
  ad::BatchNormState bn;
  /// Maps network outputs back to target units.
  Standardizer target_scale{std::vector<double>(kTargetCount, 0.0), std::vector<double>(kTargetCount, 1.0)};
  std::uint64_t optimizer_steps = 0;

  /// Network outputs in standardized target units, shape [B, 4].
  ad::Tensor forward(const ad::Tensor& x, const ad::Tensor& xt, ad::Mode mode, Rng* rng,
                     ad::BatchNormState* train_bn = nullptr) const {
    if (x.cols() != primary_width || xt.cols() != secondary_width || x.rows() != xt.rows())
      throw Error(Errc::ShapeMismatch, "multiview inputs " + ad::to_string(x.shape()) + " and " +
                                           ad::to_string(xt.shape()));
    const ad::Tensor& key_src = cfg.views == ViewMode::SecondaryOnly ? xt : x;
    const ad::Tensor& qv_src = cfg.views == ViewMode::PrimaryOnly ? x : xt;
    ad::Tensor aux_in;
    switch (cfg.views) {
      case ViewMode::Both: aux_in = ad::concat_cols({x, xt}); break;
      case ViewMode::PrimaryOnly: aux_in = x; break;
      case ViewMode::SecondaryOnly: aux_in = xt; break;
    }

    ad::Tensor h = aux_in;
    for (int l = 0; l < cfg.aux_mlp_layers; ++l) {
      const std::string p = "aux" + std::to_string(l);
      h = ad::relu(affine(h, p));
      h = ad::dropout(h, cfg.mlp_dropout, mode, rng);
    }
    if (cfg.arch == Architecture::PlainMlp) return affine(h, "out");

    const auto batch = x.rows();
    const auto dm = static_cast<std::size_t>(cfg.model_dim());
    const auto tq = static_cast<std::size_t>(cfg.tq), tk = static_cast<std::size_t>(cfg.tk);
    const ad::Tensor k = affine(key_src, "kproj");
    const ad::Tensor q = affine(qv_src, "qproj");
    const ad::Tensor v = affine(qv_src, "vproj");
    ad::Tensor a = ad::batched_attention(q, k, v, tq, tk);
    a = ad::reshape(ad::layer_norm(ad::reshape(a, {batch * tq, dm}), params.get("ln.gain"), params.get("ln.shift")),
                    {batch, tq * dm});
    a = ad::dropout(a, cfg.attn_dropout, mode, rng);
    if (mode == ad::Mode::Train) {
      if (!train_bn) throw Error(Errc::BadConfig, "train-mode forward needs batch-norm state");
      a = ad::batch_norm(a, params.get("bn.gain"), params.get("bn.shift"), *train_bn, mode);
    } else {
      ad::BatchNormState frozen = bn;
      a = ad::batch_norm(a, params.get("bn.gain"), params.get("bn.shift"), frozen, mode);
    }

    const ad::Tensor joint = ad::concat_cols({a, h});
    std::vector<ad::Tensor> outs;
    for (std::size_t o = 0; o < kTargetCount; ++o) {
      ad::Tensor z = joint;
      const int layers = cfg.head_layers[o];
      for (int l = 0; l < layers; ++l) {
        z = affine(z, "head" + std::to_string(o) + "." + std::to_string(l));
        if (l + 1 < layers) z = ad::relu(z);
      }
      outs.push_back(z);
    }
    return ad::concat_cols(outs);
  }

  /// Eval-mode predictions in target units.
  Matrix predict(const Matrix& x, const Matrix& xt) const {
    const auto out = forward(ad::Tensor::from_matrix(x), ad::Tensor::from_matrix(xt), ad::Mode::Eval, nullptr);
    return target_scale.invert(out.to_matrix());
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ck;
    for (const auto& [k, v] : cfg.to_kv()) ck.set_meta("model." + k, v);
    ck.set_meta("model.primary_width", std::to_string(primary_width));
    ck.set_meta("model.secondary_width", std::to_string(secondary_width));
    ck.set_meta("model.optimizer_steps", std::to_string(optimizer_steps));
    for (const auto& p : params.entries())
      ck.add("param." + p.name, p.value.rows(), p.value.cols(),
             std::vector<double>(p.value.values().begin(), p.value.values().end()));
    if (!bn.running_mean.empty()) {
      ck.add("bn.running_mean", 1, bn.running_mean.size(), bn.running_mean);
      ck.add("bn.running_var", 1, bn.running_var.size(), bn.running_var);
    }
    ck.add("target.mean", 1, kTargetCount, target_scale.means());
    ck.add("target.stddev", 1, kTargetCount, target_scale.stddevs());
    return ck;
  }

 private:
  ad::Tensor affine(const ad::Tensor& in, const std::string& prefix) const {
    return ad::dense(in, params.get(prefix + ".W"), params.get(prefix + ".b"));
  }
};

namespace detail {

inline void add_dense(MultiviewModel& m, const std::string& prefix, int layer, std::size_t in, std::size_t out,
                      bool regularized, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(layer)}));
  m.params.add(prefix + ".W", layer, {in, out}, glorot_uniform(in, out, rng), regularized);
  m.params.add(prefix + ".b", layer, {1, out}, std::vector<double>(out, 0.0), regularized);
}

}  // namespace detail

inline MultiviewModel build_multiview(const MultiviewConfig& cfg, std::size_t primary_width,
                                      std::size_t secondary_width = 16) {
  cfg.validate();
  if (primary_width < 1 || secondary_width < 1) throw Error(Errc::BadConfig, "input widths must be >= 1");
  MultiviewModel m;
  m.cfg = cfg;
  m.primary_width = primary_width;
  m.secondary_width = secondary_width;
  const auto hidden = static_cast<std::size_t>(cfg.hidden_units);
  int layer = 0;

  std::size_t aux_in = primary_width + secondary_width;
  if (cfg.views == ViewMode::PrimaryOnly) aux_in = primary_width;
  if (cfg.views == ViewMode::SecondaryOnly) aux_in = secondary_width;
  for (int l = 0; l < cfg.aux_mlp_layers; ++l) {
    detail::add_dense(m, "aux" + std::to_string(l), ++layer, l == 0 ? aux_in : hidden, hidden, false, cfg.seed);
  }
  if (cfg.arch == Architecture::PlainMlp) {
    detail::add_dense(m, "out", ++layer, hidden, kTargetCount, true, cfg.seed);
    return m;
  }

  const auto dm = static_cast<std::size_t>(cfg.model_dim());
  const auto tq = static_cast<std::size_t>(cfg.tq), tk = static_cast<std::size_t>(cfg.tk);
  const std::size_t key_in = cfg.views == ViewMode::SecondaryOnly ? secondary_width : primary_width;
  const std::size_t qv_in = cfg.views == ViewMode::PrimaryOnly ? primary_width : secondary_width;
  detail::add_dense(m, "kproj", ++layer, key_in, tk * dm, false, cfg.seed);
  detail::add_dense(m, "qproj", ++layer, qv_in, tq * dm, false, cfg.seed);
  detail::add_dense(m, "vproj", ++layer, qv_in, tk * dm, false, cfg.seed);
  ++layer;
  m.params.add("ln.gain", layer, {1, dm}, std::vector<double>(dm, 1.0));
  m.params.add("ln.shift", layer, {1, dm}, std::vector<double>(dm, 0.0));
  ++layer;
  m.params.add("bn.gain", layer, {1, tq * dm}, std::vector<double>(tq * dm, 1.0));
  m.params.add("bn.shift", layer, {1, tq * dm}, std::vector<double>(tq * dm, 0.0));
  m.bn = ad::BatchNormState::init(tq * dm);

  const std::size_t joint = tq * dm + hidden;
  const auto hw = static_cast<std::size_t>(cfg.head_width());
  for (std::size_t o = 0; o < kTargetCount; ++o) {
    const int layers = cfg.head_layers[o];
    for (int l = 0; l < layers; ++l) {
      const std::size_t in = l == 0 ? joint : hw;
      const std::size_t out = l + 1 == layers ? 1 : hw;
      detail::add_dense(m, "head" + std::to_string(o) + "." + std::to_string(l), ++layer, in, out, true, cfg.seed);
    }
  }
  return m;
}

inline Matrix predict_multiview(const MultiviewModel& model, const Matrix& x, const Matrix& xt) {
  return model.predict(x, xt);
}

inline MultiviewModel model_from_checkpoint(const Checkpoint& ck) {
  MultiviewConfig cfg;
  for (const auto& [k, v] : ck.meta)
    if (k.rfind("model.", 0) == 0) cfg.set(k.substr(6), v);
  auto width = [&](const std::string& key) {
    auto v = detail::parse_number(ck.meta_value(key));
    if (!v || *v < 1 || *v != std::floor(*v)) throw Error(Errc::BadCheckpoint, "bad " + key);
    return static_cast<std::size_t>(*v);
  };
  MultiviewModel m;
  try {
    m = build_multiview(cfg, width("model.primary_width"), width("model.secondary_width"));
  } catch (const Error& e) {
    throw Error(Errc::BadCheckpoint, std::string("model description: ") + e.what());
  }
  for (auto& p : m.params.entries()) {
    const auto& t = ck.tensor("param." + p.name);
    if (t.rows != p.value.rows() || t.cols != p.value.cols())
      throw Error(Errc::BadCheckpoint, "shape mismatch for " + p.name);
    std::copy(t.values.begin(), t.values.end(), p.value.mutable_values().begin());
  }
  if (m.cfg.arch == Architecture::CrossAttention) {
    const auto& rm = ck.tensor("bn.running_mean");
    const auto& rv = ck.tensor("bn.running_var");
    if (rm.values.size() != m.bn.running_mean.size() || rv.values.size() != m.bn.running_var.size())
      throw Error(Errc::BadCheckpoint, "batch-norm state size");
    m.bn.running_mean = rm.values;
    m.bn.running_var = rv.values;
  }
  const auto& tm = ck.tensor("target.mean");
  const auto& ts = ck.tensor("target.stddev");
  if (tm.values.size() != kTargetCount || ts.values.size() != kTargetCount)
    throw Error(Errc::BadCheckpoint, "target scale size");
  m.target_scale = Standardizer(tm.values, ts.values);
  if (ck.has_meta("model.optimizer_steps")) {
    const auto steps = detail::parse_number(ck.meta_value("model.optimizer_steps"));
    if (!steps || *steps < 0) throw Error(Errc::BadCheckpoint, "bad optimizer step count");
    m.optimizer_steps = static_cast<std::uint64_t>(*steps);
  }
  for (const auto& p : m.params.entries())
    for (double v : p.value.values())
      if (!std::isfinite(v)) throw Error(Errc::BadCheckpoint, "non-finite parameter in " + p.name);
  return m;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Prepared inputs: encoded primary view, standardized secondary view and
/// targets in physical units.
struct ViewData {
  Matrix x;
  Matrix xt;
  Matrix y;
  std::size_t size() const { return x.rows(); }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_rmse;  // mean over outputs, standardized target units
  std::size_t best_epoch = 0;    // 1-based
  double best_val_rmse = std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;
  bool stopped_early = false;
};

/// Mean over outputs of the per-output RMSE after scaling both sides by the
/// model's target standardizer.
inline double scaled_mean_rmse(const Matrix& y, const Matrix& yhat, const Standardizer& scale) {
  double total = 0.0;
  for (std::size_t o = 0; o < y.cols(); ++o) {
    std::vector<double> a(y.rows()), b(y.rows());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      a[i] = scale.apply(o, y(i, o));
      b[i] = scale.apply(o, yhat(i, o));
    }
    total += rmse(a, b);
  }
  return total / static_cast<double>(y.cols());
}

namespace detail {

/// Batches of a shuffled order; a trailing single row joins the previous batch.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_bounds(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch) out.emplace_back(s, std::min(n, s + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

inline Matrix gather(const Matrix& m, std::span<const std::size_t> idx, std::size_t begin, std::size_t end) {
  return m.select_rows(idx.subspan(begin, end - begin));
}

}  // namespace detail

/// Minimises batch MSE plus the head L2 term with early stopping on the
/// validation set; leaves the model at its best-validation parameters.
inline TrainHistory train_dnn(MultiviewModel& model, const ViewData& train, const ViewData& val) {
  const auto& cfg = model.cfg;
  if (model.optimizer_steps != 0) throw Error(Errc::BadConfig, "train_dnn requires a freshly built model");
  if (train.size() < 2) throw Error(Errc::BatchTooSmall, "training set needs at least 2 rows");
  if (val.size() == 0) throw Error(Errc::EmptyValidation, "early stopping needs validation rows");
  if (train.y.cols() != kTargetCount || val.y.cols() != kTargetCount)
    throw Error(Errc::ShapeMismatch, "targets must have four columns");

  model.target_scale = Standardizer::fit(train.y);
  const Matrix y_train = model.target_scale.apply(train.y);

  ad::OptimizerState opt;
  opt.kind = cfg.optimizer;
  opt.learning_rate = cfg.learning_rate;
  Rng shuffle_rng(derive_seed(cfg.seed, {0x5348}));
  Rng dropout_rng(derive_seed(cfg.seed, {0x4450}));

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto bounds = detail::batch_bounds(order.size(), static_cast<std::size_t>(cfg.batch_size));

  TrainHistory hist;
  auto best_params = model.params.snapshot();
  auto best_bn = model.bn;
  std::size_t since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), shuffle_rng);
    double loss_sum = 0.0;
    for (auto [b0, b1] : bounds) {
      const auto xb = ad::Tensor::from_matrix(detail::gather(train.x, order, b0, b1));
      const auto xtb = ad::Tensor::from_matrix(detail::gather(train.xt, order, b0, b1));
      const auto yb = ad::Tensor::from_matrix(detail::gather(y_train, order, b0, b1));
      model.params.zero_grad();
      double loss_value = 0.0;
      try {
        const auto pred = model.forward(xb, xtb, ad::Mode::Train, &dropout_rng, &model.bn);
        auto loss = ad::mse_loss(pred, yb);
        if (cfg.head_l2 > 0.0)
          loss = ad::add(loss, ad::l2_penalty(model.params, cfg.head_l2,
                                              [](const ad::Parameter& p) { return p.regularized; }));
        loss_value = loss.item();
        ad::backward(loss);
        ad::optimizer_step(opt, model.params);
        ++model.optimizer_steps;
        for (const auto& p : model.params.entries())
          for (double v : p.value.values())
            if (!std::isfinite(v)) throw Error(Errc::NonFinite, "parameter " + p.name);
      } catch (const Error& e) {
        if (e.code() == Errc::NonFinite) throw Error(Errc::NonFiniteLoss, "training diverged: " + std::string(e.what()));
        throw;
      }
      loss_sum += loss_value * static_cast<double>(b1 - b0);
    }
    hist.train_loss.push_back(loss_sum / static_cast<double>(train.size()));

    double v;
    try {
      v = scaled_mean_rmse(val.y, model.predict(val.x, val.xt), model.target_scale);
    } catch (const Error& e) {
      if (e.code() == Errc::NonFinite) throw Error(Errc::NonFiniteLoss, "validation diverged: " + std::string(e.what()));
      throw;
    }
    hist.val_rmse.push_back(v);
    hist.epochs_run = static_cast<std::size_t>(epoch);
    if (v < hist.best_val_rmse) {
      hist.best_val_rmse = v;
      hist.best_epoch = static_cast<std::size_t>(epoch);
      best_params = model.params.snapshot();
      best_bn = model.bn;
      since_best = 0;
    } else if (++since_best > static_cast<std::size_t>(cfg.patience)) {
      hist.stopped_early = true;
      break;
    }
  }
  model.params.restore(best_params);
  model.bn = best_bn;
  return hist;
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

struct SearchSpace {
  int hidden_min = 64, hidden_max = 256;
  int aux_min = 1, aux_max = 3;
  double attn_dropout_min = 0.2, attn_dropout_max = 0.4;
  double mlp_dropout_min = 0.1, mlp_dropout_max = 0.3;
  std::array<int, kTargetCount> head_max = {3, 3, 3, 5};
  std::vector<double> learning_rates = {1e-3, 5e-4, 1e-4};
  std::vector<ad::OptimizerKind> optimizers = {ad::OptimizerKind::Adam, ad::OptimizerKind::Sgd};

  /// Draws one configuration; fields outside the space come from `base`.
  MultiviewConfig sample(const MultiviewConfig& base, Rng& rng) const {
    if (learning_rates.empty() || optimizers.empty()) throw Error(Errc::BadConfig, "empty search space");
    MultiviewConfig c = base;
    const int step = base.arch == Architecture::CrossAttention ? base.tk : 1;
    const int lo = (hidden_min + step - 1) / step, hi = hidden_max / step;
    if (lo > hi) throw Error(Errc::BadConfig, "hidden unit range holds no multiple of tk");
    c.hidden_units = static_cast<int>(uniform_int(rng, lo, hi)) * step;
    c.aux_mlp_layers = static_cast<int>(uniform_int(rng, aux_min, aux_max));
    c.attn_dropout = uniform_real(rng, attn_dropout_min, attn_dropout_max);
    c.mlp_dropout = uniform_real(rng, mlp_dropout_min, mlp_dropout_max);
    for (std::size_t o = 0; o < kTargetCount; ++o) c.head_layers[o] = static_cast<int>(uniform_int(rng, 1, head_max[o]));
    c.learning_rate = learning_rates[uniform_index(rng, learning_rates.size())];
    c.optimizer = optimizers[uniform_index(rng, optimizers.size())];
    return c;
  }
};

struct SearchTrial {
  MultiviewConfig cfg;
  double val_rmse = 0.0;
  TrainHistory history;
};

struct SearchResult {
  MultiviewModel best;
  std::size_t best_trial = 0;
  std::vector<SearchTrial> trials;
};

/// Trains `budget` sampled configurations; keeps the lowest validation
/// RMSE, the earliest trial winning ties.
inline SearchResult hyperparameter_search(const SearchSpace& space, const MultiviewConfig& base, int budget,
                                          std::uint64_t seed, const ViewData& train, const ViewData& val) {
  if (budget < 1) throw Error(Errc::BadConfig, "search budget must be >= 1");
  Rng rng(derive_seed(seed, {0x5345, 0x4152}));
  SearchResult res;
  bool have_best = false;
  for (int t = 0; t < budget; ++t) {
    MultiviewConfig c = space.sample(base, rng);
    c.seed = derive_seed(seed, {static_cast<std::uint64_t>(t)});
    MultiviewModel m = build_multiview(c, train.x.cols(), train.xt.cols());
    TrainHistory h = train_dnn(m, train, val);
    res.trials.push_back({c, h.best_val_rmse, h});
    if (!have_best || h.best_val_rmse < res.trials[res.best_trial].val_rmse) {
      res.best = std::move(m);
      res.best_trial = static_cast<std::size_t>(t);
      have_best = true;
    }
  }
  return res;
}

}  // namespace nanopk
