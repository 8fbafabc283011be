#pragma once

// Minimal reverse-mode differentiation over 2-D tensors.
//
// A Tensor is a shared handle to a graph node. Operations allocate a new node
// holding its value and a closure that pushes the node's gradient into its
// parents. backward() walks the graph in reverse topological order from a
// scalar. Parameters are long-lived leaves; their gradients accumulate until
// zero_grad(). Every op output is checked for NaN/Inf.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/random.hpp"

namespace nanopk::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "," + std::to_string(s.cols) + "]";
}

namespace detail {

// Aligned so vectorised kernels sum in the same order wherever the heap put the buffer.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  double* grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (values.size() != shape.size())
      throw Error(Errc::ShapeMismatch, "tensor buffer does not match " + to_string(shape));
    for (double v : values)
      if (!std::isfinite(v)) throw Error(Errc::NonFinite, "tensor initialised with non-finite value");
    auto n = std::make_shared<detail::Node>();
    n->shape = shape;
    n->value.assign(values.begin(), values.end());
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from(shape, std::vector<double>(shape.size(), 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({1, 1}, {v}, requires_grad); }

  static Tensor from_matrix(const Matrix& m, bool requires_grad = false) {
    return from({m.rows(), m.cols()}, m.data(), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; intended for parameters and optimizers.
  std::span<double> mutable_values() { return node_->value; }
  double operator()(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw Error(Errc::ShapeMismatch, "item() on " + to_string(shape()));
    return node_->value[0];
  }

  /// Gradient buffer; all zeros when nothing has flowed in yet.
  std::span<const double> grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->value.size(), 0.0);
    return node_->grad;
  }
  std::span<double> mutable_grad() { return {node_->grad_buffer(), node_->value.size()}; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  Matrix to_matrix() const { return Matrix(rows(), cols(), std::vector<double>(node_->value.begin(), node_->value.end())); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  friend Tensor make_op(Shape, detail::Buffer, std::vector<Tensor>, const char*,
                        std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an op node; the closure is kept only when some parent needs grads.
inline Tensor make_op(Shape shape, detail::Buffer value, std::vector<Tensor> parents, const char* op,
                      std::function<void(detail::Node&)> backward) {
  for (double v : value)
    if (!std::isfinite(v)) throw Error(Errc::NonFinite, std::string("non-finite output from ") + op);
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->value = std::move(value);
  n->op = op;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

namespace detail {

inline bool wants(const std::shared_ptr<Node>& p) { return p->requires_grad; }

inline ConstMap cmap(const Buffer& v, Shape s) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}
inline MutMap mmap(double* p, Shape s) {
  return MutMap(p, static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.cols));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementary ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw Error(Errc::ShapeMismatch, "matmul " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const Shape out{a.rows(), b.cols()};
  detail::Buffer v(out.size());
  detail::mmap(v.data(), out).noalias() = detail::cmap(a.node()->value, a.shape()) * detail::cmap(b.node()->value, b.shape());
  return make_op(out, std::move(v), {a, b}, "matmul", [](detail::Node& self) {
    auto& A = self.parents[0];
    auto& B = self.parents[1];
    const auto dC = detail::cmap(self.grad, self.shape);
    if (detail::wants(A))
      detail::mmap(A->grad_buffer(), A->shape).noalias() += dC * detail::cmap(B->value, B->shape).transpose();
    if (detail::wants(B))
      detail::mmap(B->grad_buffer(), B->shape).noalias() += detail::cmap(A->value, A->shape).transpose() * dC;
  });
}

/// Affine map x W + b with b broadcast over rows.
inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows() || b.size() != w.cols())
    throw Error(Errc::ShapeMismatch, "dense " + to_string(x.shape()) + " x " + to_string(w.shape()) + " + " +
                                         to_string(b.shape()));
  const Shape out{x.rows(), w.cols()};
  detail::Buffer v(out.size());
  auto y = detail::mmap(v.data(), out);
  y.noalias() = detail::cmap(x.node()->value, x.shape()) * detail::cmap(w.node()->value, w.shape());
  const auto bias = detail::cmap(b.node()->value, {1, out.cols});
  y.rowwise() += bias.row(0);
  return make_op(out, std::move(v), {x, w, b}, "dense", [](detail::Node& self) {
    auto& X = self.parents[0];
    auto& W = self.parents[1];
    auto& B = self.parents[2];
    const auto dY = detail::cmap(self.grad, self.shape);
    if (detail::wants(X))
      detail::mmap(X->grad_buffer(), X->shape).noalias() += dY * detail::cmap(W->value, W->shape).transpose();
    if (detail::wants(W))
      detail::mmap(W->grad_buffer(), W->shape).noalias() += detail::cmap(X->value, X->shape).transpose() * dY;
    if (detail::wants(B)) detail::mmap(B->grad_buffer(), {1, self.shape.cols}).row(0) += dY.colwise().sum();
  });
}

inline Tensor relu(const Tensor& x) {
  detail::Buffer v(x.values().begin(), x.values().end());
  for (double& e : v) e = e > 0.0 ? e : 0.0;
  return make_op(x.shape(), std::move(v), {x}, "relu", [](detail::Node& self) {
    auto& X = self.parents[0];
    double* g = X->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (X->value[i] > 0.0) g[i] += self.grad[i];
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) throw Error(Errc::ShapeMismatch, "add " + to_string(a.shape()) + " + " + to_string(b.shape()));
  detail::Buffer v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return make_op(a.shape(), std::move(v), {a, b}, "add", [](detail::Node& self) {
    for (auto& p : self.parents) {
      if (!detail::wants(p)) continue;
      double* g = p->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  detail::Buffer v(a.values().begin(), a.values().end());
  for (double& e : v) e *= c;
  return make_op(a.shape(), std::move(v), {a}, "scale", [c](detail::Node& self) {
    double* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += c * self.grad[i];
  });
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double e : a.values()) s += e;
  return make_op({1, 1}, {s}, {a}, "sum", [](detail::Node& self) {
    double* g = self.parents[0]->grad_buffer();
    const double up = self.grad[0];
    for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += up;
  });
}

/// Sum of one column, as a scalar.
inline Tensor column_sum(const Tensor& a, std::size_t col) {
  if (col >= a.cols()) throw Error(Errc::ShapeMismatch, "column_sum index");
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) s += a(r, col);
  return make_op({1, 1}, {s}, {a}, "column_sum", [col](detail::Node& self) {
    auto& A = self.parents[0];
    double* g = A->grad_buffer();
    for (std::size_t r = 0; r < A->shape.rows; ++r) g[r * A->shape.cols + col] += self.grad[0];
  });
}

inline Tensor sum_squares(const Tensor& a) {
  double s = 0.0;
  for (double e : a.values()) s += e * e;
  return make_op({1, 1}, {s}, {a}, "sum_squares", [](detail::Node& self) {
    auto& A = self.parents[0];
    double* g = A->grad_buffer();
    const double up = 2.0 * self.grad[0];
    for (std::size_t i = 0; i < A->value.size(); ++i) g[i] += up * A->value[i];
  });
}

/// Mean over rows of the per-row squared error summed across columns.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (!(pred.shape() == target.shape()))
    throw Error(Errc::ShapeMismatch, "mse_loss " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  if (pred.rows() == 0) throw Error(Errc::ShapeMismatch, "mse_loss on empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    s += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(pred.rows());
  return make_op({1, 1}, {s * inv_n}, {pred, target}, "mse_loss", [inv_n](detail::Node& self) {
    auto& P = self.parents[0];
    auto& T = self.parents[1];
    const double up = 2.0 * inv_n * self.grad[0];
    for (std::size_t i = 0; i < P->value.size(); ++i) {
      const double d = P->value[i] - T->value[i];
      if (detail::wants(P)) P->grad_buffer()[i] += up * d;
      if (detail::wants(T)) T->grad_buffer()[i] -= up * d;
    }
  });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape.size() != a.size())
    throw Error(Errc::ShapeMismatch, "reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  detail::Buffer v(a.values().begin(), a.values().end());
  return make_op(shape, std::move(v), {a}, "reshape", [](detail::Node& self) {
    double* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat of nothing");
  const std::size_t n = parts[0].rows();
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw Error(Errc::ShapeMismatch, "concat_cols row mismatch");
    width += p.cols();
  }
  detail::Buffer v(n * width);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(p.values().data() + r * p.cols(), p.cols(), v.data() + r * width + off);
    off += p.cols();
  }
  return make_op({n, width}, std::move(v), parts, "concat_cols", [](detail::Node& self) {
    std::size_t o = 0;
    const std::size_t w = self.shape.cols;
    for (auto& p : self.parents) {
      const std::size_t pc = p->shape.cols;
      if (detail::wants(p)) {
        double* g = p->grad_buffer();
        for (std::size_t r = 0; r < self.shape.rows; ++r)
          for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += self.grad[r * w + o + c];
      }
      o += pc;
    }
  });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Row-wise softmax of Q K^T / sqrt(dk) for one sample.
/// q: [tq*dk], k: [tk*dk] (row-major token blocks); out: [tq*tk].
inline void attention_weights(const double* q, const double* k, std::size_t tq, std::size_t tk, std::size_t dk,
                              double* out) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  for (std::size_t i = 0; i < tq; ++i) {
    double* row = out + i * tk;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < tk; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q[i * dk + c] * k[j * dk + c];
      row[j] = s * inv_sqrt;
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < tk; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < tk; ++j) row[j] /= z;
  }
}

/// Scaled dot-product attention applied per row of a batch. Each row of
/// `q` holds tq tokens of width dk, each row of `k` tk tokens of width dk
/// and each row of `v` tk tokens of width dv. Output rows hold tq tokens of
/// width dv. When `weights_out` is given it receives the [B*tq, tk] weights.
inline Tensor batched_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t tq, std::size_t tk,
                                std::vector<double>* weights_out = nullptr) {
  const std::size_t batch = q.rows();
  if (tq == 0 || tk == 0 || q.cols() % tq != 0 || k.cols() % tk != 0 || v.cols() % tk != 0)
    throw Error(Errc::ShapeMismatch, "attention token counts do not divide widths");
  const std::size_t dk = q.cols() / tq;
  const std::size_t dv = v.cols() / tk;
  if (k.cols() / tk != dk || k.rows() != batch || v.rows() != batch)
    throw Error(Errc::ShapeMismatch, "attention operand shapes " + to_string(q.shape()) + " " + to_string(k.shape()) +
                                         " " + to_string(v.shape()));
  std::vector<double> weights(batch * tq * tk);
  detail::Buffer out(batch * tq * dv, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    double* a = weights.data() + b * tq * tk;
    attention_weights(q.values().data() + b * q.cols(), k.values().data() + b * k.cols(), tq, tk, dk, a);
    const double* vb = v.values().data() + b * v.cols();
    double* ob = out.data() + b * tq * dv;
    for (std::size_t i = 0; i < tq; ++i)
      for (std::size_t j = 0; j < tk; ++j) {
        const double w = a[i * tk + j];
        for (std::size_t c = 0; c < dv; ++c) ob[i * dv + c] += w * vb[j * dv + c];
      }
  }
  if (weights_out) *weights_out = weights;
  return make_op({batch, tq * dv}, std::move(out), {q, k, v}, "attention",
                 [weights = std::move(weights), tq, tk, dk, dv](detail::Node& self) {
                   auto& Q = self.parents[0];
                   auto& K = self.parents[1];
                   auto& V = self.parents[2];
                   const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
                   std::vector<double> dA(tq * tk), dS(tq * tk);
                   for (std::size_t b = 0; b < self.shape.rows; ++b) {
                     const double* a = weights.data() + b * tq * tk;
                     const double* dO = self.grad.data() + b * tq * dv;
                     const double* vb = V->value.data() + b * tk * dv;
                     const double* qb = Q->value.data() + b * tq * dk;
                     const double* kb = K->value.data() + b * tk * dk;
                     for (std::size_t i = 0; i < tq; ++i)
                       for (std::size_t j = 0; j < tk; ++j) {
                         double s = 0.0;
                         for (std::size_t c = 0; c < dv; ++c) s += dO[i * dv + c] * vb[j * dv + c];
                         dA[i * tk + j] = s;
                       }
                     if (detail::wants(V)) {
                       double* gv = V->grad_buffer() + b * tk * dv;
                       for (std::size_t i = 0; i < tq; ++i)
                         for (std::size_t j = 0; j < tk; ++j)
                           for (std::size_t c = 0; c < dv; ++c) gv[j * dv + c] += a[i * tk + j] * dO[i * dv + c];
                     }
                     for (std::size_t i = 0; i < tq; ++i) {
                       double dot = 0.0;
                       for (std::size_t j = 0; j < tk; ++j) dot += dA[i * tk + j] * a[i * tk + j];
                       for (std::size_t j = 0; j < tk; ++j)
                         dS[i * tk + j] = a[i * tk + j] * (dA[i * tk + j] - dot) * inv_sqrt;
                     }
                     if (detail::wants(Q)) {
                       double* gq = Q->grad_buffer() + b * tq * dk;
                       for (std::size_t i = 0; i < tq; ++i)
                         for (std::size_t j = 0; j < tk; ++j)
                           for (std::size_t c = 0; c < dk; ++c) gq[i * dk + c] += dS[i * tk + j] * kb[j * dk + c];
                     }
                     if (detail::wants(K)) {
                       double* gk = K->grad_buffer() + b * tk * dk;
                       for (std::size_t i = 0; i < tq; ++i)
                         for (std::size_t j = 0; j < tk; ++j)
                           for (std::size_t c = 0; c < dk; ++c) gk[j * dk + c] += dS[i * tk + j] * qb[i * dk + c];
                     }
                   }
                 });
}

/// softmax(Q K^T / sqrt(dk)) V for a single token sequence.
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   std::vector<double>* weights_out = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows())
    throw Error(Errc::ShapeMismatch, "attention " + to_string(q.shape()) + " " + to_string(k.shape()) + " " +
                                         to_string(v.shape()));
  const std::size_t tq = q.rows(), tk = k.rows(), dv = v.cols();
  auto out = batched_attention(reshape(q, {1, q.size()}), reshape(k, {1, k.size()}), reshape(v, {1, v.size()}), tq,
                               tk, weights_out);
  return reshape(out, {tq, dv});
}

// ---------------------------------------------------------------------------
// Normalisation and regularisation layers
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

/// Per-row standardisation followed by an elementwise affine map.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5) {
  const std::size_t n = x.rows(), p = x.cols();
  if (p == 0 || gain.size() != p || shift.size() != p) throw Error(Errc::ShapeMismatch, "layer_norm widths");
  std::vector<double> xhat(n * p), inv_sd(n);
  detail::Buffer out(n * p);
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.values().data() + r * p;
    double mean = 0.0;
    for (std::size_t c = 0; c < p; ++c) mean += xr[c];
    mean /= static_cast<double>(p);
    double var = 0.0;
    for (std::size_t c = 0; c < p; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(p);
    inv_sd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < p; ++c) {
      xhat[r * p + c] = (xr[c] - mean) * inv_sd[r];
      out[r * p + c] = gain.values()[c] * xhat[r * p + c] + shift.values()[c];
    }
  }
  return make_op(x.shape(), std::move(out), {x, gain, shift}, "layer_norm",
                 [xhat = std::move(xhat), inv_sd = std::move(inv_sd), n, p](detail::Node& self) {
                   auto& X = self.parents[0];
                   auto& G = self.parents[1];
                   auto& S = self.parents[2];
                   std::vector<double> g(p);
                   for (std::size_t r = 0; r < n; ++r) {
                     const double* dy = self.grad.data() + r * p;
                     const double* xh = xhat.data() + r * p;
                     if (detail::wants(G)) {
                       double* gg = G->grad_buffer();
                       for (std::size_t c = 0; c < p; ++c) gg[c] += dy[c] * xh[c];
                     }
                     if (detail::wants(S)) {
                       double* gs = S->grad_buffer();
                       for (std::size_t c = 0; c < p; ++c) gs[c] += dy[c];
                     }
                     if (detail::wants(X)) {
                       double mg = 0.0, mgx = 0.0;
                       for (std::size_t c = 0; c < p; ++c) {
                         g[c] = dy[c] * G->value[c];
                         mg += g[c];
                         mgx += g[c] * xh[c];
                       }
                       mg /= static_cast<double>(p);
                       mgx /= static_cast<double>(p);
                       double* gx = X->grad_buffer() + r * p;
                       for (std::size_t c = 0; c < p; ++c) gx[c] += inv_sd[r] * (g[c] - mg - xh[c] * mgx);
                     }
                   }
                 });
}

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNormState init(std::size_t width, double momentum = 0.1, double eps = 1e-5) {
    return {std::vector<double>(width, 0.0), std::vector<double>(width, 1.0), momentum, eps};
  }
};

/// Column-wise batch normalisation. Train mode normalises by the batch's
/// biased variance and folds the batch mean and unbiased variance into the
/// running statistics with `state.momentum`; eval mode uses the running
/// statistics only.
inline Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, BatchNormState& state, Mode mode) {
  const std::size_t n = x.rows(), p = x.cols();
  if (gain.size() != p || shift.size() != p || state.running_mean.size() != p)
    throw Error(Errc::ShapeMismatch, "batch_norm widths");
  detail::Buffer out(n * p);
  std::vector<double> xhat(n * p), inv_sd(p);
  const double* xv = x.values().data();
  if (mode == Mode::Eval) {
    for (std::size_t c = 0; c < p; ++c) inv_sd[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < p; ++c) {
        xhat[r * p + c] = (xv[r * p + c] - state.running_mean[c]) * inv_sd[c];
        out[r * p + c] = gain.values()[c] * xhat[r * p + c] + shift.values()[c];
      }
  } else {
    if (n < 2) throw Error(Errc::BatchTooSmall, "batch_norm training needs at least 2 rows");
    for (std::size_t c = 0; c < p; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < n; ++r) mean += xv[r * p + c];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t r = 0; r < n; ++r) var += (xv[r * p + c] - mean) * (xv[r * p + c] - mean);
      var /= static_cast<double>(n);
      inv_sd[c] = 1.0 / std::sqrt(var + state.eps);
      for (std::size_t r = 0; r < n; ++r) {
        xhat[r * p + c] = (xv[r * p + c] - mean) * inv_sd[c];
        out[r * p + c] = gain.values()[c] * xhat[r * p + c] + shift.values()[c];
      }
      const double unbiased = var * static_cast<double>(n) / static_cast<double>(n - 1);
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  }
  const bool train = mode == Mode::Train;
  return make_op(x.shape(), std::move(out), {x, gain, shift}, "batch_norm",
                 [xhat = std::move(xhat), inv_sd = std::move(inv_sd), n, p, train](detail::Node& self) {
                   auto& X = self.parents[0];
                   auto& G = self.parents[1];
                   auto& S = self.parents[2];
                   const double* dy = self.grad.data();
                   for (std::size_t c = 0; c < p; ++c) {
                     double sdy = 0.0, sdyx = 0.0;
                     for (std::size_t r = 0; r < n; ++r) {
                       sdy += dy[r * p + c];
                       sdyx += dy[r * p + c] * xhat[r * p + c];
                     }
                     if (detail::wants(G)) G->grad_buffer()[c] += sdyx;
                     if (detail::wants(S)) S->grad_buffer()[c] += sdy;
                     if (!detail::wants(X)) continue;
                     double* gx = X->grad_buffer();
                     const double gamma = G->value[c];
                     if (train) {
                       const double mg = gamma * sdy / static_cast<double>(n);
                       const double mgx = gamma * sdyx / static_cast<double>(n);
                       for (std::size_t r = 0; r < n; ++r)
                         gx[r * p + c] += inv_sd[c] * (gamma * dy[r * p + c] - mg - xhat[r * p + c] * mgx);
                     } else {
                       for (std::size_t r = 0; r < n; ++r) gx[r * p + c] += inv_sd[c] * gamma * dy[r * p + c];
                     }
                   }
                 });
}

/// Inverted dropout: train mode zeroes each element with probability `rate`
/// and rescales survivors by 1/(1-rate); eval mode is the identity.
inline Tensor dropout(const Tensor& x, double rate, Mode mode, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::BadRate, "dropout rate must lie in [0,1)");
  if (mode == Mode::Eval || rate == 0.0) return x;
  if (!rng) throw Error(Errc::BadConfig, "train-mode dropout needs a random stream");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  detail::Buffer out(x.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform01(*rng) < rate ? 0.0 : keep_scale;
    out[i] = x.values()[i] * mask[i];
  }
  return make_op(x.shape(), std::move(out), {x}, "dropout", [mask = std::move(mask)](detail::Node& self) {
    double* g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] += mask[i] * self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

struct Parameter {
  std::string name;
  int layer = 0;
  bool regularized = false;
  Tensor value;
};

/// Named trainable leaves grouped by layer index.
class ParamStore {
 public:
  Tensor add(std::string name, int layer, Shape shape, std::vector<double> init, bool regularized = false) {
    if (index_.count(name)) throw Error(Errc::BadConfig, "duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), layer, regularized, Tensor::from(shape, std::move(init), true)});
    return params_.back().value;
  }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(Errc::BadConfig, "no parameter named " + name);
    return params_[it->second].value;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Parameter>& entries() { return params_; }
  const std::vector<Parameter>& entries() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> s;
    s.reserve(params_.size());
    for (const auto& p : params_) s.emplace_back(p.value.values().begin(), p.value.values().end());
    return s;
  }

  void restore(const std::vector<std::vector<double>>& s) {
    if (s.size() != params_.size()) throw Error(Errc::ShapeMismatch, "snapshot parameter count");
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto dst = params_[i].value.mutable_values();
      if (s[i].size() != dst.size()) throw Error(Errc::ShapeMismatch, "snapshot size for " + params_[i].name);
      std::copy(s[i].begin(), s[i].end(), dst.begin());
    }
  }

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// lambda * sum of squared entries over the selected parameters.
inline Tensor l2_penalty(const ParamStore& params, double lambda,
                         const std::function<bool(const Parameter&)>& include = {}) {
  if (!(lambda >= 0.0)) throw Error(Errc::BadConfig, "l2 rate must be non-negative");
  std::vector<Tensor> terms;
  if (lambda > 0.0)
    for (const auto& p : params.entries())
      if (!include || include(p)) terms.push_back(sum_squares(p.value));
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, lambda);
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw Error(Errc::ShapeMismatch, "backward needs a scalar, got " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative DFS post-order; a grey node seen again means a cycle.
  std::vector<detail::Node*> order;
  std::unordered_map<detail::Node*, char> colour;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
  colour[loss.node().get()] = 1;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (!p->requires_grad) continue;
      auto it = colour.find(p);
      if (it == colour.end()) {
        colour[p] = 1;
        stack.emplace_back(p, 0);
      } else if (it->second == 1) {
        throw Error(Errc::GraphCycle, "computation graph contains a cycle");
      }
    } else {
      colour[node] = 2;
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One update from the gradients currently held by `params`.
inline void optimizer_step(OptimizerState& state, ParamStore& params) {
  auto& entries = params.entries();
  if (state.kind == OptimizerKind::Adam && state.m.empty()) {
    for (const auto& p : entries) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.kind == OptimizerKind::Adam && state.m.size() != entries.size())
    throw Error(Errc::ShapeMismatch, "optimizer state does not match parameter store");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& t = entries[i].value;
    if (!t.has_grad() && state.kind == OptimizerKind::Sgd) continue;
    auto theta = t.mutable_values();
    const auto g = t.grad();
    if (state.kind == OptimizerKind::Sgd) {
      for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= state.learning_rate * g[j];
      continue;
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != theta.size()) throw Error(Errc::ShapeMismatch, "optimizer moment size for " + entries[i].name);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double eps = 1e-6;
  std::size_t samples = 256;  // parameter entries probed; all when larger than the store
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// at sampled parameter entries. `grad_hook` may alter the analytic
/// gradients before comparison.
inline GradCheckResult gradient_check(const std::function<Tensor()>& loss_fn, ParamStore& params,
                                      const GradCheckOptions& opt = {},
                                      const std::function<void(ParamStore&)>& grad_hook = {}) {
  if (!(opt.eps >= 1e-6 && opt.eps <= 1e-3)) throw Error(Errc::BadConfig, "gradient check eps must lie in [1e-6, 1e-3]");
  params.zero_grad();
  backward(loss_fn());
  if (grad_hook) grad_hook(params);

  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params.entries()[i].value.size(); ++j) probes.emplace_back(i, j);
  if (opt.samples < probes.size()) {
    Rng rng(opt.seed);
    shuffle(std::span(probes), rng);
    probes.resize(opt.samples);
  }

  GradCheckResult res;
  for (auto [i, j] : probes) {
    auto& t = params.entries()[i].value;
    const double analytic = t.grad()[j];
    auto vals = t.mutable_values();
    const double orig = vals[j];
    vals[j] = orig + opt.eps;
    const double fp = loss_fn().item();
    vals[j] = orig - opt.eps;
    const double fm = loss_fn().item();
    vals[j] = orig;
    const double numeric = (fp - fm) / (2.0 * opt.eps);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic - numeric) / denom);
    ++res.checked;
  }
  params.zero_grad();
  return res;
}

}  // namespace nanopk::ad
