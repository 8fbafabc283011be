#pragma once

// Closed-form ridge regression, used as a reference solution in tests and
// for checking planted coefficients in synthetic data.

#include <Eigen/Dense>

#include <cmath>

#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"

namespace nanopk {

/// Solves min ||XW - Y||^2 + lambda ||W||^2 through the stacked least-squares
/// system [X; sqrt(lambda) I] W = [Y; 0]. Returns W with shape [p, q].
inline Matrix fit_ridge(const Matrix& x, const Matrix& y, double lambda) {
  if (x.rows() != y.rows()) throw Error(Errc::ShapeMismatch, "ridge X/Y row mismatch");
  if (!(lambda >= 0.0)) throw Error(Errc::BadConfig, "ridge lambda must be >= 0");
  const auto n = static_cast<Eigen::Index>(x.rows()), p = static_cast<Eigen::Index>(x.cols()),
             q = static_cast<Eigen::Index>(y.cols());
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat a = RowMat::Zero(n + p, p);
  RowMat b = RowMat::Zero(n + p, q);
  a.topRows(n) = Eigen::Map<const RowMat>(x.data().data(), n, p);
  b.topRows(n) = Eigen::Map<const RowMat>(y.data().data(), n, q);
  a.bottomRows(p) = std::sqrt(lambda) * RowMat::Identity(p, p);
  Eigen::ColPivHouseholderQR<RowMat> qr(a);
  if (qr.rank() < p) throw Error(Errc::SingularSystem, "design matrix is rank deficient");
  const RowMat w = qr.solve(b);
  Matrix out(static_cast<std::size_t>(p), static_cast<std::size_t>(q));
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < q; ++j) out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = w(i, j);
  return out;
}

inline Matrix predict_linear(const Matrix& x, const Matrix& w) {
  if (x.cols() != w.rows()) throw Error(Errc::ShapeMismatch, "linear predictor width");
  Matrix out(x.rows(), w.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) s += x(i, k) * w(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace nanopk
