#pragma once

// Gradient saliency: mean |d yhat_o / d input_j| over samples, scaled so the
// largest entry of each channel (primary, secondary) is 1 for every output.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nanopk/autodiff.hpp"
#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/multiview.hpp"

namespace nanopk {

struct SaliencyReport {
  Matrix primary;    // [outputs, primary width]
  Matrix secondary;  // [outputs, secondary width]
  std::vector<bool> primary_all_zero;
  std::vector<bool> secondary_all_zero;
  Matrix raw_primary;  // before normalisation
  Matrix raw_secondary;
};

using ForwardFn = std::function<ad::Tensor(const ad::Tensor& x, const ad::Tensor& xt)>;

namespace detail {

inline void normalise_rows(const Matrix& raw, Matrix& out, std::vector<bool>& all_zero) {
  out = raw;
  all_zero.assign(raw.rows(), false);
  for (std::size_t o = 0; o < raw.rows(); ++o) {
    double mx = 0.0;
    for (double v : raw.row(o)) mx = std::max(mx, v);
    if (mx == 0.0) {
      all_zero[o] = true;
      continue;
    }
    for (double& v : out.row(o)) v /= mx;
  }
}

}  // namespace detail

/// Gradients are taken one output at a time through a batched eval-mode
/// forward; rows must not interact, which holds for frozen normalisation.
inline SaliencyReport saliency(const ForwardFn& forward, const Matrix& x, const Matrix& xt) {
  if (x.rows() == 0 || x.rows() != xt.rows()) throw Error(Errc::TooFewSamples, "saliency needs matching samples");
  const auto probe = forward(ad::Tensor::from_matrix(x), ad::Tensor::from_matrix(xt));
  const std::size_t outputs = probe.cols();
  SaliencyReport rep;
  rep.raw_primary = Matrix(outputs, x.cols());
  rep.raw_secondary = Matrix(outputs, xt.cols());
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  for (std::size_t o = 0; o < outputs; ++o) {
    const auto xin = ad::Tensor::from_matrix(x, true);
    const auto xtin = ad::Tensor::from_matrix(xt, true);
    ad::backward(ad::column_sum(forward(xin, xtin), o));
    const auto gx = xin.grad();
    const auto gxt = xtin.grad();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) rep.raw_primary(o, j) += std::abs(gx[i * x.cols() + j]) * inv_n;
      for (std::size_t j = 0; j < xt.cols(); ++j) rep.raw_secondary(o, j) += std::abs(gxt[i * xt.cols() + j]) * inv_n;
    }
  }
  detail::normalise_rows(rep.raw_primary, rep.primary, rep.primary_all_zero);
  detail::normalise_rows(rep.raw_secondary, rep.secondary, rep.secondary_all_zero);
  return rep;
}

/// Saliency of a multiview model, with outputs in target units.
inline SaliencyReport saliency(const MultiviewModel& model, const Matrix& x, const Matrix& xt) {
  const auto& sd = model.target_scale.stddevs();
  std::vector<double> scale(sd.begin(), sd.end());
  for (double& s : scale)
    if (s == 0.0) s = 1.0;
  std::vector<double> diag(scale.size() * scale.size(), 0.0);
  for (std::size_t i = 0; i < scale.size(); ++i) diag[i * scale.size() + i] = scale[i];
  const auto to_units = ad::Tensor::from({scale.size(), scale.size()}, diag);
  return saliency(
      [&](const ad::Tensor& a, const ad::Tensor& b) {
        return ad::matmul(model.forward(a, b, ad::Mode::Eval, nullptr), to_units);
      },
      x, xt);
}

}  // namespace nanopk
