#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"

namespace nanopk {

/// Per-column z-scoring with statistics taken from a chosen subset of rows.
/// A column whose spread is numerically zero maps every value to 0.0.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<double> means, std::vector<double> stddevs)
      : mean_(std::move(means)), std_(std::move(stddevs)) {
    if (mean_.size() != std_.size()) throw Error(Errc::ShapeMismatch, "standardizer sizes");
  }

  static Standardizer fit(const Matrix& m, std::span<const std::size_t> rows) {
    if (rows.empty()) throw Error(Errc::TooFewSamples, "standardization needs at least one row");
    const std::size_t p = m.cols();
    std::vector<double> mean(p, 0.0), sd(p, 0.0);
    for (std::size_t r : rows) {
      if (r >= m.rows()) throw Error(Errc::BadConfig, "standardization row index out of range");
      for (std::size_t c = 0; c < p; ++c) mean[c] += m(r, c);
    }
    for (double& v : mean) v /= static_cast<double>(rows.size());
    for (std::size_t r : rows)
      for (std::size_t c = 0; c < p; ++c) {
        const double d = m(r, c) - mean[c];
        sd[c] += d * d;
      }
    for (std::size_t c = 0; c < p; ++c) {
      sd[c] = std::sqrt(sd[c] / static_cast<double>(rows.size()));
      if (sd[c] <= 1e-12 * std::max(1.0, std::abs(mean[c]))) sd[c] = 0.0;
    }
    return Standardizer(std::move(mean), std::move(sd));
  }

  static Standardizer fit(const Matrix& m) {
    std::vector<std::size_t> all(m.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return fit(m, all);
  }

  std::size_t width() const { return mean_.size(); }
  const std::vector<double>& means() const { return mean_; }
  const std::vector<double>& stddevs() const { return std_; }

  double apply(std::size_t col, double v) const {
    return std_[col] == 0.0 ? 0.0 : (v - mean_[col]) / std_[col];
  }
  double invert(std::size_t col, double z) const { return mean_[col] + z * std_[col]; }

  void apply_inplace(std::span<double> row) const {
    if (row.size() != width()) throw Error(Errc::ShapeMismatch, "standardizer width");
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = apply(c, row[c]);
  }

  Matrix apply(const Matrix& m) const {
    Matrix out = m;
    for (std::size_t r = 0; r < out.rows(); ++r) apply_inplace(out.row(r));
    return out;
  }

  /// Inverse map; zero-variance columns return their mean.
  Matrix invert(const Matrix& z) const {
    if (z.cols() != width()) throw Error(Errc::ShapeMismatch, "standardizer width");
    Matrix out = z;
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = invert(c, z(r, c));
    return out;
  }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

}  // namespace nanopk
