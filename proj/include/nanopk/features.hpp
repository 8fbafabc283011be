#pragma once

// Engineered secondary view: the two organ priors followed by fourteen
// ratio / log / polynomial / interaction features of the raw measurements.

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "nanopk/dataset.hpp"
#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/priors.hpp"

namespace nanopk {

inline constexpr double kRatioEpsilon = 1e-6;
inline constexpr double kLogEpsilon = 1e-9;
inline constexpr std::size_t kSecondaryWidth = 16;

/// a / b with the denominator pushed away from zero, keeping its sign
/// (b == 0 counts as positive).
inline double phi_ratio(double a, double b) {
  const double mag = std::max(std::abs(b), kRatioEpsilon);
  return a / (b < 0.0 ? -mag : mag);
}

inline double phi_log(double a) {
  const double shifted = a + kLogEpsilon;
  if (!(shifted > 0.0)) throw Error(Errc::DomainError, "log of non-positive value");
  return std::log(shifted);
}

inline double phi_polynomial(double a) { return a * a; }

inline double phi_interaction(std::span<const double> args) {
  if (args.empty()) throw Error(Errc::BadConfig, "interaction needs at least one argument");
  double p = 1.0;
  for (double v : args) p *= v;
  return p;
}

inline double phi_interaction(std::initializer_list<double> args) {
  return phi_interaction(std::span<const double>(args.begin(), args.size()));
}

/// Scalar stand-ins used inside the interaction features.
inline double charge_number(Charge c) {
  switch (c) {
    case Charge::Positive: return 1.0;
    case Charge::Negative: return -1.0;
    case Charge::Neutral: return 0.0;
  }
  return 0.0;
}

inline double shape_number(Shape s) { return static_cast<double>(static_cast<int>(s) + 1); }

struct SecondaryFeatures {
  std::array<double, kSecondaryWidth> xt{};

  static const std::vector<std::string>& column_names() {
    static const std::vector<std::string> names = [] {
      std::vector<std::string> n = {"f_size", "f_charge"};
      for (int i = 1; i <= 14; ++i) n.push_back("f" + std::to_string(i));
      return n;
    }();
    return names;
  }
};

inline SecondaryFeatures extract_secondary(const SampleRecord& r, const OrganCriteria& criteria) {
  if (!(r.hd && r.zp && r.tw && r.tsiz && r.charge && r.shape))
    throw Error(Errc::BadConfig, "secondary features need HD, ZP, TW, TSiz, Charge and Shape");
  const double hd = *r.hd, zp = *r.zp, tw = *r.tw, tsiz = *r.tsiz;
  const double q = charge_number(*r.charge);
  const double s = shape_number(*r.shape);

  SecondaryFeatures out;
  auto& v = out.xt;
  v[0] = f_size(r, criteria);
  v[1] = f_charge(r, criteria);
  v[2] = phi_ratio(hd, tsiz);                 // f1
  v[3] = phi_ratio(hd, zp);                   // f2
  v[4] = phi_ratio(hd, tw);                   // f3
  v[5] = phi_ratio(tw, tsiz);                 // f4
  v[6] = phi_log(tw);                         // f5
  v[7] = phi_polynomial(tw);                  // f6
  v[8] = phi_ratio(zp, hd);                   // f7
  v[9] = phi_interaction({hd, zp, q});        // f8
  v[10] = phi_interaction({zp, s, q});        // f9
  v[11] = phi_polynomial(tsiz);               // f10
  v[12] = phi_polynomial(zp);                 // f11
  v[13] = phi_log(tsiz);                      // f12
  v[14] = phi_log(hd);                        // f13
  v[15] = phi_interaction({tsiz, hd});        // f14
  for (double x : v)
    if (!std::isfinite(x)) throw Error(Errc::NonFinite, "secondary feature not finite");
  return out;
}

inline Matrix extract_secondary(std::span<const SampleRecord> records, const OrganCriteria& criteria) {
  Matrix out(records.size(), kSecondaryWidth);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto f = extract_secondary(records[i], criteria);
    std::copy(f.xt.begin(), f.xt.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace nanopk
