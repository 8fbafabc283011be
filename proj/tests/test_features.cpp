#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

using namespace nanopk;
using nanopk::testing::make_record;

namespace {

const OrganCriteria kDefault = OrganCriteria::defaults();

// Independent evaluation written cell by cell, the way a spreadsheet would:
// guarded division, shifted log, numeric charge and shape codes.
struct Sheet {
  static double div(double a, double b) {
    double d = b;
    if (b >= 0 && b < 1e-6) d = 1e-6;
    if (b < 0 && b > -1e-6) d = -1e-6;
    return a / d;
  }
  static double ln(double a) { return std::log(a + 0.000000001); }
  static double q(Charge c) { return c == Charge::Positive ? 1 : c == Charge::Negative ? -1 : 0; }
  static double s(Shape sh) {
    switch (sh) {
      case Shape::Spherical: return 1;
      case Shape::Rod: return 2;
      case Shape::Plate: return 3;
      case Shape::Others: return 4;
    }
    return 0;
  }
  static double fsize(double hd) {
    double n = 0;
    if (hd < 6) n += 1;
    if (hd > 200) n += 1;
    if (hd >= 10 && hd <= 200) n += 1;
    if (hd < 100) n += 1;
    return n;
  }
  static double fcharge(Charge c) {
    if (c == Charge::Positive) return 2;  // liver, lung
    if (c == Charge::Negative) return 1;  // spleen
    return 2;                             // kidney, spleen
  }

  static std::array<double, 16> row(const SampleRecord& r) {
    const double hd = *r.hd, zp = *r.zp, tw = *r.tw, ts = *r.tsiz;
    return {fsize(hd),
            fcharge(*r.charge),
            div(hd, ts),
            div(hd, zp),
            div(hd, tw),
            div(tw, ts),
            ln(tw),
            tw * tw,
            div(zp, hd),
            hd * zp * q(*r.charge),
            zp * s(*r.shape) * q(*r.charge),
            ts * ts,
            zp * zp,
            ln(ts),
            ln(hd),
            ts * hd};
  }
};

SampleRecord rec(double hd, double zp, double tw, double tsiz, Charge c, Shape s) {
  auto r = make_record(hd, zp, c, s);
  r.tw = tw;
  r.tsiz = tsiz;
  return r;
}

std::vector<SampleRecord> twenty_records() {
  return {
      rec(5, 0, 0.02, 0.02, Charge::Negative, Shape::Rod),
      rec(100, 25, 0.5, 0.5, Charge::Neutral, Shape::Spherical),
      rec(456, 274, 5.09, 1.8, Charge::Positive, Shape::Plate),
      rec(6, -12, 0.3, 0.9, Charge::Negative, Shape::Others),
      rec(10, 1e-7, 1.0, 1.0, Charge::Positive, Shape::Spherical),
      rec(200, -3e-7, 2.2, 0.33, Charge::Negative, Shape::Rod),
      rec(99.5, 45, 0.07, 1.2, Charge::Positive, Shape::Rod),
      rec(150, 0, 0.9, 0.6, Charge::Neutral, Shape::Plate),
      rec(5.9999, 8.5, 0.11, 0.05, Charge::Positive, Shape::Spherical),
      rec(200.5, 60, 3.3, 1.75, Charge::Negative, Shape::Others),
      rec(33, -47.2, 0.44, 0.71, Charge::Negative, Shape::Spherical),
      rec(72.4, 13.9, 1.9, 0.29, Charge::Neutral, Shape::Rod),
      rec(12.5, 2.5, 0.021, 0.021, Charge::Positive, Shape::Others),
      rec(300, -0.5, 4.0, 1.4, Charge::Positive, Shape::Plate),
      rec(9.99, 5, 0.6, 0.2, Charge::Negative, Shape::Rod),
      rec(100, 100, 1, 1, Charge::Positive, Shape::Spherical),
      rec(48, 30, 0.32, 0.91, Charge::Neutral, Shape::Spherical),
      rec(250, 0.0, 0.05, 0.08, Charge::Positive, Shape::Rod),
      rec(18, -22, 2.5, 1.1, Charge::Neutral, Shape::Others),
      rec(420, 150, 0.25, 0.4, Charge::Negative, Shape::Plate),
  };
}

}  // namespace

TEST(PhiRatio, Examples) {
  EXPECT_DOUBLE_EQ(phi_ratio(100, 0.5), 200);
  EXPECT_DOUBLE_EQ(phi_ratio(7, 7), 1);
  EXPECT_DOUBLE_EQ(phi_ratio(5, 0), 5e6);
  EXPECT_DOUBLE_EQ(phi_ratio(5, -1e-9), -5e6);
}

TEST(PhiLog, Examples) {
  EXPECT_NEAR(phi_log(1), 0.0, 1e-8);
  EXPECT_NEAR(phi_log(std::exp(1.0) - 1e-9), 1.0, 1e-15);
  EXPECT_NEAR(phi_log(0.02), -3.912, 1e-3);
  EXPECT_DOUBLE_EQ(phi_log(0.02), std::log(0.02 + 1e-9));
  try {
    phi_log(-1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DomainError);
  }
}

TEST(PhiPolynomial, Examples) {
  EXPECT_EQ(phi_polynomial(0), 0);
  EXPECT_EQ(phi_polynomial(3), 9);
  EXPECT_EQ(phi_polynomial(-2), 4);
}

TEST(PhiInteraction, Examples) {
  EXPECT_EQ(phi_interaction({2.0, 3.0}), 6);
  EXPECT_EQ(phi_interaction({4.25, 1.0, 1.0}), 4.25);
  EXPECT_EQ(phi_interaction({5.0, -1.0, 0.0}), 0);
}

TEST(ExtractSecondary, SimpleArithmetic) {
  const auto f = extract_secondary(rec(100, 25, 0.5, 0.5, Charge::Neutral, Shape::Spherical), kDefault);
  EXPECT_DOUBLE_EQ(f.xt[2], 200);    // f1
  EXPECT_DOUBLE_EQ(f.xt[15], 50);    // f14
  EXPECT_NEAR(f.xt[14], 4.605, 1e-3);  // f13
  EXPECT_EQ(f.xt[9], 0);             // f8
  EXPECT_EQ(f.xt[10], 0);            // f9
  EXPECT_EQ(SecondaryFeatures::column_names().size(), 16u);
}

TEST(ExtractSecondary, MatchesSpreadsheetOnTwentyRecords) {
  for (const auto& r : twenty_records()) {
    const auto got = extract_secondary(r, kDefault).xt;
    const auto want = Sheet::row(r);
    for (std::size_t j = 0; j < 16; ++j) {
      const double tol = 1e-10 * std::max(1.0, std::abs(want[j]));
      EXPECT_NEAR(got[j], want[j], tol) << "hd=" << *r.hd << " zp=" << *r.zp << " column " << j;
    }
  }
}

TEST(ExtractSecondary, GuardRegionValues) {
  // hd=5, zp=0, tw=0.02, tsiz=0.02, Negative, Rod
  const auto f = extract_secondary(rec(5, 0, 0.02, 0.02, Charge::Negative, Shape::Rod), kDefault).xt;
  const std::array<double, 16> want = {2,   1, 250, 5e6, 250, 1, std::log(0.020000001), 0.0004,
                                       0.0, 0, 0,   0.0004, 0, std::log(0.020000001), std::log(5.000000001), 0.1};
  for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(f[j], want[j], 1e-10 * std::max(1.0, std::abs(want[j]))) << j;
}

TEST(ExtractSecondary, ReciprocalRatiosAndNonNegativeSquares) {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    const double hd = std::exp(uniform_real(rng, std::log(5.0), std::log(456.0)));
    double zp = uniform_real(rng, -100, 274);
    if (i % 50 == 0) zp = 0;
    const auto r = rec(hd, zp, uniform_real(rng, 0.02, 5.09), uniform_real(rng, 0.02, 1.8),
                       static_cast<Charge>(i % 3), static_cast<Shape>(i % 4));
    const auto f = extract_secondary(r, kDefault).xt;
    for (double v : f) EXPECT_TRUE(std::isfinite(v));
    if (std::abs(zp) > 1e-6) {
      EXPECT_NEAR(f[8] * f[3], 1.0, 1e-12);
    }
    EXPECT_GE(f[7], 0);
    EXPECT_GE(f[11], 0);
    EXPECT_GE(f[12], 0);
  }
}

TEST(ExtractSecondary, DoublingDiameter) {
  for (double hd : {20.0, 30.0, 40.0}) {  // f_size is constant on [10, 100) so f_size terms cancel
    const auto a = extract_secondary(rec(hd, 15, 0.7, 0.4, Charge::Positive, Shape::Rod), kDefault).xt;
    const auto b = extract_secondary(rec(2 * hd, 15, 0.7, 0.4, Charge::Positive, Shape::Rod), kDefault).xt;
    EXPECT_NEAR(b[2], 2 * a[2], 1e-12 * b[2]);    // f1
    EXPECT_NEAR(b[4], 2 * a[4], 1e-12 * b[4]);    // f3
    EXPECT_NEAR(b[15], 2 * a[15], 1e-12 * b[15]);  // f14
    EXPECT_NEAR(b[14] - a[14], std::log(2.0), 1e-9);
  }
}

TEST(ExtractSecondary, PureAndFixedWidth) {
  const auto recs = twenty_records();
  const Matrix a = extract_secondary(recs, kDefault);
  const Matrix b = extract_secondary(recs, kDefault);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.cols(), 16u);
  EXPECT_EQ(a.rows(), 20u);
}

TEST(ExtractSecondary, MissingFieldsAreRejected) {
  auto r = make_record();
  r.zp.reset();
  EXPECT_THROW(extract_secondary(r, kDefault), Error);
}
