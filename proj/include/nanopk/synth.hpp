#pragma once

// Schema-conformant synthetic data with a planted ground truth.
//
// Each target is a fixed linear function of the design row
//   [1, z_hd, z_zp, z_tw, z_tsiz, z_dose, z_bw, charge, spherical, active, z_hd*z_zp]
// where z_* are fixed affine (log-affine for HD, TW, Dose) rescalings of the
// raw measurements. Gaussian noise with sd = noise_ratio * sd(signal) is added
// per target.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "nanopk/dataset.hpp"
#include "nanopk/error.hpp"
#include "nanopk/features.hpp"
#include "nanopk/random.hpp"

namespace nanopk {

inline constexpr std::size_t kSynthDesignWidth = 11;

struct SynthConfig {
  std::size_t n = 280;
  double noise_ratio = 0.3;
  double missing_rate = 0.0;  // fraction of rows with one field blanked
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw Error(Errc::BadConfig, "synth.n must be >= 1");
    if (!(noise_ratio >= 0.0)) throw Error(Errc::BadConfig, "synth.noise must be >= 0");
    if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) throw Error(Errc::BadConfig, "synth.missing_rate must lie in [0,1]");
  }
};

/// Rows: KTRESmax, KTRESn, KTRES50, KTRESrelease.
inline const std::array<std::array<double, kSynthDesignWidth>, kTargetCount>& synth_coefficients() {
  static const std::array<std::array<double, kSynthDesignWidth>, kTargetCount> b = {{
      {2.0, 0.8, -0.4, 0.3, 0.2, 0.5, 0.0, 0.6, -0.3, 0.4, 0.5},
      {2.5, -0.5, 0.6, 0.0, 0.4, 0.3, 0.2, -0.4, 0.5, 0.3, -0.4},
      {20.0, 4.0, 2.0, -3.0, 1.5, 2.5, -1.0, 3.0, 0.0, -2.0, 2.5},
      {1.0, -0.3, 0.2, 0.4, -0.2, 0.1, 0.3, -0.2, 0.3, 0.0, 0.3},
  }};
  return b;
}

inline std::array<double, kSynthDesignWidth> synth_design_row(const SampleRecord& r) {
  if (!(r.hd && r.zp && r.tw && r.tsiz && r.dose && r.bw && r.charge && r.shape && r.ts))
    throw Error(Errc::BadConfig, "synthetic design needs the numeric fields, charge, shape and targeting");
  const double z1 = (std::log(*r.hd) - std::log(48.0)) / 1.2;
  const double z2 = (*r.zp - 30.0) / 17.3;
  const double z3 = (std::log(*r.tw) - std::log(0.32)) / 1.6;
  const double z4 = (*r.tsiz - 0.91) / 0.514;
  const double z5 = (std::log(*r.dose) - std::log(1.1)) / 3.98;
  const double z6 = (*r.bw - 25.5) / 5.48;
  return {1.0,
          z1,
          z2,
          z3,
          z4,
          z5,
          z6,
          charge_number(*r.charge),
          *r.shape == Shape::Spherical ? 1.0 : 0.0,
          *r.ts == Targeting::Active ? 1.0 : 0.0,
          z1 * z2};
}

inline std::array<double, kTargetCount> synth_signal(const SampleRecord& r) {
  const auto phi = synth_design_row(r);
  std::array<double, kTargetCount> s{};
  for (std::size_t o = 0; o < kTargetCount; ++o)
    for (std::size_t j = 0; j < kSynthDesignWidth; ++j) s[o] += synth_coefficients()[o][j] * phi[j];
  return s;
}

struct SynthResult {
  std::vector<SampleRecord> records;
  std::size_t incomplete = 0;
  std::array<double, kTargetCount> noise_sd{};
};

namespace detail {

template <typename E>
E random_category(Rng& rng) {
  return static_cast<E>(uniform_index(rng, vocab_size<E>()));
}

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(uniform_real(rng, std::log(lo), std::log(hi)));
}

}  // namespace detail

inline SynthResult generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthResult out;
  std::vector<std::array<double, kTargetCount>> signal;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    SampleRecord r;
    r.type = detail::random_category<NpType>(rng);
    r.mat = detail::random_category<Material>(rng);
    r.shape = detail::random_category<Shape>(rng);
    r.hd = detail::log_uniform(rng, 5.0, 456.0);
    r.zp = uniform_real(rng, 0.0, 60.0);
    r.charge = detail::random_category<Charge>(rng);
    r.ts = detail::random_category<Targeting>(rng);
    r.tm = detail::random_category<TumorModel>(rng);
    r.ct = detail::random_category<CancerType>(rng);
    r.tw = detail::log_uniform(rng, 0.02, 5.09);
    r.tsiz = uniform_real(rng, 0.02, 1.8);
    r.dose = detail::log_uniform(rng, 0.001, 1220.0);
    r.bw = uniform_real(rng, 16.0, 35.0);
    r.ar = Route::IV;
    signal.push_back(synth_signal(r));
    out.records.push_back(r);
  }
  for (std::size_t o = 0; o < kTargetCount; ++o) {
    double mean = 0.0, var = 0.0;
    for (const auto& s : signal) mean += s[o];
    mean /= static_cast<double>(signal.size());
    for (const auto& s : signal) var += (s[o] - mean) * (s[o] - mean);
    out.noise_sd[o] = cfg.noise_ratio * std::sqrt(var / static_cast<double>(signal.size()));
  }
  for (std::size_t i = 0; i < cfg.n; ++i) {
    std::array<double, kTargetCount> y = signal[i];
    for (std::size_t o = 0; o < kTargetCount; ++o)
      if (out.noise_sd[o] > 0.0) y[o] += out.noise_sd[o] * standard_normal(rng);
    set_targets(out.records[i], y);
  }
  if (cfg.missing_rate > 0.0) {
    for (auto& r : out.records) {
      if (!(uniform01(rng) < cfg.missing_rate)) continue;
      switch (uniform_index(rng, 6)) {
        case 0: r.hd.reset(); break;
        case 1: r.zp.reset(); break;
        case 2: r.charge.reset(); break;
        case 3: r.tw.reset(); break;
        case 4: r.ct.reset(); break;
        default: r.ktres_n.reset(); break;
      }
      ++out.incomplete;
    }
  }
  return out;
}

}  // namespace nanopk
