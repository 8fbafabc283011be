#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "nanopk/nanopk.hpp"

namespace nanopk::testing {

/// A complete record with mid-range values.
inline SampleRecord make_record(double hd = 50.0, double zp = 20.0, Charge charge = Charge::Negative,
                                Shape shape = Shape::Spherical) {
  SampleRecord r;
  r.type = NpType::Inorganic;
  r.mat = Material::Gold;
  r.shape = shape;
  r.hd = hd;
  r.zp = zp;
  r.charge = charge;
  r.ts = Targeting::Passive;
  r.tm = TumorModel::XenograftHeterotopic;
  r.ct = CancerType::Breast;
  r.tw = 0.5;
  r.tsiz = 0.8;
  r.dose = 2.0;
  r.bw = 22.0;
  r.ar = Route::IV;
  r.ktres_release = 0.5;
  r.ktres_max = 1.5;
  r.ktres_n = 2.0;
  r.ktres_50 = 12.0;
  return r;
}

/// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("nanopk_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string dataset_csv(std::span<const SampleRecord> recs) {
  std::ostringstream os;
  write_dataset(os, recs);
  return os.str();
}

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = uniform_real(rng, lo, hi);
  return m;
}

}  // namespace nanopk::testing
