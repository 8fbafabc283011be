#pragma once

// Pharmacokinetic dataset: schema, CSV ingestion, cleaning, encoding and
// index splitting.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nanopk/error.hpp"
#include "nanopk/matrix.hpp"
#include "nanopk/random.hpp"
#include "nanopk/standardize.hpp"

namespace nanopk {

enum class NpType { Inorganic, Organic, Hybrid };
enum class Material {
  Gold,
  Dendrimers,
  Liposomes,
  Polymeric,
  Hydrogels,
  OtherOrganic,
  OtherInorganic
};
enum class Shape { Spherical, Rod, Plate, Others };
enum class Charge { Positive, Negative, Neutral };
enum class Targeting { Passive, Active };
enum class TumorModel {
  AllograftHeterotopic,
  AllograftOrthotopic,
  XenograftHeterotopic,
  XenograftOrthotopic
};
enum class CancerType { Brain, Breast, Cervix, Colon, Liver, Lung, Ovary, Pancreas, Prostate, Skin };
enum class Route { IV };

template <typename E>
struct Vocabulary;

#define NANOPK_VOCAB(E, ...)                                                 \
  template <>                                                               \
  struct Vocabulary<E> {                                                    \
    static constexpr auto labels = std::to_array<std::string_view>({__VA_ARGS__}); \
  };

NANOPK_VOCAB(NpType, "Inorganic", "Organic", "Hybrid")
NANOPK_VOCAB(Material, "Gold", "Dendrimers", "Liposomes", "Polymeric", "Hydrogels",
             "Other Organic Material", "Other Inorganic Material")
NANOPK_VOCAB(Shape, "Spherical", "Rod", "Plate", "Others")
NANOPK_VOCAB(Charge, "Positive", "Negative", "Neutral")
NANOPK_VOCAB(Targeting, "Passive", "Active")
NANOPK_VOCAB(TumorModel, "Allograft Heterotopic", "Allograft Orthotopic", "Xenograft Heterotopic",
             "Xenograft Orthotopic")
NANOPK_VOCAB(CancerType, "Brain", "Breast", "Cervix", "Colon", "Liver", "Lung", "Ovary", "Pancreas",
             "Prostate", "Skin")
NANOPK_VOCAB(Route, "IV")

#undef NANOPK_VOCAB

template <typename E>
constexpr std::size_t vocab_size() {
  return Vocabulary<E>::labels.size();
}

template <typename E>
std::string_view label(E value) {
  return Vocabulary<E>::labels[static_cast<std::size_t>(value)];
}

namespace detail {

inline std::string normalize_token(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Strict vocabulary lookup (case and separator insensitive).
template <typename E>
E parse_category(std::string_view text) {
  const std::string key = detail::normalize_token(text);
  const auto& labels = Vocabulary<E>::labels;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (detail::normalize_token(labels[i]) == key) return static_cast<E>(i);
  throw Error(Errc::UnknownCategory, "'" + std::string(text) + "'");
}

template <typename E>
std::optional<E> try_parse_category(std::string_view text) {
  try {
    return parse_category<E>(text);
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// One raw row of the dataset. Any field may be missing.
struct SampleRecord {
  std::optional<NpType> type;
  std::optional<Material> mat;
  std::optional<Shape> shape;
  std::optional<double> hd;  // nm
  std::optional<double> zp;  // mV
  std::optional<Charge> charge;
  std::optional<Targeting> ts;
  std::optional<TumorModel> tm;
  std::optional<CancerType> ct;
  std::optional<double> tw;    // g
  std::optional<double> tsiz;  // cm
  std::optional<double> dose;  // mg/kg
  std::optional<double> bw;    // g
  std::optional<Route> ar;
  std::optional<double> ktres_release;
  std::optional<double> ktres_max;
  std::optional<double> ktres_n;
  std::optional<double> ktres_50;

  bool complete() const {
    return type && mat && shape && hd && zp && charge && ts && tm && ct && tw && tsiz && dose && bw &&
           ar && ktres_release && ktres_max && ktres_n && ktres_50;
  }

  bool operator==(const SampleRecord&) const = default;
};

/// Column symbols of the source file, in canonical order.
inline constexpr std::array<std::string_view, 18> kSchemaColumns = {
    "Type", "MAT", "Shape", "HD",   "ZP",   "Charge", "TS", "TM",           "CT",
    "TW",   "TSiz", "Dose", "BW",   "AR",   "KTRESrelease", "KTRESmax", "KTRESn", "KTRES50"};

/// Number of regression targets and their canonical order.
inline constexpr std::size_t kTargetCount = 4;
inline constexpr std::array<std::string_view, kTargetCount> kTargetNames = {"KTRESmax", "KTRESn",
                                                                             "KTRES50", "KTRESrelease"};

/// Numeric input fields that are standardized and interpolated by augmentation.
inline constexpr std::size_t kNumericCount = 6;
inline constexpr std::array<std::string_view, kNumericCount> kNumericNames = {"HD", "ZP", "TW",
                                                                               "TSiz", "Dose", "BW"};

inline std::array<double, kTargetCount> target_vector(const SampleRecord& r) {
  return {*r.ktres_max, *r.ktres_n, *r.ktres_50, *r.ktres_release};
}

inline void set_targets(SampleRecord& r, std::span<const double> y) {
  r.ktres_max = y[0];
  r.ktres_n = y[1];
  r.ktres_50 = y[2];
  r.ktres_release = y[3];
}

inline std::array<double, kNumericCount> numeric_vector(const SampleRecord& r) {
  return {*r.hd, *r.zp, *r.tw, *r.tsiz, *r.dose, *r.bw};
}

inline void set_numerics(SampleRecord& r, std::span<const double> v) {
  r.hd = v[0];
  r.zp = v[1];
  r.tw = v[2];
  r.tsiz = v[3];
  r.dose = v[4];
  r.bw = v[5];
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

inline std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<double> parse_positive(std::string_view text) {
  auto v = parse_number(text);
  if (v && *v <= 0.0) return std::nullopt;
  return v;
}

}  // namespace detail

/// Parses one data row given the header-to-column map (schema order).
inline SampleRecord parse_record(const std::vector<std::string>& fields,
                                 const std::array<std::size_t, 18>& column_of) {
  auto field = [&](std::size_t schema_idx) -> std::string_view {
    const std::size_t c = column_of[schema_idx];
    return c < fields.size() ? detail::trim(fields[c]) : std::string_view{};
  };
  SampleRecord r;
  r.type = try_parse_category<NpType>(field(0));
  r.mat = try_parse_category<Material>(field(1));
  r.shape = try_parse_category<Shape>(field(2));
  r.hd = detail::parse_positive(field(3));
  r.zp = detail::parse_number(field(4));
  r.charge = try_parse_category<Charge>(field(5));
  r.ts = try_parse_category<Targeting>(field(6));
  r.tm = try_parse_category<TumorModel>(field(7));
  r.ct = try_parse_category<CancerType>(field(8));
  r.tw = detail::parse_positive(field(9));
  r.tsiz = detail::parse_positive(field(10));
  r.dose = detail::parse_number(field(11));
  r.bw = detail::parse_number(field(12));
  r.ar = try_parse_category<Route>(field(13));
  r.ktres_release = detail::parse_number(field(14));
  r.ktres_max = detail::parse_number(field(15));
  r.ktres_n = detail::parse_number(field(16));
  r.ktres_50 = detail::parse_number(field(17));
  return r;
}

/// Reads the CSV at `path`. Unparseable or out-of-vocabulary cells become
/// missing fields; schema problems are errors.
inline std::vector<SampleRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);

  std::string header_line;
  while (std::getline(in, header_line)) {
    if (!detail::trim(header_line).empty()) break;
    header_line.clear();
  }
  if (detail::trim(header_line).empty()) throw Error(Errc::EmptyFile, path + " has no header row");
  if (header_line.size() >= 3 && static_cast<unsigned char>(header_line[0]) == 0xEF)
    header_line.erase(0, 3);  // UTF-8 BOM

  const auto header = detail::split_csv_line(header_line);
  std::array<std::size_t, 18> column_of{};
  for (std::size_t s = 0; s < kSchemaColumns.size(); ++s) {
    auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
      return detail::trim(h) == kSchemaColumns[s];
    });
    if (it == header.end())
      throw Error(Errc::MissingColumn, "column '" + std::string(kSchemaColumns[s]) + "' not in " + path);
    column_of[s] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<SampleRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    records.push_back(parse_record(detail::split_csv_line(line), column_of));
  }
  return records;
}

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename E>
std::string opt_label(const std::optional<E>& v) {
  return v ? std::string(label(*v)) : std::string();
}

inline std::string opt_number(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string();
}

}  // namespace detail

/// Writes records in the ingestion format (shortest round-trip numerics).
inline void write_dataset(std::ostream& out, std::span<const SampleRecord> records) {
  for (std::size_t i = 0; i < kSchemaColumns.size(); ++i) out << (i ? "," : "") << kSchemaColumns[i];
  out << '\n';
  using detail::opt_label;
  using detail::opt_number;
  for (const auto& r : records) {
    out << opt_label(r.type) << ',' << opt_label(r.mat) << ',' << opt_label(r.shape) << ','
        << opt_number(r.hd) << ',' << opt_number(r.zp) << ',' << opt_label(r.charge) << ','
        << opt_label(r.ts) << ',' << opt_label(r.tm) << ',' << opt_label(r.ct) << ','
        << opt_number(r.tw) << ',' << opt_number(r.tsiz) << ',' << opt_number(r.dose) << ','
        << opt_number(r.bw) << ',' << opt_label(r.ar) << ',' << opt_number(r.ktres_release) << ','
        << opt_number(r.ktres_max) << ',' << opt_number(r.ktres_n) << ',' << opt_number(r.ktres_50)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

/// Fully populated records in source order, with their source row indices.
struct CleanDataset {
  std::vector<SampleRecord> records;
  std::vector<std::size_t> source_rows;
  std::string source_path;

  std::size_t size() const { return records.size(); }
};

inline CleanDataset clean(std::span<const SampleRecord> records, std::string source_path = {}) {
  CleanDataset out;
  out.source_path = std::move(source_path);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].complete()) continue;
    out.records.push_back(records[i]);
    out.source_rows.push_back(i);
  }
  if (out.records.empty())
    throw Error(Errc::AllRowsDropped, "no complete rows among " + std::to_string(records.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Encoding: one-hot categoricals + z-scored numerics, d = 39
// ---------------------------------------------------------------------------

struct EncodedSample {
  std::vector<double> x;
};

class Encoder {
 public:
  static constexpr std::size_t kOneHotWidth = vocab_size<NpType>() + vocab_size<Material>() +
                                              vocab_size<Shape>() + vocab_size<Charge>() +
                                              vocab_size<Targeting>() + vocab_size<TumorModel>() +
                                              vocab_size<CancerType>();
  static constexpr std::size_t kWidth = kOneHotWidth + kNumericCount;

  Encoder() = default;
  Encoder(std::array<double, kNumericCount> mean, std::array<double, kNumericCount> sd)
      : mean_(mean), sd_(sd) {}

  /// Numeric statistics come from `stats_source` rows only.
  static Encoder fit(std::span<const SampleRecord> records, std::span<const std::size_t> stats_source) {
    if (stats_source.empty()) throw Error(Errc::TooFewSamples, "encoder needs a non-empty stats source");
    Matrix numerics(stats_source.size(), kNumericCount);
    for (std::size_t i = 0; i < stats_source.size(); ++i) {
      if (stats_source[i] >= records.size()) throw Error(Errc::BadConfig, "stats row out of range");
      const auto& r = records[stats_source[i]];
      if (!r.complete()) throw Error(Errc::BadConfig, "encoder requires complete records");
      const auto v = numeric_vector(r);
      std::copy(v.begin(), v.end(), numerics.row(i).begin());
    }
    const auto st = Standardizer::fit(numerics);
    Encoder e;
    for (std::size_t c = 0; c < kNumericCount; ++c) {
      e.mean_[c] = st.means()[c];
      e.sd_[c] = st.stddevs()[c];
    }
    return e;
  }

  std::vector<double> transform(const SampleRecord& r) const {
    if (!r.complete()) throw Error(Errc::BadConfig, "encoder requires complete records");
    std::vector<double> x(kWidth, 0.0);
    std::size_t offset = 0;
    auto one_hot = [&](auto value) {
      using E = decltype(value);
      x[offset + static_cast<std::size_t>(value)] = 1.0;
      offset += vocab_size<E>();
    };
    one_hot(*r.type);
    one_hot(*r.mat);
    one_hot(*r.shape);
    one_hot(*r.charge);
    one_hot(*r.ts);
    one_hot(*r.tm);
    one_hot(*r.ct);
    const auto v = numeric_vector(r);
    for (std::size_t c = 0; c < kNumericCount; ++c)
      x[offset + c] = sd_[c] == 0.0 ? 0.0 : (v[c] - mean_[c]) / sd_[c];
    return x;
  }

  Matrix transform(std::span<const SampleRecord> records) const {
    Matrix out(records.size(), kWidth);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto x = transform(records[i]);
      std::copy(x.begin(), x.end(), out.row(i).begin());
    }
    return out;
  }

  const std::array<double, kNumericCount>& means() const { return mean_; }
  const std::array<double, kNumericCount>& stddevs() const { return sd_; }

  /// Column labels in encoding order, e.g. "Charge=Positive", "HD".
  static const std::vector<std::string>& column_names() {
    static const std::vector<std::string> names = [] {
      std::vector<std::string> n;
      auto block = [&](std::string_view prefix, auto tag) {
        using E = decltype(tag);
        for (auto l : Vocabulary<E>::labels) n.push_back(std::string(prefix) + "=" + std::string(l));
      };
      block("Type", NpType{});
      block("MAT", Material{});
      block("Shape", Shape{});
      block("Charge", Charge{});
      block("TS", Targeting{});
      block("TM", TumorModel{});
      block("CT", CancerType{});
      for (auto name : kNumericNames) n.emplace_back(name);
      return n;
    }();
    return names;
  }

 private:
  std::array<double, kNumericCount> mean_{};
  std::array<double, kNumericCount> sd_{};
};

inline std::vector<EncodedSample> encode(const CleanDataset& data, std::span<const std::size_t> stats_source) {
  const Encoder enc = Encoder::fit(data.records, stats_source);
  std::vector<EncodedSample> out;
  out.reserve(data.size());
  for (const auto& r : data.records) out.push_back({enc.transform(r)});
  return out;
}

// ---------------------------------------------------------------------------
// Index plans
// ---------------------------------------------------------------------------

struct SplitPlan {
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;
  std::uint64_t seed = 0;
};

struct FoldPlan {
  std::size_t k = 5;
  std::vector<std::vector<std::size_t>> folds;
  double inner_val_fraction = 0.2;
  std::uint64_t seed = 0;

  /// Indices of every fold except `f`, in ascending order.
  std::vector<std::size_t> training_portion(std::size_t f) const {
    std::vector<std::size_t> out;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) out.insert(out.end(), folds[g].begin(), folds[g].end());
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  shuffle(std::span<std::size_t>(idx), rng);
  return idx;
}

inline SplitPlan make_holdout_split(std::size_t n, std::array<double, 3> ratios = {0.6, 0.2, 0.2},
                                    std::uint64_t seed = 0) {
  for (double r : ratios)
    if (!(r >= 0.0)) throw Error(Errc::BadRatios, "negative split ratio");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw Error(Errc::BadRatios, "split ratios must sum to 1");
  if (n < 5) throw Error(Errc::TooFewSamples, "holdout split needs n >= 5");
  const auto idx = shuffled_indices(n, seed);
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[0]));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1])));
  SplitPlan plan;
  plan.seed = seed;
  plan.train_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.val_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                      idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  plan.test_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return plan;
}

inline FoldPlan make_cv_folds(std::size_t n, std::size_t k = 5, std::uint64_t seed = 0,
                              double inner_val_fraction = 0.2) {
  if (k < 2) throw Error(Errc::BadConfig, "k-fold needs k >= 2");
  if (n < k) throw Error(Errc::TooFewSamples, "n=" + std::to_string(n) + " < k=" + std::to_string(k));
  const auto idx = shuffled_indices(n, seed);
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.inner_val_fraction = inner_val_fraction;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    plan.folds.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                            idx.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return plan;
}

}  // namespace nanopk
