#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "test_support.hpp"

using namespace nanopk;
using nanopk::testing::make_record;
using nanopk::testing::TempDir;
using nanopk::testing::write_text;

namespace {

const std::string kHeader =
    "Type,MAT,Shape,HD,ZP,Charge,TS,TM,CT,TW,TSiz,Dose,BW,AR,KTRESrelease,KTRESmax,KTRESn,KTRES50\n";

std::vector<std::size_t> sorted_union(std::initializer_list<const std::vector<std::size_t>*> parts) {
  std::vector<std::size_t> all;
  for (const auto* p : parts) all.insert(all.end(), p->begin(), p->end());
  std::sort(all.begin(), all.end());
  return all;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST(LoadDataset, HeaderOnlyFileGivesNoRecords) {
  TempDir dir("load");
  write_text(dir.file("h.csv"), kHeader);
  EXPECT_TRUE(load_dataset(dir.file("h.csv")).empty());
}

TEST(LoadDataset, EmptyFileIsAnError) {
  TempDir dir("load");
  write_text(dir.file("e.csv"), "");
  try {
    load_dataset(dir.file("e.csv"));
    FAIL() << "expected EmptyFile";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyFile);
  }
}

TEST(LoadDataset, MissingColumnIsAnError) {
  TempDir dir("load");
  write_text(dir.file("m.csv"), "Type,MAT,Shape\nOrganic,Gold,Rod\n");
  try {
    load_dataset(dir.file("m.csv"));
    FAIL() << "expected MissingColumn";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingColumn);
  }
}

TEST(LoadDataset, BlankHdBecomesMissing) {
  TempDir dir("load");
  write_text(dir.file("b.csv"),
             kHeader + "Inorganic,Gold,Spherical,,12,Negative,Passive,Xenograft Heterotopic,Breast,0.4,0.9,2,"
                       "22,IV,0.3,1.2,2.1,10\n");
  const auto recs = load_dataset(dir.file("b.csv"));
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_FALSE(recs[0].hd.has_value());
  EXPECT_TRUE(recs[0].zp.has_value());
  EXPECT_FALSE(recs[0].complete());
}

TEST(LoadDataset, UnparseableAndOutOfVocabularyBecomeMissing) {
  TempDir dir("load");
  write_text(dir.file("u.csv"),
             kHeader + "Inorganic,Unobtainium,Spherical,abc,12,Negative,Passive,Xenograft Heterotopic,Breast,0.4,"
                       "0.9,2,22,IV,0.3,1.2,2.1,10\n");
  const auto recs = load_dataset(dir.file("u.csv"));
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_FALSE(recs[0].mat.has_value());
  EXPECT_FALSE(recs[0].hd.has_value());
}

TEST(LoadDataset, ColumnOrderIsTakenFromTheHeader) {
  std::vector<SampleRecord> recs = {make_record(30, 5), make_record(120, -8, Charge::Positive, Shape::Rod)};
  std::string csv = nanopk::testing::dataset_csv(recs);
  // Swap the first two columns in every line.
  std::stringstream in(csv), out;
  std::string line;
  while (std::getline(in, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    out << line.substr(a + 1, b - a - 1) << ',' << line.substr(0, a) << line.substr(b) << '\n';
  }
  TempDir dir("load");
  write_text(dir.file("p.csv"), out.str());
  EXPECT_EQ(load_dataset(dir.file("p.csv")), recs);
}

TEST(LoadDataset, WriteThenLoadRoundTrips) {
  auto synth = generate_synthetic({.n = 40, .noise_ratio = 0.3, .missing_rate = 0.25, .seed = 7});
  TempDir dir("load");
  write_text(dir.file("r.csv"), nanopk::testing::dataset_csv(synth.records));
  EXPECT_EQ(load_dataset(dir.file("r.csv")), synth.records);
}

TEST(Clean, KeepsCompleteRowsInOrder) {
  std::vector<SampleRecord> three = {make_record(10), make_record(20), make_record(30)};
  const auto c = clean(three);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(c.source_rows, (std::vector<std::size_t>{0, 1, 2}));

  std::vector<SampleRecord> two = {make_record(10), make_record(20)};
  two[0].zp.reset();
  const auto d = clean(two);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(*d.records[0].hd, 20.0);
  EXPECT_EQ(d.source_rows, (std::vector<std::size_t>{1}));
}

TEST(Clean, AllRowsDroppedIsAnError) {
  std::vector<SampleRecord> recs = {make_record()};
  recs[0].ktres_n.reset();
  try {
    clean(recs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllRowsDropped);
  }
}

TEST(Clean, IsIdempotent) {
  const auto synth = generate_synthetic({.n = 60, .noise_ratio = 0.3, .missing_rate = 0.4, .seed = 3});
  const auto once = clean(synth.records);
  const auto twice = clean(once.records);
  EXPECT_EQ(once.records, twice.records);
  EXPECT_EQ(once.size(), 60u - synth.incomplete);
}

TEST(Encode, WidthIsThirtyNine) {
  EXPECT_EQ(Encoder::kWidth, 39u);
  EXPECT_EQ(Encoder::column_names().size(), 39u);
  EXPECT_EQ(3u + 7 + 4 + 3 + 2 + 4 + 10 + 6, Encoder::kWidth);
}

TEST(Encode, ChargePositiveIsFirstInItsBlock) {
  std::vector<SampleRecord> recs = {make_record(10, 5, Charge::Positive), make_record(20, 6, Charge::Neutral)};
  const auto enc = Encoder::fit(recs, std::vector<std::size_t>{0, 1});
  const auto x = enc.transform(recs[0]);
  const auto& names = Encoder::column_names();
  const auto pos = std::find(names.begin(), names.end(), "Charge=Positive") - names.begin();
  EXPECT_EQ(x[pos], 1.0);
  EXPECT_EQ(x[pos + 1], 0.0);
  EXPECT_EQ(x[pos + 2], 0.0);
}

TEST(Encode, OneHotGroupsSumToOne) {
  const auto synth = generate_synthetic({.n = 50, .seed = 11});
  const auto data = clean(synth.records);
  const auto enc = Encoder::fit(data.records, iota_vec(data.size()));
  const std::array<std::size_t, 7> sizes = {3, 7, 4, 3, 2, 4, 10};
  for (const auto& r : data.records) {
    const auto x = enc.transform(r);
    std::size_t off = 0;
    for (auto s : sizes) {
      double sum = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        EXPECT_TRUE(x[off + j] == 0.0 || x[off + j] == 1.0);
        sum += x[off + j];
      }
      EXPECT_EQ(sum, 1.0);
      off += s;
    }
  }
}

TEST(Encode, ValueAtStatsMeanMapsToZero) {
  std::vector<SampleRecord> recs = {make_record(10), make_record(30), make_record(20)};
  const auto enc = Encoder::fit(recs, std::vector<std::size_t>{0, 1});
  EXPECT_DOUBLE_EQ(enc.means()[0], 20.0);
  const auto x = enc.transform(recs[2]);
  EXPECT_EQ(x[Encoder::kOneHotWidth + 0], 0.0);
}

TEST(Encode, ZeroVarianceColumnEmitsZero) {
  std::vector<SampleRecord> recs = {make_record(10), make_record(30)};
  const auto enc = Encoder::fit(recs, std::vector<std::size_t>{0, 1});
  // TW is 0.5 in both rows.
  for (const auto& r : recs) EXPECT_EQ(enc.transform(r)[Encoder::kOneHotWidth + 2], 0.0);
  auto odd = make_record(10);
  odd.tw = 7.0;
  EXPECT_EQ(enc.transform(odd)[Encoder::kOneHotWidth + 2], 0.0);
}

TEST(Encode, StatisticsIgnoreRowsOutsideTheSource) {
  const auto synth = generate_synthetic({.n = 30, .seed = 5});
  auto data = clean(synth.records);
  const std::vector<std::size_t> train = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const auto a = encode(data, train);
  for (std::size_t i = 10; i < data.size(); ++i) {
    *data.records[i].hd *= 1000.0;
    *data.records[i].bw += 50.0;
  }
  const auto b = encode(data, train);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a[i].x, b[i].x);
}

TEST(Encode, IsPure) {
  const auto data = clean(generate_synthetic({.n = 40, .seed = 9}).records);
  const auto idx = iota_vec(20);
  const auto a = encode(data, idx);
  const auto b = encode(data, idx);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].x, b[i].x);
}

TEST(Encode, EmptyStatsSourceIsRejected) {
  const auto data = clean(generate_synthetic({.n = 5, .seed = 1}).records);
  EXPECT_THROW(encode(data, {}), Error);
}

TEST(ParseCategory, UnknownLabelThrows) {
  EXPECT_EQ(parse_category<Charge>("positive"), Charge::Positive);
  EXPECT_EQ(parse_category<Material>("Other Organic Material"), Material::OtherOrganic);
  try {
    parse_category<Charge>("Strange");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownCategory);
  }
}

TEST(HoldoutSplit, PublishedSizeGives168_56_56) {
  const auto p = make_holdout_split(280, {0.6, 0.2, 0.2}, 42);
  EXPECT_EQ(p.train_idx.size(), 168u);
  EXPECT_EQ(p.val_idx.size(), 56u);
  EXPECT_EQ(p.test_idx.size(), 56u);
}

TEST(HoldoutSplit, TenGives6_2_2) {
  const auto p = make_holdout_split(10, {0.6, 0.2, 0.2}, 1);
  EXPECT_EQ(p.train_idx.size(), 6u);
  EXPECT_EQ(p.val_idx.size(), 2u);
  EXPECT_EQ(p.test_idx.size(), 2u);
}

TEST(HoldoutSplit, DeterministicShuffledAndExhaustive) {
  for (std::size_t n : {5u, 17u, 100u, 280u}) {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
      const auto a = make_holdout_split(n, {0.6, 0.2, 0.2}, seed);
      const auto b = make_holdout_split(n, {0.6, 0.2, 0.2}, seed);
      EXPECT_EQ(a.train_idx, b.train_idx);
      EXPECT_EQ(a.val_idx, b.val_idx);
      EXPECT_EQ(a.test_idx, b.test_idx);
      EXPECT_EQ(sorted_union({&a.train_idx, &a.val_idx, &a.test_idx}), iota_vec(n));
    }
  }
  const auto p = make_holdout_split(100, {0.6, 0.2, 0.2}, 3);
  EXPECT_NE(p.train_idx, std::vector<std::size_t>(iota_vec(60)));
}

TEST(HoldoutSplit, BadRatiosAndTinyN) {
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  EXPECT_EQ(code([] { make_holdout_split(100, {0.5, 0.2, 0.2}, 0); }), Errc::BadRatios);
  EXPECT_EQ(code([] { make_holdout_split(4, {0.6, 0.2, 0.2}, 0); }), Errc::TooFewSamples);
}

TEST(CvFolds, PublishedSizeGivesFiveFoldsOf56) {
  const auto p = make_cv_folds(280, 5, 42);
  ASSERT_EQ(p.folds.size(), 5u);
  for (const auto& f : p.folds) EXPECT_EQ(f.size(), 56u);
}

TEST(CvFolds, SevenIntoFiveIsBalanced) {
  const auto p = make_cv_folds(7, 5, 0);
  std::vector<std::size_t> sizes;
  for (const auto& f : p.folds) sizes.push_back(f.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 1, 1, 1}));
}

TEST(CvFolds, PartitionDeterministicAndBalanced) {
  for (std::size_t n = 5; n < 60; n += 7) {
    for (std::size_t k : {2u, 3u, 5u}) {
      const auto a = make_cv_folds(n, k, n * 31 + k);
      const auto b = make_cv_folds(n, k, n * 31 + k);
      EXPECT_EQ(a.folds, b.folds);
      std::vector<std::size_t> all;
      std::size_t lo = n, hi = 0;
      for (const auto& f : a.folds) {
        all.insert(all.end(), f.begin(), f.end());
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
      }
      std::sort(all.begin(), all.end());
      EXPECT_EQ(all, iota_vec(n));
      EXPECT_LE(hi - lo, 1u);
      for (std::size_t f = 0; f < k; ++f) {
        const auto tp = a.training_portion(f);
        EXPECT_EQ(tp.size() + a.folds[f].size(), n);
        for (auto i : a.folds[f]) EXPECT_FALSE(std::binary_search(tp.begin(), tp.end(), i));
      }
    }
  }
}

TEST(CvFolds, TooFewSamples) {
  try {
    make_cv_folds(4, 5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TooFewSamples);
  }
}
