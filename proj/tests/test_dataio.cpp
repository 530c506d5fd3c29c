#include "accor/dataio.hpp"
#include "accor/signal.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace accor;
using oracle::C;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "accor_test_dataio";
  fs::create_directories(dir);
  return dir / name;
}

Dataset random_dataset(std::size_t frames, std::size_t n_tx, std::size_t n_rx, std::size_t n, unsigned seed) {
  Dataset ds;
  ds.header.n_tx = static_cast<std::uint32_t>(n_tx);
  ds.header.n_rx = static_cast<std::uint32_t>(n_rx);
  ds.header.n_samples_per_channel = static_cast<std::uint32_t>(n);
  ds.header.n_classes = 3;
  ds.header.class_names = {"a", "bb", "ccc"};
  for (std::size_t f = 0; f < frames; ++f) {
    auto v = oracle::random_values(n_tx * n_rx * n, seed + static_cast<unsigned>(f));
    for (auto& x : v) x *= 1000.0;
    ds.frames.push_back({Tensor({n_tx * n_rx, n}, v), f % 3, f % 2 ? Band::ghz67 : Band::ghz64});
  }
  ds.header.n_frames = static_cast<std::uint32_t>(frames);
  return ds;
}

void expect_equal_at_f32(const Dataset& a, const Dataset& b) {
  EXPECT_EQ(a.header, b.header);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t f = 0; f < a.size(); ++f) {
    EXPECT_EQ(a.frames[f].label, b.frames[f].label);
    EXPECT_EQ(a.frames[f].band, b.frames[f].band);
    for (std::size_t i = 0; i < a.frames[f].data.numel(); ++i) {
      const C x = a.frames[f].data[i], y = b.frames[f].data[i];
      EXPECT_EQ(static_cast<float>(x.real()), y.real());
      EXPECT_EQ(static_cast<float>(x.imag()), y.imag());
    }
  }
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void dump(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string error_of(const fs::path& p) {
  try {
    read_dataset(p);
  } catch (const DatasetError& e) {
    return e.what();
  }
  return "";
}

KeyValueConfig layout_text(const std::string& encoding, const std::string& dtype, const std::string& order,
                           const std::string& shape = "400x100") {
  return KeyValueConfig::parse("shape = " + shape + "\nencoding = " + encoding + "\ndtype = " + dtype +
                               "\nbyte_order = " + order + "\nlabel_map = hammer:0, cup:1\nband = 67\n");
}

}  // namespace

TEST(DatasetFile, EmptyDatasetRoundTrips) {
  const auto ds = random_dataset(0, 20, 20, 100, 1);
  write_dataset(ds, scratch("empty.bin"));
  const auto back = read_dataset(scratch("empty.bin"));
  EXPECT_EQ(back.header, ds.header);
  EXPECT_EQ(back.size(), 0u);
}

TEST(DatasetFile, SyntheticFrameRoundTripsToF32Precision) {
  auto templates = default_object_templates();
  const auto ds = generate_dataset(templates, 1, JitterSpec{}, ChirpParams{}, AntennaArray::for_band(Band::ghz64), 4);
  write_dataset(ds, scratch("synthetic.bin"));
  const auto back = read_dataset(scratch("synthetic.bin"));
  expect_equal_at_f32(ds, back);
  for (std::size_t i = 0; i < ds.frames[0].data.numel(); ++i) {
    const C x = ds.frames[0].data[i], y = back.frames[0].data[i];
    EXPECT_LE(std::abs(x.real() - y.real()), 1e-6 * std::abs(x.real()));
    EXPECT_LE(std::abs(x.imag() - y.imag()), 1e-6 * std::abs(x.imag()));
  }
}

TEST(DatasetFile, RandomDatasetsRoundTrip) {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto ds = random_dataset(1 + seed, 1 + seed % 3, 2 + seed % 2, 5 + seed, 100 * seed);
    write_dataset(ds, scratch("random.bin"));
    expect_equal_at_f32(ds, read_dataset(scratch("random.bin")));
  }
}

TEST(DatasetFile, RewriteIsByteIdentical) {
  const auto ds = random_dataset(4, 2, 3, 10, 9);
  write_dataset(ds, scratch("a.bin"));
  write_dataset(read_dataset(scratch("a.bin")), scratch("b.bin"));
  EXPECT_EQ(slurp(scratch("a.bin")), slurp(scratch("b.bin")));
}

TEST(DatasetFile, CorruptMagicRejected) {
  write_dataset(random_dataset(2, 2, 2, 4, 2), scratch("magic.bin"));
  auto bytes = slurp(scratch("magic.bin"));
  bytes[3] = 'X';
  dump(scratch("magic.bin"), bytes);
  EXPECT_NE(error_of(scratch("magic.bin")).find("magic"), std::string::npos);
}

TEST(DatasetFile, TruncationNamesTheFrame) {
  const auto ds = random_dataset(3, 2, 2, 4, 3);
  write_dataset(ds, scratch("trunc.bin"));
  auto bytes = slurp(scratch("trunc.bin"));
  const std::size_t frame_bytes = 3 + 8 * 16;
  bytes.resize(bytes.size() - frame_bytes / 2);
  dump(scratch("trunc.bin"), bytes);
  const auto msg = error_of(scratch("trunc.bin"));
  EXPECT_NE(msg.find("frame 2"), std::string::npos) << msg;
  bytes.resize(20);
  dump(scratch("trunc.bin"), bytes);
  EXPECT_FALSE(error_of(scratch("trunc.bin")).empty());
}

TEST(DatasetFile, PayloadLengthMismatchRejected) {
  // A file whose frames hold 400x99 samples under a header declaring 400x100.
  auto short_frames = random_dataset(2, 20, 20, 99, 5);
  write_dataset(short_frames, scratch("mismatch.bin"));
  auto bytes = slurp(scratch("mismatch.bin"));
  const std::uint32_t declared = 100;
  std::memcpy(&bytes[8 + 2 + 8 + 4 + 4], &declared, 4);
  dump(scratch("mismatch.bin"), bytes);
  EXPECT_FALSE(error_of(scratch("mismatch.bin")).empty());
  // And the converse: declaring fewer samples than stored.
  auto long_frames = random_dataset(1, 20, 20, 101, 6);
  write_dataset(long_frames, scratch("mismatch.bin"));
  bytes = slurp(scratch("mismatch.bin"));
  std::memcpy(&bytes[8 + 2 + 8 + 4 + 4], &declared, 4);
  dump(scratch("mismatch.bin"), bytes);
  EXPECT_NE(error_of(scratch("mismatch.bin")).find("400x100"), std::string::npos);
}

TEST(DatasetFile, LabelOutOfRangeRejected) {
  write_dataset(random_dataset(1, 1, 1, 2, 7), scratch("label.bin"));
  auto bytes = slurp(scratch("label.bin"));
  const std::size_t header = 8 + 2 + 8 + 5 * 4 + (4 + 1) + (4 + 2) + (4 + 3);
  bytes[header] = 9;
  dump(scratch("label.bin"), bytes);
  EXPECT_NE(error_of(scratch("label.bin")).find("label"), std::string::npos);
}

TEST(DatasetFile, InvalidDatasetNotWritten) {
  auto ds = random_dataset(2, 1, 1, 2, 8);
  ds.frames[1].label = 3;
  EXPECT_THROW(write_dataset(ds, scratch("invalid.bin")), DatasetError);
}

// ---------------------------------------------------------------------------

TEST(Import, PlanarMatchesInterleaved) {
  const Tensor frame = oracle::random_tensor({400, 100}, 10);
  const auto inter = ImportLayout::parse(layout_text("interleaved", "float64", "little"));
  const auto planar = ImportLayout::parse(layout_text("planar", "float64", "little"));
  const Tensor a = decode_frame(export_frame(frame, inter), inter);
  const Tensor b = decode_frame(export_frame(frame, planar), planar);
  EXPECT_EQ(oracle::max_abs_diff(a.data(), b.data()), 0.0);
  EXPECT_EQ(oracle::max_abs_diff(a.data(), frame.data()), 0.0);
}

TEST(Import, EveryLayoutRoundTrips) {
  auto v = oracle::random_values(400 * 100, 11);
  for (auto& x : v) x = C(std::round(x.real() * 3000.0), std::round(x.imag() * 3000.0));
  const Tensor frame({400, 100}, v);
  for (const char* enc : {"interleaved", "planar"})
    for (const char* dtype : {"float32", "float64", "int16"})
      for (const char* order : {"little", "big"}) {
        const auto layout = ImportLayout::parse(layout_text(enc, dtype, order));
        const Tensor back = decode_frame(export_frame(frame, layout), layout);
        EXPECT_EQ(oracle::max_abs_diff(back.data(), frame.data()), 0.0) << enc << dtype << order;
      }
}

TEST(Import, BigEndianBytesDiffer) {
  const Tensor frame = oracle::random_tensor({400, 100}, 12);
  const auto le = ImportLayout::parse(layout_text("interleaved", "float32", "little"));
  const auto be = ImportLayout::parse(layout_text("interleaved", "float32", "big"));
  auto a = export_frame(frame, le), b = export_frame(frame, be);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_TRUE(std::equal(a.begin(), a.begin() + 4, b.rbegin() + static_cast<long>(b.size() - 4)));
}

TEST(Import, DirectoryOfRecordings) {
  const fs::path dir = scratch("external");
  fs::remove_all(dir);
  fs::create_directories(dir / "cup");
  const auto layout = ImportLayout::parse(layout_text("planar", "int16", "big"));
  std::vector<Tensor> frames;
  for (unsigned k = 0; k < 3; ++k) {
    auto v = oracle::random_values(400 * 100, 20 + k);
    for (auto& x : v) x = C(std::round(x.real() * 100.0), std::round(x.imag() * 100.0));
    frames.emplace_back(Shape{400, 100}, v);
  }
  auto put = [&](const fs::path& p, std::initializer_list<std::size_t> ids) {
    std::ofstream os(p, std::ios::binary);
    for (auto i : ids) {
      const auto bytes = export_frame(frames[i], layout);
      os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
  };
  put(dir / "cup" / "take1.raw", {0});
  put(dir / "hammer_01.raw", {1, 2});
  const auto ds = import_external(dir, layout);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.header.band_ghz, 67.0);
  EXPECT_EQ(ds.frames[0].label, 1u);
  EXPECT_EQ(ds.frames[1].label, 0u);
  EXPECT_EQ(ds.frames[2].label, 0u);
  EXPECT_EQ(ds.frames[0].band, Band::ghz67);
  EXPECT_EQ(oracle::max_abs_diff(ds.frames[0].data.data(), frames[0].data()), 0.0);
  EXPECT_EQ(oracle::max_abs_diff(ds.frames[2].data.data(), frames[2].data()), 0.0);
}

TEST(Import, WrongChannelCountRejected) {
  const auto layout = ImportLayout::parse(layout_text("interleaved", "float32", "little", "399x100"));
  EXPECT_THROW(import_external(scratch("external"), layout), ShapeError);
  const auto ok = ImportLayout::parse(layout_text("interleaved", "float32", "little"));
  const fs::path odd = scratch("odd_size");
  fs::remove_all(odd);
  fs::create_directories(odd);
  std::ofstream(odd / "cup_1.raw", std::ios::binary) << "not a frame";
  EXPECT_THROW(import_external(odd, ok), ShapeError);
}

TEST(Import, LayoutErrors) {
  EXPECT_THROW(ImportLayout::parse(layout_text("zigzag", "float32", "little")), ConfigError);
  EXPECT_THROW(ImportLayout::parse(layout_text("planar", "float16", "little")), ConfigError);
  EXPECT_THROW(ImportLayout::parse(layout_text("planar", "float32", "middle")), ConfigError);
  EXPECT_THROW(ImportLayout::parse(KeyValueConfig::parse("shape = 400x100\nlabel_map = a:0, b:1\ncolour = red\n")),
               ConfigError);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> balanced_labels(std::size_t classes, std::size_t per_class) {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t k = 0; k < per_class; ++k) labels.push_back(c);
  return labels;
}

}  // namespace

TEST(Split, StratifiedEightyTwenty) {
  const auto labels = balanced_labels(10, 200);
  const auto split = split_train_test(labels, {0.8, 42, true});
  EXPECT_EQ(split.train.size(), 1600u);
  EXPECT_EQ(split.test.size(), 400u);
  std::vector<std::size_t> train_count(10), test_count(10);
  for (auto i : split.train) train_count[labels[i]]++;
  for (auto i : split.test) test_count[labels[i]]++;
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_EQ(train_count[c], 160u);
    EXPECT_EQ(test_count[c], 40u);
  }
}

TEST(Split, PartitionAndDeterminism) {
  std::mt19937 gen(13);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> labels(5 + gen() % 60);
    for (auto& l : labels) l = gen() % 4;
    const double fraction = 0.1 + 0.8 * (gen() % 1000) / 1000.0;
    for (bool stratified : {true, false}) {
      const SplitSpec spec{fraction, gen(), stratified};
      const auto s = split_train_test(labels, spec);
      std::set<std::size_t> all(s.train.begin(), s.train.end());
      for (auto i : s.test) EXPECT_TRUE(all.insert(i).second) << "index in both sets";
      EXPECT_EQ(all.size(), labels.size());
      EXPECT_FALSE(s.test.empty());
      const auto again = split_train_test(labels, spec);
      EXPECT_EQ(again.train, s.train);
      EXPECT_EQ(again.test, s.test);
      if (!stratified) continue;
      std::vector<double> total(4), train(4);
      for (auto l : labels) total[l]++;
      for (auto i : s.train) train[labels[i]]++;
      for (std::size_t c = 0; c < 4; ++c) EXPECT_LE(std::abs(train[c] - fraction * total[c]), 1.0 + 1e-9);
    }
  }
}

TEST(Split, SeedChangesAssignment) {
  const auto labels = balanced_labels(4, 25);
  EXPECT_NE(split_train_test(labels, {0.8, 1, true}).test, split_train_test(labels, {0.8, 2, true}).test);
}

TEST(Split, TestSetNeverEmpty) {
  const auto labels = balanced_labels(2, 5);
  const auto s = split_train_test(labels, {0.999, 0, true});
  EXPECT_GE(s.test.size(), 1u);
  EXPECT_EQ(s.train.size() + s.test.size(), 10u);
}

TEST(Split, FractionOutsideRangeRejected) {
  const auto labels = balanced_labels(2, 5);
  EXPECT_THROW(split_train_test(labels, {1.0, 0, true}), std::invalid_argument);
  EXPECT_THROW(split_train_test(labels, {0.0, 0, true}), std::invalid_argument);
  EXPECT_THROW(split_train_test(std::vector<std::size_t>{}, {0.5, 0, true}), std::invalid_argument);
}
