#pragma once

// Dataset container file, layout-driven import of external IQ recordings,
// and train/test splitting.
//
// Container layout, little-endian throughout:
//   magic "ACCORIQ1" | u16 version | f64 band_ghz | u32 n_rx | u32 n_tx
//   | u32 n_samples_per_channel | u32 n_frames | u32 n_classes
//   | n_classes x (u32 length + UTF-8 class name)
//   | n_frames x (u16 label | u8 band tag | f32 I0 Q0 I1 Q1 ... channel-major)

#include "accor/binary.hpp"
#include "accor/config.hpp"
#include "accor/dataset.hpp"
#include "accor/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

namespace accor {

inline constexpr char kDatasetMagic[8] = {'A', 'C', 'C', 'O', 'R', 'I', 'Q', '1'};

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  const auto& h = ds.header;
  if (ds.frames.size() > std::numeric_limits<std::uint32_t>::max() ||
      h.n_classes > std::size_t{std::numeric_limits<std::uint16_t>::max()} + 1) {
    throw DatasetError("dataset extents exceed the container limits");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot open '" + path.string() + "' for writing");
  os.write(kDatasetMagic, sizeof(kDatasetMagic));
  binary::put<std::uint16_t>(os, DatasetHeader::kVersion);
  binary::put<double>(os, h.band_ghz);
  binary::put<std::uint32_t>(os, h.n_rx);
  binary::put<std::uint32_t>(os, h.n_tx);
  binary::put<std::uint32_t>(os, h.n_samples_per_channel);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.frames.size()));
  binary::put<std::uint32_t>(os, h.n_classes);
  for (std::uint32_t c = 0; c < h.n_classes; ++c) {
    binary::put_string(os, h.class_names.empty() ? "class_" + std::to_string(c) : h.class_names[c]);
  }
  std::vector<unsigned char> payload(ds.frames.empty() ? 0 : ds.frames[0].data.numel() * 8);
  for (const auto& f : ds.frames) {
    binary::put<std::uint16_t>(os, static_cast<std::uint16_t>(f.label));
    binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(f.band));
    const auto v = f.data.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      binary::encode<float>(static_cast<float>(v[i].real()), &payload[8 * i]);
      binary::encode<float>(static_cast<float>(v[i].imag()), &payload[8 * i + 4]);
    }
    os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  }
  if (!os.flush()) throw DatasetError("write to '" + path.string() + "' failed");
}

inline Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open dataset '" + path.string() + "'");
  const auto file_size = std::filesystem::file_size(path);
  char magic[8];
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kDatasetMagic)) {
    throw DatasetError("'" + path.string() + "' is not an ACCORIQ1 dataset (bad magic)");
  }
  Dataset ds;
  auto& h = ds.header;
  bool ok = binary::get(is, h.version);
  if (ok && h.version != DatasetHeader::kVersion) {
    throw DatasetError("unsupported dataset version " + std::to_string(h.version));
  }
  ok = ok && binary::get(is, h.band_ghz) && binary::get(is, h.n_rx) && binary::get(is, h.n_tx) &&
       binary::get(is, h.n_samples_per_channel) && binary::get(is, h.n_frames) && binary::get(is, h.n_classes);
  if (!ok) throw DatasetError("dataset header truncated");
  if (h.n_classes < 2 || h.n_classes > 65536) throw DatasetError("dataset header declares invalid class count");
  h.class_names.resize(h.n_classes);
  for (auto& name : h.class_names) {
    if (!binary::get_string(is, name)) throw DatasetError("dataset header truncated in class names");
  }
  const std::size_t values = std::size_t{h.n_rx} * h.n_tx * h.n_samples_per_channel;
  const std::size_t frame_bytes = 3 + 8 * values;
  const auto header_bytes = static_cast<std::uintmax_t>(is.tellg());
  const std::uintmax_t expected = header_bytes + std::uintmax_t{h.n_frames} * frame_bytes;
  if (file_size < expected) {
    const auto complete = (file_size - header_bytes) / frame_bytes;
    throw DatasetError("dataset truncated: frame " + std::to_string(complete) + " of " + std::to_string(h.n_frames) +
                       " is incomplete");
  }
  if (file_size > expected) {
    throw DatasetError("frame payload length does not match header shape (" + std::to_string(h.n_rx * h.n_tx) + "x" +
                       std::to_string(h.n_samples_per_channel) + "): " + std::to_string(file_size - expected) +
                       " unexpected bytes");
  }
  std::vector<unsigned char> payload(8 * values);
  ds.frames.reserve(h.n_frames);
  for (std::uint32_t i = 0; i < h.n_frames; ++i) {
    std::uint16_t label = 0;
    std::uint8_t band = 0;
    if (!binary::get(is, label) || !binary::get(is, band) ||
        !is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()))) {
      throw DatasetError("dataset truncated: frame " + std::to_string(i) + " is incomplete");
    }
    if (label >= h.n_classes) {
      throw DatasetError("frame " + std::to_string(i) + " label " + std::to_string(label) + " out of range");
    }
    if (band != 64 && band != 67) throw DatasetError("frame " + std::to_string(i) + " has unknown band tag");
    std::vector<Complex> data(values);
    for (std::size_t k = 0; k < values; ++k) {
      data[k] = {binary::decode<float>(&payload[8 * k]), binary::decode<float>(&payload[8 * k + 4])};
    }
    ds.frames.push_back({Tensor(h.frame_shape(), std::move(data)), label, static_cast<Band>(band)});
  }
  return ds;
}

// ---------------------------------------------------------------------------
// External layouts

enum class ComplexEncoding { interleaved, planar };
enum class SampleType { float32, float64, int16 };

/// Describes how an external recording stores frames. Text form:
///   shape = 400x100
///   encoding = interleaved | planar      (planar: all I, then all Q)
///   dtype = float32 | float64 | int16
///   byte_order = little | big
///   label_map = hammer:0, screwdriver:1, ...
///   band = 64                             (optional)
struct ImportLayout {
  std::size_t channels = 400;
  std::size_t samples = 100;
  ComplexEncoding encoding = ComplexEncoding::interleaved;
  SampleType dtype = SampleType::float32;
  bool big_endian = false;
  std::vector<std::pair<std::string, std::size_t>> label_map;
  double band_ghz = 64.0;

  std::size_t sample_bytes() const { return dtype == SampleType::float64 ? 8 : dtype == SampleType::float32 ? 4 : 2; }
  std::size_t frame_bytes() const { return 2 * channels * samples * sample_bytes(); }

  static ImportLayout parse(const KeyValueConfig& cfg) {
    cfg.check_keys({"shape", "encoding", "dtype", "byte_order", "label_map", "band"});
    ImportLayout l;
    const auto dims = KeyValueConfig::split(cfg.require("shape"), 'x');
    if (dims.size() != 2) throw ConfigError("layout shape must be <channels>x<samples>");
    l.channels = std::stoul(dims[0]);
    l.samples = std::stoul(dims[1]);
    const auto enc = KeyValueConfig::trim(cfg.get_string("encoding", "interleaved"));
    if (enc == "interleaved") l.encoding = ComplexEncoding::interleaved;
    else if (enc == "planar") l.encoding = ComplexEncoding::planar;
    else throw ConfigError("unknown complex encoding '" + enc + "'");
    const auto dt = KeyValueConfig::trim(cfg.get_string("dtype", "float32"));
    if (dt == "float32") l.dtype = SampleType::float32;
    else if (dt == "float64") l.dtype = SampleType::float64;
    else if (dt == "int16") l.dtype = SampleType::int16;
    else throw ConfigError("unknown dtype '" + dt + "'");
    const auto bo = KeyValueConfig::trim(cfg.get_string("byte_order", "little"));
    if (bo != "little" && bo != "big") throw ConfigError("unknown byte_order '" + bo + "'");
    l.big_endian = bo == "big";
    for (const auto& item : KeyValueConfig::split(cfg.require("label_map"), ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("label_map entry '" + item + "' is not name:label");
      l.label_map.emplace_back(KeyValueConfig::trim(item.substr(0, colon)),
                               std::stoul(KeyValueConfig::trim(item.substr(colon + 1))));
    }
    if (l.label_map.size() < 2) throw ConfigError("label_map needs at least 2 classes");
    l.band_ghz = cfg.get_double("band", 64.0);
    return l;
  }
};

/// Encodes one frame in an external layout (the inverse of decoding).
inline std::vector<unsigned char> export_frame(const Tensor& frame, const ImportLayout& layout) {
  if (frame.shape() != Shape{layout.channels, layout.samples}) throw ShapeError("export_frame: frame shape mismatch");
  const std::size_t n = frame.numel(), w = layout.sample_bytes();
  std::vector<unsigned char> out(layout.frame_bytes());
  auto put = [&](double v, std::size_t slot) {
    unsigned char* p = &out[slot * w];
    switch (layout.dtype) {
      case SampleType::float32: binary::encode<float>(static_cast<float>(v), p, layout.big_endian); break;
      case SampleType::float64: binary::encode<double>(v, p, layout.big_endian); break;
      case SampleType::int16:
        binary::encode<std::int16_t>(static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L)), p,
                                     layout.big_endian);
        break;
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Complex v = frame[i];
    if (layout.encoding == ComplexEncoding::interleaved) {
      put(v.real(), 2 * i);
      put(v.imag(), 2 * i + 1);
    } else {
      put(v.real(), i);
      put(v.imag(), n + i);
    }
  }
  return out;
}

inline Tensor decode_frame(std::span<const unsigned char> bytes, const ImportLayout& layout) {
  if (bytes.size() != layout.frame_bytes()) throw ShapeError("decode_frame: byte count does not match layout");
  const std::size_t n = layout.channels * layout.samples, w = layout.sample_bytes();
  auto get = [&](std::size_t slot) -> double {
    const unsigned char* p = &bytes[slot * w];
    switch (layout.dtype) {
      case SampleType::float32: return binary::decode<float>(p, layout.big_endian);
      case SampleType::float64: return binary::decode<double>(p, layout.big_endian);
      case SampleType::int16: return binary::decode<std::int16_t>(p, layout.big_endian);
    }
    return 0.0;
  };
  std::vector<Complex> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = layout.encoding == ComplexEncoding::interleaved ? Complex{get(2 * i), get(2 * i + 1)}
                                                              : Complex{get(i), get(n + i)};
  }
  return Tensor({layout.channels, layout.samples}, std::move(data));
}

/// Imports every regular file under `path` (sorted by path). A file holds
/// one or more back-to-back frames; its label comes from the label_map entry
/// matching its parent directory name or the file-name prefix before the
/// first '_' or '-'.
inline Dataset import_external(const std::filesystem::path& path, const ImportLayout& layout, std::size_t n_tx = 20,
                               std::size_t n_rx = 20) {
  if (layout.channels != n_tx * n_rx) {
    throw ShapeError("layout declares " + std::to_string(layout.channels) + " channels, array has " +
                     std::to_string(n_tx * n_rx) + " (" + std::to_string(n_tx) + " Tx x " + std::to_string(n_rx) + " Rx)");
  }
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
  } else if (std::filesystem::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw DatasetError("import path '" + path.string() + "' does not exist");
  }
  std::sort(files.begin(), files.end());

  std::size_t n_classes = 0;
  for (const auto& [name, label] : layout.label_map) n_classes = std::max(n_classes, label + 1);
  Dataset ds;
  ds.header.band_ghz = layout.band_ghz;
  ds.header.n_tx = static_cast<std::uint32_t>(n_tx);
  ds.header.n_rx = static_cast<std::uint32_t>(n_rx);
  ds.header.n_samples_per_channel = static_cast<std::uint32_t>(layout.samples);
  ds.header.n_classes = static_cast<std::uint32_t>(n_classes);
  ds.header.class_names.assign(n_classes, "");
  for (const auto& [name, label] : layout.label_map) ds.header.class_names[label] = name;
  const Band band = band_from_ghz(layout.band_ghz);

  auto label_of = [&](const std::filesystem::path& f) -> std::size_t {
    const std::string parent = f.parent_path().filename().string();
    const std::string stem = f.stem().string();
    const std::string prefix = stem.substr(0, stem.find_first_of("_-"));
    for (const auto& [name, label] : layout.label_map) {
      if (name == parent || name == prefix || name == stem) return label;
    }
    throw DatasetError("no label_map entry matches '" + f.string() + "'");
  };

  for (const auto& f : files) {
    const auto size = std::filesystem::file_size(f);
    if (size == 0 || size % layout.frame_bytes() != 0) {
      throw ShapeError("'" + f.string() + "' size " + std::to_string(size) + " is not a multiple of the declared " +
                       std::to_string(layout.channels) + "x" + std::to_string(layout.samples) + " frame (" +
                       std::to_string(layout.frame_bytes()) + " bytes)");
    }
    const std::size_t label = label_of(f);
    std::ifstream is(f, std::ios::binary);
    std::vector<unsigned char> buf(layout.frame_bytes());
    for (std::uintmax_t k = 0; k < size / layout.frame_bytes(); ++k) {
      if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
        throw DatasetError("short read in '" + f.string() + "'");
      }
      ds.frames.push_back({decode_frame(buf, layout), label, band});
    }
  }
  ds.header.n_frames = static_cast<std::uint32_t>(ds.frames.size());
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Disjoint, exhaustive train/test index sets. Stratified mode allocates
/// round(fraction * N) training frames across classes by largest remainder
/// (ties to the lower class). The test set always gets at least one frame.
inline Split split_train_test(std::span<const std::size_t> labels, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie in (0, 1)");
  }
  if (labels.empty()) throw std::invalid_argument("cannot split an empty dataset");
  const std::size_t total = labels.size();
  std::size_t train_total = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(total) + 0.5));
  train_total = std::min(train_total, total - 1);

  std::vector<std::vector<std::size_t>> groups;
  if (spec.stratified) {
    const std::size_t n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
    groups.resize(n_classes);
    for (std::size_t i = 0; i < total; ++i) groups[labels[i]].push_back(i);
  } else {
    groups.resize(1);
    for (std::size_t i = 0; i < total; ++i) groups[0].push_back(i);
  }

  std::vector<std::size_t> quota(groups.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double exact = spec.train_fraction * static_cast<double>(groups[g].size());
    quota[g] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[g];
    remainders.emplace_back(exact - std::floor(exact), g);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < train_total && i < remainders.size(); ++i) {
    const std::size_t g = remainders[i].second;
    if (quota[g] < groups[g].size()) {
      ++quota[g];
      ++assigned;
    }
  }
  while (assigned > train_total) {
    // Only reachable through the test-set boundary rule: take from the
    // largest training quota.
    const auto g = static_cast<std::size_t>(std::max_element(quota.begin(), quota.end()) - quota.begin());
    --quota[g];
    --assigned;
  }

  Split split;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto members = groups[g];
    Rng rng(derive_seed(spec.seed, "split", g));
    shuffle(members, rng);
    split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[g]));
    split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[g]), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

inline Split split_train_test(const Dataset& ds, const SplitSpec& spec) {
  const auto labels = ds.labels();
  return split_train_test(labels, spec);
}

}  // namespace accor
