#pragma once

#include "accor/ctensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace accor {

enum class Band : std::uint8_t { ghz64 = 64, ghz67 = 67 };

inline double band_center_frequency(Band band) { return band == Band::ghz64 ? 64e9 : 67e9; }

inline Band band_from_ghz(double ghz) {
  if (ghz == 64.0) return Band::ghz64;
  if (ghz == 67.0) return Band::ghz67;
  throw std::invalid_argument("unsupported band " + std::to_string(ghz) + " GHz (expected 64 or 67)");
}

/// One radar shot: a (channels, samples) complex frame with its class.
struct IQFrame {
  Tensor data;
  std::size_t label = 0;
  Band band = Band::ghz64;
};

struct DatasetHeader {
  static constexpr std::uint16_t kVersion = 1;

  std::uint16_t version = kVersion;
  double band_ghz = 64.0;
  std::uint32_t n_rx = 20;
  std::uint32_t n_tx = 20;
  std::uint32_t n_samples_per_channel = 100;
  std::uint32_t n_frames = 0;
  std::uint32_t n_classes = 0;
  std::vector<std::string> class_names;

  std::size_t channels() const { return std::size_t{n_rx} * n_tx; }
  Shape frame_shape() const { return {channels(), n_samples_per_channel}; }

  bool operator==(const DatasetHeader&) const = default;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  DatasetHeader header;
  std::vector<IQFrame> frames;

  std::size_t size() const { return frames.size(); }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(header.n_classes);
    for (const auto& f : frames) counts.at(f.label)++;
    return counts;
  }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    out.reserve(frames.size());
    for (const auto& f : frames) out.push_back(f.label);
    return out;
  }

  /// Throws DatasetError when the header and frames disagree.
  void validate() const {
    if (header.n_classes < 2) throw DatasetError("dataset must declare at least 2 classes");
    if (!header.class_names.empty() && header.class_names.size() != header.n_classes) {
      throw DatasetError("class_names count does not match n_classes");
    }
    if (header.n_frames != frames.size()) throw DatasetError("header n_frames does not match frame count");
    const Shape expected = header.frame_shape();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      if (frames[i].data.shape() != expected) {
        throw DatasetError("frame " + std::to_string(i) + " has shape " + shape_str(frames[i].data.shape()) +
                           ", header declares " + shape_str(expected));
      }
      if (frames[i].label >= header.n_classes) {
        throw DatasetError("frame " + std::to_string(i) + " label " + std::to_string(frames[i].label) +
                           " out of range for " + std::to_string(header.n_classes) + " classes");
      }
    }
  }
};

}  // namespace accor
