#pragma once

// FMCW MIMO frame synthesis: L-shaped Tx/Rx array, virtual channels,
// point-scatterer beat signals and the per-channel range profile.
//
// Receive model (stretch processing): a scatterer with round-trip delay tau
// produces the beat tone
//   s[n] = a * sigma * exp(j 2 pi (f_c tau + (B / T) tau n T / N)),  n < N,
// so its range profile peaks at bin B * tau = round-trip path / (c / B).
// With a monostatic-equivalent geometry that is range / (c / 2B).

#include "accor/dataset.hpp"
#include "accor/dft.hpp"
#include "accor/rng.hpp"

#include <array>
#include <optional>

namespace accor {

inline constexpr double kSpeedOfLight = 299'792'458.0;

class SceneError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Vec3 {
  double x = 0, y = 0, z = 0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool operator==(const Vec3&) const = default;
};

struct ChirpParams {
  double center_frequency = 64e9;  // Hz
  double bandwidth = 4e9;          // Hz
  std::size_t n_samples = 100;
  double amplitude = 1.0;
  double chirp_duration = 100e-6;  // s; cancels out of the beat model

  static ChirpParams for_band(Band band) {
    ChirpParams p;
    p.center_frequency = band_center_frequency(band);
    return p;
  }

  double range_resolution() const { return kSpeedOfLight / (2.0 * bandwidth); }

  /// Beat-frequency bin of a round-trip path length.
  double beat_bin(double round_trip) const { return bandwidth * round_trip / kSpeedOfLight; }

  /// Largest round-trip path whose tone stays inside the last bin.
  double max_round_trip() const { return static_cast<double>(n_samples - 1) * kSpeedOfLight / bandwidth; }

  void validate() const {
    if (!(bandwidth > 0)) throw SceneError("chirp bandwidth must be positive");
    if (n_samples < 2) throw SceneError("chirp needs at least 2 samples");
    if (!(amplitude > 0)) throw SceneError("chirp amplitude must be positive");
    if (!(center_frequency > 0) || !(chirp_duration > 0)) throw SceneError("chirp frequency and duration must be positive");
  }
};

inline Band nearest_band(double center_frequency) {
  return std::abs(center_frequency - 64e9) <= std::abs(center_frequency - 67e9) ? Band::ghz64 : Band::ghz67;
}

/// Tx elements on one line, Rx elements on the orthogonal line (Fig.-1 style L).
struct AntennaArray {
  std::vector<Vec3> tx_positions;
  std::vector<Vec3> rx_positions;
  double spacing = 0;

  /// Rx along x, Tx along y at the end of the Rx row, shifted so the virtual
  /// aperture is centred on the origin. The array plane is z = 0.
  static AntennaArray l_shaped(double spacing, std::size_t n_tx = 20, std::size_t n_rx = 20) {
    if (!(spacing > 0) || n_tx == 0 || n_rx == 0) throw SceneError("invalid L-array dimensions");
    AntennaArray a;
    a.spacing = spacing;
    for (std::size_t j = 0; j < n_rx; ++j) a.rx_positions.push_back({static_cast<double>(j) * spacing, 0, 0});
    for (std::size_t i = 0; i < n_tx; ++i) {
      a.tx_positions.push_back({static_cast<double>(n_rx) * spacing, -static_cast<double>(i + 1) * spacing, 0});
    }
    Vec3 centre;
    for (const auto& t : a.tx_positions)
      for (const auto& r : a.rx_positions) centre = centre + 0.5 * (t + r);
    centre = (1.0 / static_cast<double>(n_tx * n_rx)) * centre;
    for (auto& t : a.tx_positions) t = t - centre;
    for (auto& r : a.rx_positions) r = r - centre;
    return a;
  }

  /// Half-wavelength spacing at the band centre.
  static AntennaArray for_band(Band band, std::size_t n_tx = 20, std::size_t n_rx = 20) {
    return l_shaped(kSpeedOfLight / (2.0 * band_center_frequency(band)), n_tx, n_rx);
  }

  std::size_t channels() const { return tx_positions.size() * rx_positions.size(); }

  void validate() const {
    if (tx_positions.empty() || rx_positions.empty()) throw SceneError("antenna array needs Tx and Rx elements");
    auto on_line = [](const std::vector<Vec3>& pts, bool vary_x) {
      for (const auto& p : pts) {
        if (p.z != pts[0].z) return false;
        if (vary_x ? p.y != pts[0].y : p.x != pts[0].x) return false;
      }
      return true;
    };
    if (!on_line(rx_positions, true) || !on_line(tx_positions, false)) {
      throw SceneError("antenna array is not L-shaped (Rx along x, Tx along y)");
    }
  }
};

struct VirtualChannel {
  std::size_t index = 0;
  std::size_t tx = 0;
  std::size_t rx = 0;
  Vec3 tx_position;
  Vec3 rx_position;
  Vec3 midpoint;
};

/// Every (tx, rx) pair, tx-major: index = tx * n_rx + rx.
inline std::vector<VirtualChannel> build_virtual_array(const AntennaArray& array) {
  array.validate();
  std::vector<VirtualChannel> out;
  out.reserve(array.channels());
  for (std::size_t t = 0; t < array.tx_positions.size(); ++t)
    for (std::size_t r = 0; r < array.rx_positions.size(); ++r) {
      const Vec3 pt = array.tx_positions[t], pr = array.rx_positions[r];
      out.push_back({t * array.rx_positions.size() + r, t, r, pt, pr, 0.5 * (pt + pr)});
    }
  return out;
}

struct Scatterer {
  Vec3 position;
  Complex reflectivity{1.0, 0.0};
};

struct SceneConfig {
  std::string name;
  std::vector<Scatterer> scatterers;
  double box_attenuation = 1.0;
  std::optional<double> noise_snr_db;
  std::size_t class_label = 0;
};

namespace detail {

inline void check_scene(const SceneConfig& scene) {
  if (!(scene.box_attenuation > 0.0 && scene.box_attenuation <= 1.0)) {
    throw SceneError("scene '" + scene.name + "': box attenuation must lie in (0, 1]");
  }
  for (const auto& s : scene.scatterers) {
    if (!(s.position.z > 0.0)) throw SceneError("scene '" + scene.name + "': scatterer behind the array plane");
  }
}

}  // namespace detail

/// Synthesises one frame of shape (n_tx * n_rx, n_samples).
inline IQFrame simulate_frame(const SceneConfig& scene, const ChirpParams& chirp, const AntennaArray& array,
                              std::uint64_t seed) {
  chirp.validate();
  detail::check_scene(scene);
  const auto channels = build_virtual_array(array);
  const std::size_t n = chirp.n_samples;
  std::vector<Complex> data(channels.size() * n);
  const double slope = chirp.bandwidth / chirp.chirp_duration;
  const double dt = chirp.chirp_duration / static_cast<double>(n);
  const double gain = scene.box_attenuation * chirp.amplitude;
  for (const auto& ch : channels) {
    Complex* row = data.data() + ch.index * n;
    for (const auto& s : scene.scatterers) {
      const double path = (ch.tx_position - s.position).norm() + (ch.rx_position - s.position).norm();
      const double tau = path / kSpeedOfLight;
      const double carrier = chirp.center_frequency * tau;
      const double beat = slope * tau * dt;  // cycles per sample
      // Geometric progression in k; 100-term recurrences stay within ~1e-14.
      Complex phasor = gain * s.reflectivity * std::polar(1.0, 2.0 * std::numbers::pi * (carrier - std::floor(carrier)));
      const Complex step = std::polar(1.0, 2.0 * std::numbers::pi * (beat - std::floor(beat)));
      for (std::size_t k = 0; k < n; ++k) {
        row[k] += phasor;
        phasor *= step;
      }
    }
  }
  if (scene.noise_snr_db) {
    double power = 0;
    for (auto v : data) power += std::norm(v);
    power /= static_cast<double>(data.size());
    const double sigma = std::sqrt(power / std::pow(10.0, *scene.noise_snr_db / 10.0) / 2.0);
    Rng rng(derive_seed(seed, "noise"));
    Normal normal;
    for (auto& v : data) v += Complex{sigma * normal(rng), sigma * normal(rng)};
  }
  return {Tensor({channels.size(), n}, std::move(data)), scene.class_label, nearest_band(chirp.center_frequency)};
}

/// Per-channel DFT over the sample axis.
inline Tensor range_profile(const Tensor& frame) { return dft_1d(frame); }
inline Tensor range_profile(const IQFrame& frame) { return dft_1d(frame.data); }

struct JitterSpec {
  double position_sigma = 0.01;          // m, isotropic per coordinate
  double reflectivity_log_sigma = 0.1;   // log-normal magnitude factor
};

/// Rejects templates whose echoes would wrap past the last range bin.
inline void check_unambiguous(const SceneConfig& scene, const ChirpParams& chirp, const AntennaArray& array) {
  detail::check_scene(scene);
  for (const auto& ch : build_virtual_array(array))
    for (const auto& s : scene.scatterers) {
      const double path = (ch.tx_position - s.position).norm() + (ch.rx_position - s.position).norm();
      if (path > chirp.max_round_trip()) {
        throw SceneError("template '" + scene.name + "' aliases: round-trip path " + std::to_string(path) +
                         " m exceeds the unambiguous limit " + std::to_string(chirp.max_round_trip()) + " m (bin " +
                         std::to_string(chirp.beat_bin(path)) + " of " + std::to_string(chirp.n_samples) + ")");
      }
    }
}

/// per_class jittered frames for every template, ordered by template then
/// draw. Frame i uses sub-seeds of (seed xor i), so any subset can be
/// regenerated independently.
inline Dataset generate_dataset(const std::vector<SceneConfig>& templates, std::size_t per_class, const JitterSpec& jitter,
                                const ChirpParams& chirp, const AntennaArray& array, std::uint64_t seed) {
  if (templates.empty()) throw SceneError("generate_dataset: empty template list");
  if (templates.size() < 2) throw SceneError("generate_dataset: need at least 2 classes");
  if (per_class == 0) throw SceneError("generate_dataset: per_class must be >= 1");
  if (jitter.position_sigma < 0 || jitter.reflectivity_log_sigma < 0) throw SceneError("jitter sigmas must be >= 0");
  chirp.validate();
  std::vector<bool> seen(templates.size());
  for (const auto& t : templates) {
    if (t.class_label >= templates.size() || seen[t.class_label]) {
      throw SceneError("template '" + t.name + "' has a duplicate or out-of-range class label");
    }
    seen[t.class_label] = true;
    check_unambiguous(t, chirp, array);
  }

  Dataset ds;
  ds.header.band_ghz = static_cast<double>(static_cast<std::uint8_t>(nearest_band(chirp.center_frequency)));
  ds.header.n_tx = static_cast<std::uint32_t>(array.tx_positions.size());
  ds.header.n_rx = static_cast<std::uint32_t>(array.rx_positions.size());
  ds.header.n_samples_per_channel = static_cast<std::uint32_t>(chirp.n_samples);
  ds.header.n_classes = static_cast<std::uint32_t>(templates.size());
  ds.header.class_names.resize(templates.size());
  for (const auto& t : templates) ds.header.class_names[t.class_label] = t.name;

  for (std::size_t c = 0; c < templates.size(); ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::uint64_t frame_seed = seed ^ static_cast<std::uint64_t>(ds.frames.size());
      Rng rng(derive_seed(frame_seed, "jitter"));
      Normal normal;
      SceneConfig scene = templates[c];
      for (auto& s : scene.scatterers) {
        s.position = s.position + Vec3{jitter.position_sigma * normal(rng), jitter.position_sigma * normal(rng),
                                       jitter.position_sigma * normal(rng)};
        s.reflectivity *= std::exp(jitter.reflectivity_log_sigma * normal(rng));
        if (!(s.position.z > 0.0)) s.position.z = 1e-3;
      }
      ds.frames.push_back(simulate_frame(scene, chirp, array, frame_seed));
    }
  }
  ds.header.n_frames = static_cast<std::uint32_t>(ds.frames.size());
  return ds;
}

/// Ten packaged everyday objects at roughly 0.5 m below a top-mounted array.
/// Each object is a handful of point scatterers resting on the box floor,
/// plus weak returns from the box lid and floor. Lateral x/y, range z, metres.
inline std::vector<SceneConfig> default_object_templates(std::optional<double> snr_db = 20.0, double attenuation = 0.7) {
  constexpr double floor = 0.62;
  const auto ring = [](double radius, double z, std::size_t count, double amp, double phase_offset = 0.0) {
    std::vector<Scatterer> pts;
    for (std::size_t i = 0; i < count; ++i) {
      const double a = 2.0 * std::numbers::pi * (static_cast<double>(i) + phase_offset) / static_cast<double>(count);
      pts.push_back({{radius * std::cos(a), radius * std::sin(a), z}, amp});
    }
    return pts;
  };
  const auto line = [](double x0, double x1, double y, double z, std::size_t count, double amp) {
    std::vector<Scatterer> pts;
    for (std::size_t i = 0; i < count; ++i) {
      const double t = count == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(count - 1);
      pts.push_back({{x0 + t * (x1 - x0), y, z}, amp});
    }
    return pts;
  };
  auto join = [](std::initializer_list<std::vector<Scatterer>> parts) {
    std::vector<Scatterer> all;
    for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    return all;
  };

  const std::vector<Scatterer> box = {
      {{-0.10, -0.10, 0.45}, 0.08}, {{0.10, -0.10, 0.45}, 0.08}, {{-0.10, 0.10, 0.45}, 0.08},
      {{0.10, 0.10, 0.45}, 0.08},   {{0.0, 0.0, floor + 0.005}, 0.12}};

  std::vector<std::pair<std::string, std::vector<Scatterer>>> objects = {
      {"hammer", join({{{{0.08, 0.0, floor - 0.03}, 1.0}, {{0.08, 0.03, floor - 0.03}, 0.8}},
                       line(-0.10, 0.04, 0.0, floor - 0.015, 4, 0.3)})},
      {"screwdriver", join({{{{0.07, 0.0, floor - 0.012}, 0.7}, {{0.03, 0.0, floor - 0.012}, 0.5}},
                            line(-0.09, -0.04, 0.0, floor - 0.025, 2, 0.25)})},
      {"deodorant", join({line(-0.06, 0.06, 0.0, floor - 0.05, 3, 0.8),
                          {{{0.0, 0.025, floor - 0.025}, 0.4}, {{0.0, -0.025, floor - 0.025}, 0.4}}})},
      {"calculator", join({line(-0.04, 0.04, -0.03, floor - 0.015, 3, 0.45), line(-0.04, 0.04, 0.03, floor - 0.015, 3, 0.45),
                           {{{0.0, 0.0, floor - 0.02}, 0.6}}})},
      {"water_bottle", join({line(-0.10, 0.10, 0.0, floor - 0.07, 4, 0.5), {{{0.0, 0.0, floor - 0.035}, 0.9}}})},
      {"plastic_cup", join({ring(0.04, floor - 0.09, 6, 0.15), {{{0.0, 0.0, floor - 0.01}, 0.2}}})},
      {"coiled_cable", join({ring(0.06, floor - 0.02, 8, 0.35), ring(0.04, floor - 0.025, 6, 0.3, 0.5)})},
      {"ball", {{{0.0, 0.0, floor - 0.07}, 1.0}, {{0.02, 0.0, floor - 0.065}, 0.4}, {{-0.02, 0.0, floor - 0.065}, 0.4}}},
      {"mug", join({ring(0.04, floor - 0.10, 6, 0.45), {{{0.06, 0.0, floor - 0.06}, 0.5}, {{0.0, 0.0, floor - 0.01}, 0.3}}})},
      {"tape_roll", join({ring(0.05, floor - 0.05, 8, 0.5), ring(0.035, floor - 0.05, 6, 0.3, 0.5)})},
  };

  std::vector<SceneConfig> out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    SceneConfig s;
    s.name = objects[i].first;
    s.scatterers = box;
    s.scatterers.insert(s.scatterers.end(), objects[i].second.begin(), objects[i].second.end());
    s.box_attenuation = attenuation;
    s.noise_snr_db = snr_db;
    s.class_label = i;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace accor
