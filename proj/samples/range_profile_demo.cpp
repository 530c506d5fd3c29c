// Simulates one frame with a point target and prints the range profile of
// channel 0 together with the peak bin of every virtual channel.
//
//   sample_range_profile [range_m] [band_ghz]

#include "accor/signal.hpp"

#include <cstdio>
#include <cstdlib>
#include <map>

int main(int argc, char** argv) {
  using namespace accor;
  const double range = argc > 1 ? std::atof(argv[1]) : 0.375;
  const Band band = band_from_ghz(argc > 2 ? std::atof(argv[2]) : 64.0);
  const auto chirp = ChirpParams::for_band(band);
  const auto array = AntennaArray::for_band(band);

  SceneConfig scene;
  scene.name = "point";
  scene.scatterers.push_back({{0, 0, range}, 1.0});
  const IQFrame frame = simulate_frame(scene, chirp, array, 1);
  const Tensor profile = range_profile(frame);
  const std::size_t n = chirp.n_samples;

  std::printf("range %.3f m, resolution %.4f m, expected bin %.2f\n", range, chirp.range_resolution(),
              range / chirp.range_resolution());
  double peak = 0;
  for (std::size_t k = 0; k < n; ++k) peak = std::max(peak, std::abs(profile[k]));
  for (std::size_t k = 0; k < n / 2; ++k) {
    const int bar = static_cast<int>(50.0 * std::abs(profile[k]) / peak);
    std::printf("%3zu %6.3f m |%.*s\n", k, k * chirp.range_resolution(), bar,
                "##################################################");
  }

  std::map<std::size_t, std::size_t> peaks;
  for (std::size_t c = 0; c < profile.dim(0); ++c) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < n; ++k)
      if (std::abs(profile[c * n + k]) > std::abs(profile[c * n + best])) best = k;
    ++peaks[best];
  }
  for (const auto& [bin, count] : peaks) std::printf("peak bin %zu: %zu channels\n", bin, count);
}
