#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "rawradar/dataset_io.hpp"
#include "rawradar/frame.hpp"
#include "rawradar/radar_config.hpp"
#include "rawradar/scene.hpp"

namespace rawradar {

inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

// Beat-signal sample of one point target at fast-time index m, chirp n and
// receive antenna rx.
double target_sample(const PointTarget& t, const RadarConfig& cfg, int m, int n, int rx);

// Superposition of all targets plus white Gaussian noise. The noise variance
// is set so the strongest target's per-sample SNR equals noise_snr_db (unit
// reference amplitude for an empty scene). noise_snr_db = kNoNoise disables it.
Frame synth_frame(const std::vector<PointTarget>& targets, const RadarConfig& cfg, double noise_snr_db,
                  std::uint64_t seed);

// Uniform quantizer with 2^bits levels spanning the frame's own min/max.
Frame quantize_adc(const Frame& frame, int bits);

struct GridOptions {
  double noise_snr_db = kNoNoise;
  bool quantize = false;
  // When nonzero each cell draws a radial velocity uniformly from
  // [-max_velocity, max_velocity]; zero gives stationary targets.
  double max_velocity = 0.0;
  std::uint64_t seed = 1;
};

// Range positions (m) of the default synthetic grid for a config: the full
// profile spans delta_r .. R_max in delta_r steps, smaller grids spread over
// the same span on whole bins.
std::vector<double> default_grid_ranges(const RadarConfig& cfg, int n_positions);
std::vector<double> default_grid_angles(const RadarConfig& cfg, int n_positions);

// One single-target example per (range, angle) pair, range-major.
std::vector<LabeledExample> grid_examples(const RadarConfig& cfg, const std::vector<double>& ranges,
                                          const std::vector<double>& angles, const GridOptions& opts);

DatasetManifest generate_grid_dataset(const RadarConfig& cfg, const std::vector<double>& ranges,
                                      const std::vector<double>& angles, const std::filesystem::path& out_dir,
                                      const GridOptions& opts = {});

}  // namespace rawradar
