#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rawradar/dataset_io.hpp"
#include "rawradar/scene.hpp"
#include "rawradar/synth.hpp"

namespace rawradar {

// Affine map of the whole frame sending its minimum to 0 and maximum to 1.
Frame normalize_frame(const Frame& frame);

// Elementwise sum of raw frames, OR of label masks, concatenated truth.
LabeledExample superpose(const std::vector<LabeledExample>& examples);

// Range translation by a fast-time frequency shift of the analytic signal.
// The label mask moves by round(delta_m / delta_r) range bins.
LabeledExample range_shift_augment(const LabeledExample& example, double delta_m, const RadarConfig& cfg);

// Measurement-style single-person recordings: a walking main scatterer with
// two weaker limb returns, static room clutter, antenna leakage and noise.
struct WalkOptions {
  int count = 200;
  double noise_snr_db = 15.0;
  double min_speed = 0.3;   // m/s
  double max_speed = 1.0;   // m/s
  double limb_amplitude = 0.25;
  double clutter_amplitude = 0.6;
  bool quantize = true;
  double test_fraction = 0.2;  // members tagged "test" are never used for training
  std::uint64_t seed = 7;
};

std::vector<LabeledExample> walk_pool(const RadarConfig& cfg, const WalkOptions& opts);

// Pool of single-target examples tagged "test" or anything else (training side).
struct CorpusOptions {
  // Examples requested per target count 1..4, for the training and test sides.
  std::array<int, 4> train_per_count{200, 200, 200, 200};
  std::array<int, 4> test_per_count{0, 0, 0, 0};
  double val_fraction = 0.1;
  int max_shift_bins = 3;  // |delta_d| drawn uniformly up to this many range bins
  // Minimum Chebyshev distance (in bins) between target label centers;
  // 4 keeps 3x3 blobs from touching.
  int min_separation_bins = 4;
  int max_draws = 200;
  std::uint64_t seed = 11;
};

Dataset build_training_corpus(const RadarConfig& cfg, const std::vector<LabeledExample>& pool,
                              const CorpusOptions& opts);

DatasetManifest save_dataset(const std::filesystem::path& dir, const Dataset& ds);

}  // namespace rawradar
