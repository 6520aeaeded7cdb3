#include "rawradar/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rawradar/seed.hpp"

namespace rawradar {

double target_sample(const PointTarget& t, const RadarConfig& cfg, int m, int n, int rx) {
  const DerivedParams dp = derive_params(cfg);
  const double t_ft = m * cfg.chirp_time / cfg.n_samples;
  const double t_st = n * cfg.chirp_repetition;
  const double beat = 2.0 * dp.bandwidth * t.range / (kSpeedOfLight * cfg.chirp_time);
  const double carrier = 2.0 * dp.center_freq * (t.range + t.velocity * t_st) / kSpeedOfLight;
  const double phi = 2.0 * kPi * cfg.antenna_spacing * std::sin(deg2rad(t.azimuth)) / dp.wavelength;
  return t.amplitude * std::cos(2.0 * kPi * (beat * t_ft + carrier) + rx * phi);
}

Frame synth_frame(const std::vector<PointTarget>& targets, const RadarConfig& cfg, double noise_snr_db,
                  std::uint64_t seed) {
  const DerivedParams dp = derive_params(cfg);
  Frame frame = Frame::zeros(cfg);
  std::vector<double> acc(frame.samples.size(), 0.0);
  for (const auto& t : targets) {
    t.validate(dp);
    // Same expression as target_sample, hoisted per chirp/antenna.
    const double beat_per_sample = 2.0 * dp.bandwidth * t.range / kSpeedOfLight / cfg.n_samples;
    const double phi = 2.0 * kPi * cfg.antenna_spacing * std::sin(deg2rad(t.azimuth)) / dp.wavelength;
    for (int rx = 0; rx < cfg.n_rx; ++rx) {
      for (int n = 0; n < cfg.n_chirps; ++n) {
        const double carrier = 2.0 * dp.center_freq * (t.range + t.velocity * n * cfg.chirp_repetition) / kSpeedOfLight;
        double* out = acc.data() + frame.index(0, n, rx);
        for (int m = 0; m < cfg.n_samples; ++m)
          out[m] += t.amplitude * std::cos(2.0 * kPi * (beat_per_sample * m + carrier) + rx * phi);
      }
    }
  }
  if (std::isfinite(noise_snr_db)) {
    double ref = 1.0;
    if (!targets.empty())
      ref = std::max_element(targets.begin(), targets.end(), [](const auto& a, const auto& b) {
              return a.amplitude < b.amplitude;
            })->amplitude;
    const double sigma = std::sqrt(0.5 * ref * ref / std::pow(10.0, noise_snr_db / 10.0));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (auto& v : acc) v += gauss(rng);
  }
  std::transform(acc.begin(), acc.end(), frame.samples.begin(), [](double v) { return float(v); });
  return frame;
}

Frame quantize_adc(const Frame& frame, int bits) {
  if (bits < 2 || bits > 16) throw std::invalid_argument("quantize_adc: bits must lie in [2, 16], got " + std::to_string(bits));
  Frame out = frame;
  if (frame.samples.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(frame.samples.begin(), frame.samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) return out;
  const long top = (1L << bits) - 1;
  const double step = (hi - lo) / double(top);
  for (auto& v : out.samples) {
    const long k = std::clamp(std::lround((double(v) - lo) / step), 0L, top);
    // End levels reproduce min/max exactly, which keeps the quantizer idempotent.
    v = k == top ? float(hi) : float(lo + double(k) * step);
  }
  return out;
}

std::vector<double> default_grid_ranges(const RadarConfig& cfg, int n_positions) {
  const double dr = derive_params(cfg).range_resolution;
  const int step = std::max(1, cfg.n_range_bins / std::max(1, n_positions));
  std::vector<double> ranges(n_positions);
  for (int i = 0; i < n_positions; ++i) ranges[i] = (1.0 + double(i) * step) * dr;
  return ranges;
}

std::vector<double> default_grid_angles(const RadarConfig& cfg, int n_positions) {
  std::vector<double> angles(n_positions);
  for (int j = 0; j < n_positions; ++j)
    angles[j] = n_positions == 1 ? 0.5 * (cfg.angle_min + cfg.angle_max)
                                 : cfg.angle_min + j * (cfg.angle_max - cfg.angle_min) / (n_positions - 1);
  return angles;
}

std::vector<LabeledExample> grid_examples(const RadarConfig& cfg, const std::vector<double>& ranges,
                                          const std::vector<double>& angles, const GridOptions& opts) {
  std::vector<LabeledExample> out;
  out.reserve(ranges.size() * angles.size());
  std::mt19937_64 vel_rng(derive_seed(opts.seed, 0xfeed));
  std::uniform_real_distribution<double> vel(-opts.max_velocity, opts.max_velocity);
  int id = 0;
  for (double r : ranges) {
    for (double a : angles) {
      PointTarget t{r, opts.max_velocity > 0 ? vel(vel_rng) : 0.0, a, 1.0};
      LabeledExample ex;
      ex.frame = synth_frame({t}, cfg, opts.noise_snr_db, derive_seed(opts.seed, std::uint64_t(id)));
      if (opts.quantize) ex.frame = quantize_adc(ex.frame, cfg.adc_bits);
      ex.frame.frame_index = id;
      ex.targets = {t};
      ex.label = label_for_targets(cfg, ex.targets);
      ex.sources = {id};
      out.push_back(std::move(ex));
      ++id;
    }
  }
  return out;
}

DatasetManifest generate_grid_dataset(const RadarConfig& cfg, const std::vector<double>& ranges,
                                      const std::vector<double>& angles, const std::filesystem::path& out_dir,
                                      const GridOptions& opts) {
  const auto examples = grid_examples(cfg, ranges, angles, opts);
  nlohmann::json prov{{"kind", "synthetic-grid"},
                      {"n_ranges", ranges.size()},
                      {"n_angles", angles.size()},
                      {"noise_snr_db", std::isfinite(opts.noise_snr_db) ? nlohmann::json(opts.noise_snr_db) : nlohmann::json(nullptr)},
                      {"quantize", opts.quantize},
                      {"max_velocity", opts.max_velocity},
                      {"seed", opts.seed}};
  return save_dataset(out_dir, cfg, examples, nlohmann::json::object(), prov);
}

}  // namespace rawradar
