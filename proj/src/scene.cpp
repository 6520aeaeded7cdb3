#include "rawradar/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rawradar {

void PointTarget::validate(const DerivedParams& dp) const {
  if (!(range > 0.0) || range > dp.max_range * (1.0 + 1e-12))
    throw std::invalid_argument("point target range " + std::to_string(range) + " m outside (0, R_max]");
  if (!(std::abs(azimuth) <= 90.0)) throw std::invalid_argument("point target azimuth outside [-90, 90] degrees");
  if (!(amplitude > 0.0)) throw std::invalid_argument("point target amplitude must be positive");
  if (!std::isfinite(velocity)) throw std::invalid_argument("point target velocity must be finite");
}

int LabelMask::count() const { return std::accumulate(bits.begin(), bits.end(), 0); }

int range_bin_of(const RadarConfig& cfg, double range_m) {
  const double dr = derive_params(cfg).range_resolution;
  const long bin = std::lround(range_m / dr);
  return int(std::clamp<long>(bin, 0, cfg.n_range_bins - 1));
}

int angle_bin_of(const RadarConfig& cfg, double azimuth_deg) {
  if (cfg.n_angle_bins == 1) return 0;
  const double step = (cfg.angle_max - cfg.angle_min) / (cfg.n_angle_bins - 1);
  const long bin = std::lround((azimuth_deg - cfg.angle_min) / step);
  return int(std::clamp<long>(bin, 0, cfg.n_angle_bins - 1));
}

void paint_patch(LabelMask& mask, int r, int a, int half) {
  for (int i = std::max(0, r - half); i <= std::min(mask.n_range - 1, r + half); ++i)
    for (int j = std::max(0, a - half); j <= std::min(mask.n_angle - 1, a + half); ++j) mask.at(i, j) = 1;
}

LabelMask label_for_targets(const RadarConfig& cfg, const std::vector<PointTarget>& targets, int half) {
  LabelMask mask(cfg.n_range_bins, cfg.n_angle_bins);
  for (const auto& t : targets) paint_patch(mask, range_bin_of(cfg, t.range), angle_bin_of(cfg, t.azimuth), half);
  return mask;
}

}  // namespace rawradar
