#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rawradar/frame.hpp"
#include "rawradar/radar_config.hpp"

namespace rawradar {

struct PointTarget {
  double range = 1.0;      // m
  double velocity = 0.0;   // m/s, radial
  double azimuth = 0.0;    // degrees
  double amplitude = 1.0;

  void validate(const DerivedParams& dp) const;
  bool operator==(const PointTarget&) const = default;
};

// Binary range x angle map, angle fastest.
struct LabelMask {
  int n_range = 0;
  int n_angle = 0;
  std::vector<std::uint8_t> bits;

  LabelMask() = default;
  LabelMask(int nr, int na) : n_range(nr), n_angle(na), bits(std::size_t(nr) * na, 0) {}

  std::uint8_t& at(int r, int a) { return bits[std::size_t(r) * n_angle + a]; }
  std::uint8_t at(int r, int a) const { return bits[std::size_t(r) * n_angle + a]; }
  int count() const;
  bool operator==(const LabelMask&) const = default;
};

// Range/angle bin nearest to a target on the config's image grid.
int range_bin_of(const RadarConfig& cfg, double range_m);
int angle_bin_of(const RadarConfig& cfg, double azimuth_deg);

// Sets a (2*half+1)^2 patch centered on (r, a), clipped at the borders.
void paint_patch(LabelMask& mask, int r, int a, int half = 1);
LabelMask label_for_targets(const RadarConfig& cfg, const std::vector<PointTarget>& targets, int half = 1);

struct LabeledExample {
  Frame frame;
  LabelMask label;
  std::vector<PointTarget> targets;
  std::string split = "train";
  std::vector<int> sources;  // pool member ids the example was built from
};

}  // namespace rawradar
