#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rawradar {

// Rounded value; makes the nominal 3.75 cm range bin and 5 mm wavelength exact.
inline constexpr double kSpeedOfLight = 3.0e8;
inline constexpr double kPi = 3.14159265358979323846;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Chirp, sampling and antenna geometry of the sensor. Angles are in degrees,
// everything else SI.
struct RadarConfig {
  double f_min = 58e9;
  double f_max = 62e9;
  double chirp_time = 261e-6;
  int n_samples = 256;
  int n_chirps = 32;
  double chirp_repetition = 520e-6;
  int n_rx = 2;
  double antenna_spacing = 2.5e-3;
  int adc_bits = 12;
  int n_range_bins = 128;
  int n_angle_bins = 32;
  double angle_min = -50.0;
  double angle_max = 50.0;
  // Nominal ADC rate of the chipset. Metadata only: the sampling grid used
  // everywhere spans the whole chirp with n_samples points.
  double adc_rate = 2e6;

  // Reduced dimensions for CPU-scale end-to-end runs.
  static RadarConfig desk();

  void validate() const;

  // Angle of bin `j` on the uniform [angle_min, angle_max] grid.
  double angle_of_bin(int j) const;
  std::vector<double> angle_grid_deg() const;
};

struct DerivedParams {
  double bandwidth = 0;
  double center_freq = 0;
  double wavelength = 0;
  double range_resolution = 0;
  double max_range = 0;
  double velocity_resolution = 0;
  double max_unambiguous_velocity = 0;
};

DerivedParams derive_params(const RadarConfig& cfg);

// Flat `key = value` text, one entry per line, '#' comments.
std::string to_text(const RadarConfig& cfg);
RadarConfig config_from_text(const std::string& text);
RadarConfig load_config(const std::string& path);
void save_config(const RadarConfig& cfg, const std::string& path);

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

}  // namespace rawradar
