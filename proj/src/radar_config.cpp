#include "rawradar/radar_config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace rawradar {

RadarConfig RadarConfig::desk() {
  RadarConfig cfg;
  cfg.n_samples = 64;
  cfg.n_chirps = 16;
  cfg.n_range_bins = 32;
  cfg.n_angle_bins = 8;
  return cfg;
}

void RadarConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid radar config: " + what); };
  if (!(f_max > f_min)) fail("f_max must exceed f_min");
  if (!(f_min > 0)) fail("f_min must be positive");
  if (!(chirp_time > 0)) fail("chirp_time must be positive");
  if (n_samples < 1 || n_chirps < 1 || n_rx < 1 || adc_bits < 1 || n_range_bins < 1 || n_angle_bins < 1)
    fail("all counts must be >= 1");
  if (!(chirp_repetition >= chirp_time)) fail("chirp_repetition must be >= chirp_time");
  if (!(antenna_spacing > 0)) fail("antenna_spacing must be positive");
  if (n_range_bins > n_samples / 2 && n_samples > 1) fail("n_range_bins exceeds the positive half of the fast-time spectrum");
  if (!(angle_max > angle_min) && n_angle_bins > 1) fail("angle_max must exceed angle_min");
  if (angle_min < -90.0 || angle_max > 90.0) fail("angle grid must lie within [-90, 90] degrees");
}

double RadarConfig::angle_of_bin(int j) const {
  if (n_angle_bins == 1) return 0.5 * (angle_min + angle_max);
  return angle_min + j * (angle_max - angle_min) / (n_angle_bins - 1);
}

std::vector<double> RadarConfig::angle_grid_deg() const {
  std::vector<double> grid(n_angle_bins);
  for (int j = 0; j < n_angle_bins; ++j) grid[j] = angle_of_bin(j);
  return grid;
}

DerivedParams derive_params(const RadarConfig& cfg) {
  cfg.validate();
  DerivedParams p;
  p.bandwidth = cfg.f_max - cfg.f_min;
  p.center_freq = 0.5 * (cfg.f_min + cfg.f_max);
  p.wavelength = kSpeedOfLight / p.center_freq;
  p.range_resolution = kSpeedOfLight / (2.0 * p.bandwidth);
  p.max_range = cfg.n_range_bins * p.range_resolution;
  p.velocity_resolution = p.wavelength / (2.0 * cfg.n_chirps * cfg.chirp_repetition);
  p.max_unambiguous_velocity = p.wavelength / (4.0 * cfg.chirp_repetition);
  return p;
}

namespace {

template <typename T>
using Field = std::pair<std::function<T(const RadarConfig&)>, std::function<void(RadarConfig&, T)>>;

struct FieldTable {
  std::map<std::string, Field<double>> reals;
  std::map<std::string, Field<int>> ints;
  std::vector<std::string> order;
};

const FieldTable& fields() {
  static const FieldTable table = [] {
    FieldTable t;
    auto real = [&t](const std::string& key, double RadarConfig::*member) {
      t.reals[key] = {[member](const RadarConfig& c) { return c.*member; },
                      [member](RadarConfig& c, double v) { c.*member = v; }};
      t.order.push_back(key);
    };
    auto integer = [&t](const std::string& key, int RadarConfig::*member) {
      t.ints[key] = {[member](const RadarConfig& c) { return c.*member; },
                     [member](RadarConfig& c, int v) { c.*member = v; }};
      t.order.push_back(key);
    };
    real("f_min", &RadarConfig::f_min);
    real("f_max", &RadarConfig::f_max);
    real("chirp_time", &RadarConfig::chirp_time);
    integer("n_samples", &RadarConfig::n_samples);
    integer("n_chirps", &RadarConfig::n_chirps);
    real("chirp_repetition", &RadarConfig::chirp_repetition);
    integer("n_rx", &RadarConfig::n_rx);
    real("antenna_spacing", &RadarConfig::antenna_spacing);
    integer("adc_bits", &RadarConfig::adc_bits);
    integer("n_range_bins", &RadarConfig::n_range_bins);
    integer("n_angle_bins", &RadarConfig::n_angle_bins);
    real("angle_min", &RadarConfig::angle_min);
    real("angle_max", &RadarConfig::angle_max);
    real("adc_rate", &RadarConfig::adc_rate);
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_text(const RadarConfig& cfg) {
  std::ostringstream out;
  out << std::setprecision(17);
  const auto& t = fields();
  for (const auto& key : t.order) {
    if (auto it = t.reals.find(key); it != t.reals.end())
      out << key << " = " << it->second.first(cfg) << "\n";
    else
      out << key << " = " << t.ints.at(key).first(cfg) << "\n";
  }
  return out.str();
}

RadarConfig config_from_text(const std::string& text) {
  RadarConfig cfg;
  const auto& t = fields();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      std::size_t used = 0;
      if (auto it = t.reals.find(key); it != t.reals.end()) {
        it->second.second(cfg, std::stod(value, &used));
      } else if (auto jt = t.ints.find(key); jt != t.ints.end()) {
        jt->second.second(cfg, std::stoi(value, &used));
      } else {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

RadarConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_text(buf.str());
}

void save_config(const RadarConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << to_text(cfg);
}

}  // namespace rawradar
