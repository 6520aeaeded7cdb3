#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rawradar/radar_config.hpp"

namespace rawradar {

// Raw ADC cube, fast-time fastest, then chirp, then antenna.
struct Frame {
  int n_samples = 0;
  int n_chirps = 0;
  int n_rx = 0;
  bool normalized = false;
  long frame_index = 0;
  std::vector<float> samples;

  Frame() = default;
  Frame(int ns, int nc, int nrx) : n_samples(ns), n_chirps(nc), n_rx(nrx), samples(std::size_t(ns) * nc * nrx, 0.0f) {}

  static Frame zeros(const RadarConfig& cfg) { return Frame(cfg.n_samples, cfg.n_chirps, cfg.n_rx); }

  std::size_t index(int m, int n, int rx) const {
    return std::size_t(m) + std::size_t(n_samples) * (std::size_t(n) + std::size_t(n_chirps) * rx);
  }
  float& at(int m, int n, int rx) { return samples[index(m, n, rx)]; }
  float at(int m, int n, int rx) const { return samples[index(m, n, rx)]; }

  std::span<const float> chirp(int n, int rx) const { return {samples.data() + index(0, n, rx), std::size_t(n_samples)}; }
  std::span<float> chirp(int n, int rx) { return {samples.data() + index(0, n, rx), std::size_t(n_samples)}; }
  std::span<const float> antenna(int rx) const {
    return {samples.data() + index(0, 0, rx), std::size_t(n_samples) * n_chirps};
  }

  bool same_shape(const Frame& o) const { return n_samples == o.n_samples && n_chirps == o.n_chirps && n_rx == o.n_rx; }
  bool matches(const RadarConfig& cfg) const {
    return n_samples == cfg.n_samples && n_chirps == cfg.n_chirps && n_rx == cfg.n_rx;
  }
  std::string shape_string() const {
    return "[" + std::to_string(n_samples) + "x" + std::to_string(n_chirps) + "x" + std::to_string(n_rx) + "]";
  }
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace rawradar
