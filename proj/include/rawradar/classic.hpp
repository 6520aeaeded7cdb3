#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rawradar/fft.hpp"
#include "rawradar/frame.hpp"
#include "rawradar/radar_config.hpp"
#include "rawradar/scene.hpp"

namespace rawradar {

// Complex range x Doppler spectrum of one antenna, Doppler fastest, zero
// velocity at column n_doppler / 2.
struct RangeDopplerImage {
  int n_range = 0;
  int n_doppler = 0;
  double meters_per_bin = 0;
  double mps_per_bin = 0;
  std::vector<cplx> data;

  RangeDopplerImage() = default;
  RangeDopplerImage(int nr, int nd) : n_range(nr), n_doppler(nd), data(std::size_t(nr) * nd) {}
  cplx& at(int r, int d) { return data[std::size_t(r) * n_doppler + d]; }
  cplx at(int r, int d) const { return data[std::size_t(r) * n_doppler + d]; }
  int zero_doppler_bin() const { return n_doppler / 2; }
  double velocity_of_bin(int d) const { return (d - zero_doppler_bin()) * mps_per_bin; }
};

using AntennaRdis = std::vector<RangeDopplerImage>;

// Nonnegative range x angle power map, angle fastest.
struct RangeAngleImage {
  int n_range = 0;
  int n_angle = 0;
  std::vector<double> angles_deg;
  std::vector<double> values;

  RangeAngleImage() = default;
  RangeAngleImage(int nr, std::vector<double> angles)
      : n_range(nr), n_angle(int(angles.size())), angles_deg(std::move(angles)), values(std::size_t(n_range) * n_angle) {}
  double& at(int r, int a) { return values[std::size_t(r) * n_angle + a]; }
  double at(int r, int a) const { return values[std::size_t(r) * n_angle + a]; }
};

struct Cluster {
  double range_m = 0;
  double angle_deg = 0;
  double mass = 0;
  std::vector<std::pair<int, int>> members;  // (range bin, angle bin)
};

using DetectionSet = std::vector<Cluster>;

enum class WindowKind { Hann, Rect };

std::vector<double> make_window(WindowKind kind, int n);

// Per antenna: chirp mean removal, fast-time window + DFT (first n_range_bins
// bins kept), then slow-time window + DFT per range bin, zero Doppler centered.
AntennaRdis range_doppler(const Frame& frame, const RadarConfig& cfg, std::span<const double> window_ft,
                          std::span<const double> window_st);

// Exponential background subtraction over a stream of RDIs. One owner per
// stream; the first frame passes through unchanged.
class MtiFilter {
 public:
  explicit MtiFilter(double alpha = 0.9) : alpha_(alpha) {}
  AntennaRdis apply(const AntennaRdis& rdis);
  void reset() { background_.clear(); }
  double alpha() const { return alpha_; }

 private:
  double alpha_;
  AntennaRdis background_;
};

// Capon spectrum per range bin. Snapshots are the Doppler bins; the spatial
// covariance gets diagonal loading * trace / n_rx added before inversion.
RangeAngleImage mvdr_rai(const AntennaRdis& rdis, const RadarConfig& cfg, const std::vector<double>& angles_deg,
                         double diagonal_loading);

// Ordered-statistic CFAR along the range axis of every angle column. Each
// cell is compared with alpha times the k-th smallest of its 2*train
// reference cells (guard cells excluded); windows shrink at the edges and
// the rank scales with them.
LabelMask os_cfar(const RangeAngleImage& rai, int guard, int train, int k_rank, double alpha);

enum class CfarLaw { Envelope, Power };

// Scale factor giving false-alarm probability `pfa` for i.i.d. Rayleigh
// envelope (or exponential power) reference cells.
double os_cfar_pfa(int n_ref, int k_rank, double alpha, CfarLaw law);
double os_cfar_alpha(int n_ref, int k_rank, double pfa, CfarLaw law);

struct ClusterPoint {
  int range_bin;
  int angle_bin;
  double x;  // cross-range, m
  double y;  // down-range, m
  double weight;
};

// Density clustering in Cartesian coordinates. Noise points are dropped; the
// result does not depend on the order of `points`.
DetectionSet dbscan(std::vector<ClusterPoint> points, double eps, int min_pts, const RadarConfig& cfg);
DetectionSet dbscan(const LabelMask& mask, const RangeAngleImage& rai, double eps, int min_pts, const RadarConfig& cfg);

struct PipelineParams {
  WindowKind window_ft = WindowKind::Hann;
  WindowKind window_st = WindowKind::Hann;
  double mti_alpha = 0.9;
  double diagonal_loading = 1e-2;
  int cfar_guard = 2;
  int cfar_train = 8;
  int cfar_rank = 12;
  double cfar_pfa = 1e-3;
  std::optional<double> cfar_alpha;  // derived from cfar_pfa when unset
  double dbscan_eps = 0.3;
  int dbscan_min_pts = 2;

  double resolved_cfar_alpha() const;
  static PipelineParams desk();
};

struct PipelineOutput {
  AntennaRdis rdis;
  RangeAngleImage rai;
  LabelMask mask;
  DetectionSet detections;
};

// range_doppler -> MTI -> MVDR -> OS-CFAR -> DBSCAN over a time-ordered stream.
class ClassicPipeline {
 public:
  ClassicPipeline(RadarConfig cfg, PipelineParams params);
  PipelineOutput process(const Frame& frame);
  DetectionSet detect(const Frame& frame) { return process(frame).detections; }
  void reset() { mti_.reset(); }
  const PipelineParams& params() const { return params_; }

 private:
  RadarConfig cfg_;
  PipelineParams params_;
  std::vector<double> window_ft_;
  std::vector<double> window_st_;
  std::vector<double> angles_;
  double cfar_alpha_;
  MtiFilter mti_;
};

std::vector<DetectionSet> detect_targets(const std::vector<Frame>& stream, const RadarConfig& cfg,
                                         const PipelineParams& params);

}  // namespace rawradar
