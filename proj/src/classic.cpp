#include "rawradar/classic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace rawradar {

std::vector<double> make_window(WindowKind kind, int n) {
  return kind == WindowKind::Hann ? hann_window(n) : rect_window(n);
}

AntennaRdis range_doppler(const Frame& frame, const RadarConfig& cfg, std::span<const double> window_ft,
                          std::span<const double> window_st) {
  if (!frame.matches(cfg))
    throw ShapeError("range_doppler: frame " + frame.shape_string() + " does not match config");
  if (int(window_ft.size()) != frame.n_samples || int(window_st.size()) != frame.n_chirps)
    throw ShapeError("range_doppler: window lengths " + std::to_string(window_ft.size()) + "/" +
                     std::to_string(window_st.size()) + " vs frame " + frame.shape_string());
  const DerivedParams dp = derive_params(cfg);
  const int ns = frame.n_samples;
  const int nc = frame.n_chirps;
  const int nr = cfg.n_range_bins;

  AntennaRdis out;
  std::vector<cplx> chirp(ns);
  std::vector<cplx> slow(nc);
  for (int rx = 0; rx < frame.n_rx; ++rx) {
    RangeDopplerImage rdi(nr, nc);
    rdi.meters_per_bin = dp.range_resolution;
    rdi.mps_per_bin = dp.velocity_resolution;
    for (int n = 0; n < nc; ++n) {
      auto src = frame.chirp(n, rx);
      double mean = 0;
      for (float v : src) mean += v;
      mean /= ns;
      for (int m = 0; m < ns; ++m) chirp[m] = cplx((src[m] - mean) * window_ft[m], 0.0);
      fft(chirp);
      for (int r = 0; r < nr; ++r) rdi.at(r, n) = chirp[r];
    }
    for (int r = 0; r < nr; ++r) {
      for (int n = 0; n < nc; ++n) slow[n] = rdi.at(r, n) * window_st[n];
      fft(slow);
      fftshift(std::span<cplx>(slow));
      for (int d = 0; d < nc; ++d) rdi.at(r, d) = slow[d];
    }
    out.push_back(std::move(rdi));
  }
  return out;
}

AntennaRdis MtiFilter::apply(const AntennaRdis& rdis) {
  if (background_.empty()) {
    background_ = rdis;
    for (auto& b : background_) std::fill(b.data.begin(), b.data.end(), cplx{});
  }
  if (background_.size() != rdis.size()) throw ShapeError("mti_filter: antenna count changed within stream");
  AntennaRdis out = rdis;
  for (std::size_t a = 0; a < rdis.size(); ++a) {
    auto& bg = background_[a];
    if (bg.n_range != rdis[a].n_range || bg.n_doppler != rdis[a].n_doppler)
      throw ShapeError("mti_filter: RDI dimensions changed within stream");
    for (std::size_t i = 0; i < bg.data.size(); ++i) {
      out[a].data[i] = rdis[a].data[i] - bg.data[i];
      bg.data[i] = alpha_ * bg.data[i] + (1.0 - alpha_) * rdis[a].data[i];
    }
  }
  return out;
}

RangeAngleImage mvdr_rai(const AntennaRdis& rdis, const RadarConfig& cfg, const std::vector<double>& angles_deg,
                         double diagonal_loading) {
  const int n_rx = int(rdis.size());
  if (n_rx < 2) throw std::invalid_argument("mvdr_rai: need at least two antennas");
  if (diagonal_loading < 0) throw std::invalid_argument("mvdr_rai: diagonal loading must be >= 0");
  const int nr = rdis[0].n_range;
  const int nd = rdis[0].n_doppler;
  for (const auto& r : rdis)
    if (r.n_range != nr || r.n_doppler != nd) throw ShapeError("mvdr_rai: antenna RDIs differ in shape");
  const DerivedParams dp = derive_params(cfg);

  using CMat = Eigen::MatrixXcd;
  using CVec = Eigen::VectorXcd;
  std::vector<CVec> steering;
  for (double deg : angles_deg) {
    const double phi = 2.0 * kPi * cfg.antenna_spacing * std::sin(deg2rad(deg)) / dp.wavelength;
    CVec a(n_rx);
    for (int i = 0; i < n_rx; ++i) a(i) = std::polar(1.0, i * phi);
    steering.push_back(std::move(a));
  }

  RangeAngleImage rai(nr, angles_deg);
  CVec x(n_rx);
  for (int r = 0; r < nr; ++r) {
    CMat cov = CMat::Zero(n_rx, n_rx);
    for (int d = 0; d < nd; ++d) {
      for (int i = 0; i < n_rx; ++i) x(i) = rdis[i].at(r, d);
      cov.noalias() += x * x.adjoint();
    }
    cov /= double(nd);
    const double load = diagonal_loading * cov.trace().real() / n_rx;
    cov.diagonal().array() += load;
    Eigen::FullPivLU<CMat> lu(cov);
    if (!lu.isInvertible() || !(lu.rcond() > 1e-13))
      throw std::runtime_error("mvdr_rai: singular covariance at range bin " + std::to_string(r));
    const CMat inv = lu.inverse();
    for (std::size_t k = 0; k < steering.size(); ++k) {
      const double denom = (steering[k].adjoint() * inv * steering[k])(0, 0).real();
      rai.at(r, int(k)) = 1.0 / denom;
    }
  }
  return rai;
}

LabelMask os_cfar(const RangeAngleImage& rai, int guard, int train, int k_rank, double alpha) {
  if (guard < 1 || train < 1) throw std::invalid_argument("os_cfar: guard and train must be >= 1");
  if (k_rank < 1 || k_rank > 2 * train) throw std::invalid_argument("os_cfar: k_rank must lie in [1, 2*train]");
  if (2 * (guard + train) + 1 > rai.n_range)
    throw std::invalid_argument("os_cfar: window of " + std::to_string(2 * (guard + train) + 1) +
                                " cells exceeds range axis of " + std::to_string(rai.n_range));
  LabelMask mask(rai.n_range, rai.n_angle);
  std::vector<double> ref;
  ref.reserve(2 * train);
  for (int a = 0; a < rai.n_angle; ++a) {
    for (int r = 0; r < rai.n_range; ++r) {
      ref.clear();
      for (int i = r - guard - train; i < r - guard; ++i)
        if (i >= 0) ref.push_back(rai.at(i, a));
      for (int i = r + guard + 1; i <= r + guard + train; ++i)
        if (i < rai.n_range) ref.push_back(rai.at(i, a));
      const int avail = int(ref.size());
      const int k = std::clamp(int(std::lround(double(k_rank) * avail / (2.0 * train))), 1, avail);
      std::nth_element(ref.begin(), ref.begin() + (k - 1), ref.end());
      const double threshold = alpha * ref[k - 1];
      mask.at(r, a) = rai.at(r, a) > threshold ? 1 : 0;
    }
  }
  return mask;
}

double os_cfar_pfa(int n_ref, int k_rank, double alpha, CfarLaw law) {
  // For exponential cells P(X > T * X_(k)) = prod_{i<k} (N - i) / (N - i + T).
  const double t = law == CfarLaw::Envelope ? alpha * alpha : alpha;
  double p = 1.0;
  for (int i = 0; i < k_rank; ++i) p *= double(n_ref - i) / (double(n_ref - i) + t);
  return p;
}

double os_cfar_alpha(int n_ref, int k_rank, double pfa, CfarLaw law) {
  if (!(pfa > 0.0 && pfa < 1.0)) throw std::invalid_argument("os_cfar_alpha: pfa must lie in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  while (os_cfar_pfa(n_ref, k_rank, hi, law) > pfa) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (os_cfar_pfa(n_ref, k_rank, mid, law) > pfa ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

DetectionSet dbscan(std::vector<ClusterPoint> points, double eps, int min_pts, const RadarConfig& cfg) {
  if (!(eps > 0)) throw std::invalid_argument("dbscan: eps must be positive");
  if (min_pts < 1) throw std::invalid_argument("dbscan: min_pts must be >= 1");
  std::sort(points.begin(), points.end(), [](const ClusterPoint& a, const ClusterPoint& b) {
    return std::tie(a.range_bin, a.angle_bin) < std::tie(b.range_bin, b.angle_bin);
  });
  const int n = int(points.size());
  const double eps2 = eps * eps;
  std::vector<std::vector<int>> neighbors(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double dx = points[i].x - points[j].x;
      const double dy = points[i].y - points[j].y;
      if (dx * dx + dy * dy <= eps2) neighbors[i].push_back(j);
    }

  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> label(n, kUnvisited);
  int n_clusters = 0;
  for (int i = 0; i < n; ++i) {
    if (label[i] != kUnvisited) continue;
    if (int(neighbors[i].size()) < min_pts) {
      label[i] = kNoise;
      continue;
    }
    const int c = n_clusters++;
    label[i] = c;
    std::vector<int> frontier(neighbors[i].begin(), neighbors[i].end());
    for (std::size_t f = 0; f < frontier.size(); ++f) {
      const int j = frontier[f];
      if (label[j] == kNoise) label[j] = c;
      if (label[j] != kUnvisited) continue;
      label[j] = c;
      if (int(neighbors[j].size()) >= min_pts)
        frontier.insert(frontier.end(), neighbors[j].begin(), neighbors[j].end());
    }
  }

  const DerivedParams dp = derive_params(cfg);
  DetectionSet out(n_clusters);
  std::vector<double> sum_r(n_clusters, 0.0);
  std::vector<double> sum_a(n_clusters, 0.0);
  for (int i = 0; i < n; ++i) {
    if (label[i] < 0) continue;
    auto& cl = out[label[i]];
    const auto& p = points[i];
    cl.members.emplace_back(p.range_bin, p.angle_bin);
    cl.mass += p.weight;
    sum_r[label[i]] += p.weight * p.range_bin * dp.range_resolution;
    sum_a[label[i]] += p.weight * cfg.angle_of_bin(p.angle_bin);
  }
  for (int c = 0; c < n_clusters; ++c) {
    auto& cl = out[c];
    if (cl.mass > 0) {
      cl.range_m = sum_r[c] / cl.mass;
      cl.angle_deg = sum_a[c] / cl.mass;
    } else {
      double r = 0, a = 0;
      for (auto [rb, ab] : cl.members) {
        r += rb * dp.range_resolution;
        a += cfg.angle_of_bin(ab);
      }
      cl.range_m = r / cl.members.size();
      cl.angle_deg = a / cl.members.size();
    }
  }
  return out;
}

DetectionSet dbscan(const LabelMask& mask, const RangeAngleImage& rai, double eps, int min_pts, const RadarConfig& cfg) {
  if (mask.n_range != rai.n_range || mask.n_angle != rai.n_angle) throw ShapeError("dbscan: mask and RAI shapes differ");
  const DerivedParams dp = derive_params(cfg);
  std::vector<ClusterPoint> pts;
  for (int r = 0; r < mask.n_range; ++r)
    for (int a = 0; a < mask.n_angle; ++a) {
      if (!mask.at(r, a)) continue;
      const double range = r * dp.range_resolution;
      const double theta = deg2rad(rai.angles_deg[a]);
      pts.push_back({r, a, range * std::sin(theta), range * std::cos(theta), rai.at(r, a)});
    }
  return dbscan(std::move(pts), eps, min_pts, cfg);
}

double PipelineParams::resolved_cfar_alpha() const {
  return cfar_alpha ? *cfar_alpha : os_cfar_alpha(2 * cfar_train, cfar_rank, cfar_pfa, CfarLaw::Envelope);
}

PipelineParams PipelineParams::desk() {
  PipelineParams p;
  p.dbscan_eps = 0.08;
  return p;
}

ClassicPipeline::ClassicPipeline(RadarConfig cfg, PipelineParams params)
    : cfg_(std::move(cfg)),
      params_(params),
      window_ft_(make_window(params.window_ft, cfg_.n_samples)),
      window_st_(make_window(params.window_st, cfg_.n_chirps)),
      angles_(cfg_.angle_grid_deg()),
      cfar_alpha_(params.resolved_cfar_alpha()),
      mti_(params.mti_alpha) {
  cfg_.validate();
}

PipelineOutput ClassicPipeline::process(const Frame& frame) {
  PipelineOutput out;
  out.rdis = mti_.apply(range_doppler(frame, cfg_, window_ft_, window_st_));
  out.rai = mvdr_rai(out.rdis, cfg_, angles_, params_.diagonal_loading);
  out.mask = os_cfar(out.rai, params_.cfar_guard, params_.cfar_train, params_.cfar_rank, cfar_alpha_);
  out.detections = dbscan(out.mask, out.rai, params_.dbscan_eps, params_.dbscan_min_pts, cfg_);
  return out;
}

std::vector<DetectionSet> detect_targets(const std::vector<Frame>& stream, const RadarConfig& cfg,
                                         const PipelineParams& params) {
  ClassicPipeline pipeline(cfg, params);
  std::vector<DetectionSet> out;
  out.reserve(stream.size());
  for (const auto& f : stream) out.push_back(pipeline.detect(f));
  return out;
}

}  // namespace rawradar
