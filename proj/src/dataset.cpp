#include "rawradar/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "rawradar/fft.hpp"
#include "rawradar/seed.hpp"

namespace rawradar {

Frame normalize_frame(const Frame& frame) {
  if (frame.samples.empty()) throw std::invalid_argument("normalize_frame: empty frame");
  const auto [lo_it, hi_it] = std::minmax_element(frame.samples.begin(), frame.samples.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw std::invalid_argument("normalize_frame: constant frame has no defined normalization");
  Frame out = frame;
  const double span = hi - lo;
  for (auto& v : out.samples) v = float((double(v) - lo) / span);
  out.normalized = true;
  return out;
}

LabeledExample superpose(const std::vector<LabeledExample>& examples) {
  if (examples.empty() || examples.size() > 4)
    throw std::invalid_argument("superpose: expected 1 to 4 examples, got " + std::to_string(examples.size()));
  const auto& first = examples.front();
  LabeledExample out;
  out.frame = Frame(first.frame.n_samples, first.frame.n_chirps, first.frame.n_rx);
  out.frame.frame_index = first.frame.frame_index;
  out.label = LabelMask(first.label.n_range, first.label.n_angle);
  out.split = first.split;
  std::vector<double> acc(out.frame.samples.size(), 0.0);
  for (const auto& ex : examples) {
    if (ex.frame.normalized) throw std::invalid_argument("superpose: inputs must be raw (un-normalized) frames");
    if (!ex.frame.same_shape(first.frame))
      throw ShapeError("superpose: frame " + ex.frame.shape_string() + " vs " + first.frame.shape_string());
    if (ex.label.n_range != first.label.n_range || ex.label.n_angle != first.label.n_angle)
      throw ShapeError("superpose: label mask shapes differ");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += ex.frame.samples[i];
    for (std::size_t i = 0; i < out.label.bits.size(); ++i) out.label.bits[i] |= ex.label.bits[i];
    out.targets.insert(out.targets.end(), ex.targets.begin(), ex.targets.end());
    out.sources.insert(out.sources.end(), ex.sources.begin(), ex.sources.end());
  }
  std::transform(acc.begin(), acc.end(), out.frame.samples.begin(), [](double v) { return float(v); });
  return out;
}

LabeledExample range_shift_augment(const LabeledExample& example, double delta_m, const RadarConfig& cfg) {
  const DerivedParams dp = derive_params(cfg);
  const Frame& in = example.frame;
  if (!in.matches(cfg)) throw ShapeError("range_shift_augment: frame " + in.shape_string() + " does not match config");
  if (std::abs(delta_m) > 5.0 * dp.range_resolution * (1.0 + 1e-12))
    throw std::invalid_argument("range_shift_augment: |shift| exceeds 5 range bins");
  for (const auto& t : example.targets) {
    const double moved = t.range + delta_m;
    if (!(moved > 0.0) || !(moved < dp.max_range))
      throw std::out_of_range("range_shift_augment: target at " + std::to_string(t.range) + " m would leave (0, R_max)");
  }

  LabeledExample out = example;
  const int ns = in.n_samples;
  // Cycles per fast-time sample of the translating exponential.
  const double shift = (delta_m / dp.range_resolution) / ns;
  std::vector<cplx> z(ns);
  std::vector<cplx> rot(ns);
  for (int m = 0; m < ns; ++m) rot[m] = std::polar(1.0, 2.0 * kPi * shift * m);
  for (int rx = 0; rx < in.n_rx; ++rx) {
    for (int n = 0; n < in.n_chirps; ++n) {
      auto src = in.chirp(n, rx);
      for (int m = 0; m < ns; ++m) z[m] = cplx(src[m], 0.0);
      fft(z);
      // One-sided spectrum: keep DC and Nyquist, double positive bins.
      for (int k = 1; k < (ns + 1) / 2; ++k) z[k] *= 2.0;
      for (int k = ns / 2 + 1; k < ns; ++k) z[k] = 0.0;
      ifft(z);
      auto dst = out.frame.chirp(n, rx);
      for (int m = 0; m < ns; ++m) dst[m] = float((z[m] * rot[m]).real());
    }
  }

  const int bins = int(std::lround(delta_m / dp.range_resolution));
  LabelMask shifted(example.label.n_range, example.label.n_angle);
  for (int r = 0; r < shifted.n_range; ++r) {
    const int src = r - bins;
    if (src < 0 || src >= shifted.n_range) continue;
    for (int a = 0; a < shifted.n_angle; ++a) shifted.at(r, a) = example.label.at(src, a);
  }
  out.label = std::move(shifted);
  for (auto& t : out.targets) t.range += delta_m;
  return out;
}

namespace {

struct Clutter {
  double range_fraction;
  double azimuth;
};

constexpr Clutter kRoomClutter[] = {{0.22, -35.0}, {0.55, 25.0}, {0.85, -10.0}};

}  // namespace

std::vector<LabeledExample> walk_pool(const RadarConfig& cfg, const WalkOptions& opts) {
  const DerivedParams dp = derive_params(cfg);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * uni(rng); };

  const double r_lo = 4.0 * dp.range_resolution;
  const double r_hi = dp.max_range - 5.0 * dp.range_resolution;
  const double a_lo = cfg.angle_min;
  const double a_hi = cfg.angle_max;
  const double dt = 0.2;
  const int frames_per_walk = 10;
  const int n_walks = (opts.count + frames_per_walk - 1) / frames_per_walk;
  const int n_test_walks = int(std::lround(opts.test_fraction * n_walks));

  std::vector<LabeledExample> pool;
  pool.reserve(opts.count);
  for (int w = 0; w < n_walks && int(pool.size()) < opts.count; ++w) {
    double r = uniform(r_lo, r_hi);
    double az = uniform(a_lo, a_hi);
    double heading = uniform(0.0, 2.0 * kPi);
    const double speed = uniform(opts.min_speed, opts.max_speed);
    for (int f = 0; f < frames_per_walk && int(pool.size()) < opts.count; ++f) {
      // Cartesian step, re-drawing the heading when it would leave the room.
      double x = r * std::sin(deg2rad(az));
      double y = r * std::cos(deg2rad(az));
      double nr = r;
      double naz = az;
      for (int attempt = 0; attempt < 50; ++attempt) {
        const double nx = x + speed * dt * std::sin(heading);
        const double ny = y + speed * dt * std::cos(heading);
        nr = std::hypot(nx, ny);
        naz = rad2deg(std::atan2(nx, ny));
        if (nr >= r_lo && nr <= r_hi && naz >= a_lo && naz <= a_hi) break;
        heading = uniform(0.0, 2.0 * kPi);
        nr = r;
        naz = az;
      }
      const double v_radial = (nr - r) / dt;
      r = nr;
      az = naz;
      heading += uniform(-0.4, 0.4);

      const PointTarget body{r, v_radial, az, 1.0};
      std::vector<PointTarget> scene{body};
      for (int limb = 0; limb < 2; ++limb) {
        const double lr = std::clamp(r + uniform(-2.0, 2.0) * dp.range_resolution, dp.range_resolution, dp.max_range);
        const double la = std::clamp(az + uniform(-6.0, 6.0), -90.0, 90.0);
        scene.push_back({lr, v_radial + uniform(-1.2, 1.2), la, opts.limb_amplitude});
      }
      for (const auto& c : kRoomClutter)
        scene.push_back({c.range_fraction * dp.max_range, 0.0, c.azimuth, opts.clutter_amplitude * uniform(0.95, 1.05)});
      scene.push_back({0.5 * dp.range_resolution, 0.0, 0.0, 1.0});  // TX-RX leakage

      const int id = int(pool.size());
      LabeledExample ex;
      ex.frame = synth_frame(scene, cfg, opts.noise_snr_db, derive_seed(opts.seed, std::uint64_t(id)));
      if (opts.quantize) ex.frame = quantize_adc(ex.frame, cfg.adc_bits);
      ex.frame.frame_index = id;
      ex.targets = {body};
      ex.label = label_for_targets(cfg, ex.targets);
      ex.split = w < n_test_walks ? "test" : "train";
      ex.sources = {id};
      pool.push_back(std::move(ex));
    }
  }
  return pool;
}

namespace {

struct Center {
  int r;
  int a;
};

bool far_enough(const std::vector<Center>& placed, Center c, int min_sep) {
  for (const auto& p : placed)
    if (std::max(std::abs(p.r - c.r), std::abs(p.a - c.a)) < min_sep) return false;
  return true;
}

}  // namespace

Dataset build_training_corpus(const RadarConfig& cfg, const std::vector<LabeledExample>& pool,
                              const CorpusOptions& opts) {
  if (pool.empty()) throw std::invalid_argument("build_training_corpus: empty pool");
  const DerivedParams dp = derive_params(cfg);
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  for (int i = 0; i < int(pool.size()); ++i) {
    if (pool[i].targets.size() != 1)
      throw std::invalid_argument("build_training_corpus: pool member " + std::to_string(i) + " is not a single-target example");
    (pool[i].split == "test" ? test_ids : train_ids).push_back(i);
  }

  Dataset ds;
  ds.manifest.config = cfg;
  std::mt19937_64 rng(opts.seed);
  std::vector<std::string>& warnings = ds.manifest.warnings;

  auto make_side = [&](const std::vector<int>& ids, const std::array<int, 4>& per_count, const std::string& side) {
    const int requested = per_count[0] + per_count[1] + per_count[2] + per_count[3];
    if (requested == 0) return;
    if (ids.empty()) throw std::invalid_argument("build_training_corpus: no pool members available for " + side);
    long draws_needed = 0;
    for (int k = 0; k < 4; ++k) draws_needed += long(per_count[k]) * (k + 1);
    if (draws_needed > long(ids.size()))
      warnings.push_back(side + ": " + std::to_string(draws_needed) + " target draws from " + std::to_string(ids.size()) +
                         " pool members; members are reused");
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    std::uniform_real_distribution<double> shift(-opts.max_shift_bins * dp.range_resolution,
                                                 opts.max_shift_bins * dp.range_resolution);
    int separation_failures = 0;
    for (int k = 1; k <= 4; ++k) {
      std::vector<LabeledExample> group;
      for (int e = 0; e < per_count[k - 1]; ++e) {
        std::vector<LabeledExample> parts;
        std::vector<Center> placed;
        int draws = 0;
        while (int(parts.size()) < k) {
          const LabeledExample& member = pool[ids[pick(rng)]];
          double delta = shift(rng);
          const double moved = member.targets[0].range + delta;
          if (!(moved > dp.range_resolution) || !(moved < dp.max_range - dp.range_resolution)) delta = 0.0;
          const PointTarget& t = member.targets[0];
          const Center c{range_bin_of(cfg, t.range + delta), angle_bin_of(cfg, t.azimuth)};
          const bool ok = far_enough(placed, c, opts.min_separation_bins);
          if (!ok && ++draws < opts.max_draws) continue;
          if (!ok) ++separation_failures;
          parts.push_back(range_shift_augment(member, delta, cfg));
          placed.push_back(c);
        }
        LabeledExample ex = superpose(parts);
        ex.frame = normalize_frame(ex.frame);
        ex.split = side;
        group.push_back(std::move(ex));
      }
      if (side == "train") {
        // Stratified validation split: the first val_fraction of every target-count group.
        const int n_val = int(std::lround(opts.val_fraction * double(group.size())));
        for (int i = 0; i < n_val; ++i) group[i].split = "val";
      }
      for (auto& ex : group) ds.examples.push_back(std::move(ex));
    }
    if (separation_failures > 0)
      warnings.push_back(side + ": " + std::to_string(separation_failures) + " targets placed below the separation limit");
  };

  make_side(train_ids, opts.train_per_count, "train");
  make_side(test_ids, opts.test_per_count, "test");
  for (std::size_t i = 0; i < ds.examples.size(); ++i) ds.examples[i].frame.frame_index = long(i);

  ds.manifest.example_count = ds.examples.size();
  ds.manifest.augmentation = nlohmann::json{{"range_shift_max_bins", opts.max_shift_bins},
                                            {"min_separation_bins", opts.min_separation_bins},
                                            {"train_per_count", opts.train_per_count},
                                            {"test_per_count", opts.test_per_count},
                                            {"val_fraction", opts.val_fraction},
                                            {"seed", opts.seed}};
  ds.manifest.provenance = nlohmann::json{{"pool_size", pool.size()},
                                          {"pool_train_members", train_ids.size()},
                                          {"pool_test_members", test_ids.size()}};
  return ds;
}

DatasetManifest save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  return save_dataset(dir, ds.manifest.config, ds.examples, ds.manifest.augmentation, ds.manifest.provenance,
                      ds.manifest.warnings);
}

}  // namespace rawradar
