#include "rawradar/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "rawradar/seed.hpp"

namespace rawradar {

namespace {

template <typename F>
void parallel_for(std::size_t n, int workers, F&& body) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(std::size_t(std::max(workers, 1)), n));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) body(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

DetectionSet extract_clusters(std::span<const double> prob, const RadarConfig& cfg, double threshold) {
  const int nr = cfg.n_range_bins;
  const int na = cfg.n_angle_bins;
  if (prob.size() != std::size_t(nr) * na)
    throw ShapeError("extract_clusters: map of " + std::to_string(prob.size()) + " values for a " + std::to_string(nr) +
                     "x" + std::to_string(na) + " grid");
  const double dr = derive_params(cfg).range_resolution;
  const double angle_step = na > 1 ? (cfg.angle_max - cfg.angle_min) / (na - 1) : 0.0;
  std::vector<int> comp(prob.size(), -1);
  DetectionSet out;
  std::vector<int> stack;
  for (int r0 = 0; r0 < nr; ++r0)
    for (int a0 = 0; a0 < na; ++a0) {
      const std::size_t seed = std::size_t(r0) * na + a0;
      if (!(prob[seed] >= threshold) || comp[seed] >= 0) continue;
      Cluster c;
      double wr = 0, wa = 0;
      comp[seed] = int(out.size());
      stack.assign(1, int(seed));
      while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        const int r = idx / na, a = idx % na;
        const double w = prob[idx];
        c.mass += w;
        wr += w * r;
        wa += w * a;
        c.members.push_back({r, a});
        for (int dr_ = -1; dr_ <= 1; ++dr_)
          for (int da = -1; da <= 1; ++da) {
            const int rr = r + dr_, aa = a + da;
            if (rr < 0 || rr >= nr || aa < 0 || aa >= na) continue;
            const std::size_t j = std::size_t(rr) * na + aa;
            if (comp[j] >= 0 || !(prob[j] >= threshold)) continue;
            comp[j] = int(out.size());
            stack.push_back(int(j));
          }
      }
      std::sort(c.members.begin(), c.members.end());
      c.range_m = wr / c.mass * dr;
      c.angle_deg = cfg.angle_min + wa / c.mass * angle_step;
      out.push_back(std::move(c));
    }
  return out;
}

DetectionSet label_clusters(const LabelMask& mask, const RadarConfig& cfg) {
  std::vector<double> p(mask.bits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = mask.bits[i] ? 1.0 : 0.0;
  return extract_clusters(p, cfg, 0.5);
}

double cartesian_distance(const Cluster& a, const Cluster& b) {
  const double xa = a.range_m * std::sin(deg2rad(a.angle_deg)), ya = a.range_m * std::cos(deg2rad(a.angle_deg));
  const double xb = b.range_m * std::sin(deg2rad(b.angle_deg)), yb = b.range_m * std::cos(deg2rad(b.angle_deg));
  return std::hypot(xa - xb, ya - yb);
}

std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int rows = int(cost.size());
  if (rows == 0) return {};
  const int cols = int(cost[0].size());
  for (const auto& row : cost)
    if (int(row.size()) != cols) throw std::invalid_argument("hungarian: ragged cost matrix");
  if (cols == 0) return std::vector<int>(rows, -1);
  if (rows > cols) {
    std::vector<std::vector<double>> t(cols, std::vector<double>(rows));
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) t[j][i] = cost[i][j];
    const auto tc = hungarian(t);
    std::vector<int> out(rows, -1);
    for (int j = 0; j < cols; ++j) out[tc[j]] = j;
    return out;
  }
  // Potentials method, rows <= cols, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0);
  std::vector<int> p(cols + 1, 0), way(cols + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(cols + 1, inf);
    std::vector<char> used(cols + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> out(rows, -1);
  for (int j = 1; j <= cols; ++j)
    if (p[j]) out[p[j] - 1] = j - 1;
  return out;
}

MatchResult match_detections(const DetectionSet& pred, const DetectionSet& truth, double max_dist) {
  MatchResult m;
  if (pred.empty() || truth.empty()) {
    m.fp = int(pred.size());
    m.fn = int(truth.size());
    return m;
  }
  std::vector<std::vector<double>> cost(pred.size(), std::vector<double>(truth.size()));
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t j = 0; j < truth.size(); ++j) cost[i][j] = cartesian_distance(pred[i], truth[j]);
  const auto assign = hungarian(cost);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (assign[i] < 0) continue;
    const double d = cost[i][assign[i]];
    m.pairs.push_back({int(i), assign[i]});
    m.distances.push_back(d);
    m.total_distance += d;
    if (d <= max_dist) ++m.tp;
  }
  m.fp = int(pred.size()) - m.tp;
  m.fn = int(truth.size()) - m.tp;
  return m;
}

double CountStats::f1() const {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * double(tp) / double(denom);
}

std::string EvalReport::summary() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "examples " << examples.size() << "  F1 " << f1() << "  TP " << overall.tp << "  FP " << overall.fp << "  FN "
      << overall.fn << "  mean error " << mean_localization_error << " m\n";
  for (const auto& [k, s] : per_count)
    out << "  targets " << k << ": F1 " << s.f1() << "  TP " << s.tp << "  FP " << s.fp << "  FN " << s.fn << "\n";
  return out.str();
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ostringstream out;
  out << "targets,tp,fp,fn,f1\n" << std::setprecision(10);
  for (const auto& [k, s] : per_count) out << k << "," << s.tp << "," << s.fp << "," << s.fn << "," << s.f1() << "\n";
  out << "all," << overall.tp << "," << overall.fp << "," << overall.fn << "," << f1() << "\n";
  const std::string text = out.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

EvalReport evaluate(const std::vector<const LabeledExample*>& examples, const Detector& detect, const RadarConfig& cfg,
                    double max_dist, int workers) {
  EvalReport report;
  report.examples.resize(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    const LabeledExample& ex = *examples[i];
    const DetectionSet truth = label_clusters(ex.label, cfg);
    ExampleMatch em;
    em.index = i;
    em.n_targets = ex.targets.empty() ? int(truth.size()) : int(ex.targets.size());
    em.match = match_detections(detect(i, ex), truth, max_dist);
    report.examples[i] = std::move(em);
  });
  double err = 0;
  long n_err = 0;
  for (const auto& em : report.examples) {
    report.overall.add(em.match);
    report.per_count[em.n_targets].add(em.match);
    for (double d : em.match.distances)
      if (d <= max_dist) {
        err += d;
        ++n_err;
      }
  }
  report.mean_localization_error = n_err ? err / double(n_err) : 0.0;
  return report;
}

EvalReport evaluate_model(Model& model, const std::vector<const LabeledExample*>& examples, const RadarConfig& cfg,
                          double threshold, int batch_size, int workers) {
  if (batch_size < 1) throw std::invalid_argument("evaluate_model: batch_size must be positive");
  const std::size_t n = examples.size();
  const std::size_t per = std::size_t(cfg.n_range_bins) * cfg.n_angle_bins;
  std::vector<double> maps(n * per);
  const std::size_t n_batches = (n + batch_size - 1) / batch_size;
  parallel_for(n_batches, workers, [&](std::size_t b) {
    std::vector<const Frame*> frames;
    for (std::size_t i = b * batch_size; i < std::min(n, (b + 1) * batch_size); ++i) frames.push_back(&examples[i]->frame);
    const ag::Tensor p = predict(model, frames);
    std::copy(p.values().begin(), p.values().end(), maps.begin() + b * batch_size * per);
  });
  return evaluate(
      examples,
      [&](std::size_t i, const LabeledExample&) {
        return extract_clusters(std::span<const double>(maps.data() + i * per, per), cfg, threshold);
      },
      cfg, 0.375, 1);
}

EvalReport evaluate_classic(const std::vector<const LabeledExample*>& examples, const RadarConfig& cfg,
                            const PipelineParams& params, int workers) {
  return evaluate(
      examples,
      [&](std::size_t, const LabeledExample& ex) {
        ClassicPipeline pipeline(cfg, params);
        return pipeline.detect(ex.frame);
      },
      cfg, 0.375, workers);
}

std::vector<const LabeledExample*> select_split(const Dataset& ds, const std::string& split) {
  std::vector<const LabeledExample*> out;
  for (const auto& ex : ds.examples)
    if (ex.split == split) out.push_back(&ex);
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (!(lr >= 0) || !(cfel_lr_scale >= 0)) throw ConfigError("train: learning rates must be >= 0");
  if (!(lr_final_scale >= 0 && lr_final_scale <= 1)) throw ConfigError("train: lr_final_scale must lie in [0, 1]");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("train: threshold must lie in (0, 1)");
  if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  weights.validate();
}

void write_metric_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
  std::ostringstream out;
  out << "epoch,L_FL,L_KL,L_DA,total,val_F1,weight_divergence\n" << std::setprecision(10);
  for (const auto& m : log)
    out << m.epoch << "," << m.focal << "," << m.kl << "," << m.da << "," << m.total << "," << m.val_f1 << ","
        << m.weight_divergence << "\n";
  const std::string text = out.str();
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

TrainResult train(Model model, const Dataset& corpus, const TrainConfig& cfg, const Model* reference,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  TrainResult result;
  const bool da_mode = cfg.mode == TrainMode::DomainAdapt;
  if (da_mode && !reference) throw ConfigError("train: domain adaptation requires a reference model");
  if (da_mode && cfg.weights.beta == 0.0)
    result.warnings.push_back("domain adaptation with beta = 0: weights are not tied to the reference");
  const Model* ref = da_mode ? reference : nullptr;
  const RadarConfig& rc = corpus.manifest.config;
  if (model.arch.n_ft != rc.n_range_bins || model.arch.n_st != rc.n_angle_bins || model.arch.frame_samples != rc.n_samples ||
      model.arch.frame_chirps != rc.n_chirps || model.arch.n_rx != rc.n_rx)
    throw ConfigError("train: model architecture does not match the corpus configuration");

  const auto train_set = select_split(corpus, "train");
  auto val_set = select_split(corpus, "val");
  if (cfg.epochs > 0 && train_set.empty()) throw ConfigError("train: corpus has no training examples");
  if (val_set.empty()) {
    result.warnings.push_back("no validation split; validating on the training split");
    val_set = train_set;
  }

  auto validate_f1 = [&](Model& m) {
    return val_set.empty() ? 0.0 : evaluate_model(m, val_set, rc, cfg.threshold, 32, cfg.workers).f1();
  };

  // Row 0: losses in inference mode over the validation split.
  {
    EpochMetrics m0;
    double n = 0;
    for (std::size_t s = 0; s < val_set.size(); s += cfg.batch_size) {
      std::vector<const Frame*> frames;
      std::vector<const LabelMask*> labels;
      for (std::size_t i = s; i < std::min(val_set.size(), s + cfg.batch_size); ++i) {
        frames.push_back(&val_set[i]->frame);
        labels.push_back(&val_set[i]->label);
      }
      ag::Graph g;
      const auto fr = forward(model, g, g.constant(frames_to_tensor(frames)), ForwardOptions{});
      const auto tl = total_loss(g, fr, labels_to_tensor(labels), model, ref, cfg.weights);
      const double w = double(frames.size());
      m0.focal += w * tl.parts.focal;
      m0.kl += w * tl.parts.kl;
      m0.da = tl.parts.da;
      m0.total += w * (tl.parts.focal + cfg.weights.theta * tl.parts.kl);
      n += w;
    }
    if (n > 0) {
      m0.focal /= n;
      m0.kl /= n;
      m0.total = m0.total / n + cfg.weights.beta * m0.da;
    }
    m0.weight_divergence = ref ? weight_divergence(model, *ref) : 0.0;
    m0.val_f1 = validate_f1(model);
    result.log.push_back(m0);
    if (on_epoch) on_epoch(m0);
  }
  result.best_val_f1 = result.log[0].val_f1;
  Model best = model;

  std::vector<ag::AdamState> states(model.params.size());
  ag::AdamConfig adam;
  adam.lr = cfg.lr;
  ag::AdamConfig adam_cfel = adam;
  adam_cfel.lr = cfg.lr * cfg.cfel_lr_scale;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  const long batches_per_epoch = long((train_set.size() + cfg.batch_size - 1) / cfg.batch_size);
  const double total_steps = double(std::max(1L, batches_per_epoch * cfg.epochs));
  auto lr_factor = [&](long s) {
    return cfg.lr_final_scale + (1.0 - cfg.lr_final_scale) * 0.5 * (1.0 + std::cos(kPi * double(s) / total_steps));
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0x5EED0000ull + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics em;
    em.epoch = epoch;
    double seen = 0;
    int batch_index = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size, ++batch_index) {
      std::vector<const Frame*> frames;
      std::vector<const LabelMask*> labels;
      for (std::size_t i = s; i < std::min(order.size(), s + cfg.batch_size); ++i) {
        frames.push_back(&train_set[order[i]]->frame);
        labels.push_back(&train_set[order[i]]->label);
      }
      model.zero_grad();
      adam.lr = cfg.lr * lr_factor(step);
      adam_cfel.lr = adam.lr * cfg.cfel_lr_scale;
      ag::Graph g;
      ForwardOptions fo;
      fo.train = true;
      fo.seed = derive_seed(cfg.seed, std::uint64_t(step));
      const auto fr = forward(model, g, g.constant(frames_to_tensor(frames)), fo);
      const auto tl = total_loss(g, fr, labels_to_tensor(labels), model, ref, cfg.weights);
      if (!std::isfinite(tl.parts.total))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      g.backward(tl.total);
      try {
        for (std::size_t k = 0; k < model.params.size(); ++k) {
          const bool is_cfel = model.params[k].name.rfind("cfel.", 0) == 0;
          ag::adam_step(model.params[k], states[k], is_cfel ? adam_cfel : adam);
        }
      } catch (const ag::NonFiniteGradient& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      model.wrap_cfel();
      ++step;
      const double w = double(frames.size());
      em.focal += w * tl.parts.focal;
      em.kl += w * tl.parts.kl;
      em.da += w * tl.parts.da;
      em.total += w * tl.parts.total;
      seen += w;
    }
    if (seen > 0) {
      em.focal /= seen;
      em.kl /= seen;
      em.da /= seen;
      em.total /= seen;
    }
    em.weight_divergence = ref ? weight_divergence(model, *ref) : 0.0;
    em.val_f1 = validate_f1(model);
    result.log.push_back(em);
    if (on_epoch) on_epoch(em);
    if (em.val_f1 >= result.best_val_f1) {
      result.best_val_f1 = em.val_f1;
      result.best_epoch = epoch;
      best = model;
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && epoch % cfg.checkpoint_every == 0)
      save_checkpoint(cfg.checkpoint_dir / ("epoch_" + std::to_string(epoch)), model,
                      nlohmann::json{{"epoch", epoch}, {"val_f1", em.val_f1}});
  }
  if (!cfg.metric_log.empty()) write_metric_log(cfg.metric_log, result.log);
  result.model = cfg.keep_best ? std::move(best) : std::move(model);
  if (!cfg.keep_best) {
    result.best_epoch = cfg.epochs;
    result.best_val_f1 = result.log.back().val_f1;
  }
  return result;
}

void write_pgm(const std::filesystem::path& path, std::span<const double> values, int h, int w, double lo, double hi) {
  if (values.size() != std::size_t(h) * w) throw ShapeError("write_pgm: value count does not match the image size");
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values) {
    const double t = std::clamp((v - lo) / span, 0.0, 1.0);
    bytes.push_back(std::uint8_t(std::lround(255.0 * t)));
  }
  write_file(path, bytes);
}

void write_triptych_pgm(const std::filesystem::path& path, const LabelMask& label, const RangeAngleImage& rai,
                        std::span<const double> prob) {
  const int h = label.n_range, w = label.n_angle;
  if (rai.n_range != h || rai.n_angle != w || prob.size() != std::size_t(h) * w)
    throw ShapeError("write_triptych_pgm: panel sizes differ");
  const int gap = 1;
  const int W = 3 * w + 2 * gap;
  std::vector<double> img(std::size_t(h) * W, 0.5);
  double peak = 0;
  for (double v : rai.values) peak = std::max(peak, v);
  for (int r = 0; r < h; ++r)
    for (int a = 0; a < w; ++a) {
      img[std::size_t(r) * W + a] = label.at(r, a) ? 1.0 : 0.0;
      const double db = peak > 0 && rai.at(r, a) > 0 ? 10.0 * std::log10(rai.at(r, a) / peak) : -40.0;
      img[std::size_t(r) * W + w + gap + a] = std::clamp((db + 40.0) / 40.0, 0.0, 1.0);
      img[std::size_t(r) * W + 2 * (w + gap) + a] = prob[std::size_t(r) * w + a];
    }
  write_pgm(path, img, h, W, 0.0, 1.0);
}

}  // namespace rawradar
