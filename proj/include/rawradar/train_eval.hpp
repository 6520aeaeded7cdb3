#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "rawradar/classic.hpp"
#include "rawradar/dataset_io.hpp"
#include "rawradar/vae.hpp"

namespace rawradar {

// 8-connected components of prob >= threshold; each center is the
// probability-weighted mean bin position mapped to (range m, angle deg).
// `prob` is [n_range][n_angle], angle fastest.
DetectionSet extract_clusters(std::span<const double> prob, const RadarConfig& cfg, double threshold = 0.5);
DetectionSet label_clusters(const LabelMask& mask, const RadarConfig& cfg);

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<std::pair<int, int>> pairs;  // (pred, truth) of the optimal assignment
  std::vector<double> distances;           // per pair, m
  double total_distance = 0;
};

// Cartesian distance x = r sin(theta), y = r cos(theta).
double cartesian_distance(const Cluster& a, const Cluster& b);

// Minimum-cost rectangular assignment; returns, per row, the assigned column
// (every row is assigned when rows <= cols, otherwise every column is).
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

// Optimal bipartite matching; pairs farther than max_dist count as FP + FN.
MatchResult match_detections(const DetectionSet& pred, const DetectionSet& truth, double max_dist = 0.375);

struct CountStats {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  double f1() const;
  void add(const MatchResult& m) {
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
};

struct ExampleMatch {
  std::size_t index = 0;
  int n_targets = 0;
  MatchResult match;
};

struct EvalReport {
  CountStats overall;
  std::map<int, CountStats> per_count;
  std::vector<ExampleMatch> examples;
  double mean_localization_error = 0;  // over TP pairs, m

  double f1() const { return overall.f1(); }
  std::string summary() const;
  void write_csv(const std::filesystem::path& path) const;
};

using Detector = std::function<DetectionSet(std::size_t index, const LabeledExample& ex)>;

// Truth comes from the label clusters of every example.
EvalReport evaluate(const std::vector<const LabeledExample*>& examples, const Detector& detect, const RadarConfig& cfg,
                    double max_dist = 0.375, int workers = 1);
// Network inference with dropout off and z = mu.
EvalReport evaluate_model(Model& model, const std::vector<const LabeledExample*>& examples, const RadarConfig& cfg,
                          double threshold = 0.5, int batch_size = 32, int workers = 1);
// Classical chain; each example is an independent stream.
EvalReport evaluate_classic(const std::vector<const LabeledExample*>& examples, const RadarConfig& cfg,
                            const PipelineParams& params, int workers = 1);

std::vector<const LabeledExample*> select_split(const Dataset& ds, const std::string& split);

enum class TrainMode { Synthetic, DomainAdapt };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-3;
  double cfel_lr_scale = 0.1;  // learning rate multiplier of the CFEL frequencies
  // Cosine decay from lr to lr * lr_final_scale over all steps; 1 keeps lr constant.
  double lr_final_scale = 1.0;
  LossWeights weights;
  TrainMode mode = TrainMode::Synthetic;
  std::uint64_t seed = 1;
  double threshold = 0.5;
  int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  std::filesystem::path checkpoint_dir;
  std::filesystem::path metric_log;  // CSV, empty disables
  bool keep_best = true;
  int workers = 1;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double focal = 0;
  double kl = 0;
  double da = 0;
  double total = 0;
  double val_f1 = 0;
  double weight_divergence = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochMetrics> log;
  int best_epoch = 0;
  double best_val_f1 = 0;
  std::vector<std::string> warnings;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Minibatch Adam on total_loss over the "train" split, validated on "val".
// Row 0 of the log describes the model before any update. In domain
// adaptation mode `reference` is required.
TrainResult train(Model model, const Dataset& corpus, const TrainConfig& cfg, const Model* reference = nullptr,
                  const EpochCallback& on_epoch = {});

void write_metric_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& log);

// 8-bit binary PGM of `values` [h][w] scaled from [lo, hi].
void write_pgm(const std::filesystem::path& path, std::span<const double> values, int h, int w, double lo, double hi);
// Label | classical RAI (dB, 40 dB span) | network output, side by side.
void write_triptych_pgm(const std::filesystem::path& path, const LabelMask& label, const RangeAngleImage& rai,
                        std::span<const double> prob);

}  // namespace rawradar
