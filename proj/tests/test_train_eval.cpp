#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "rawradar/dataset.hpp"
#include "rawradar/synth.hpp"
#include "rawradar/train_eval.hpp"

using namespace rawradar;

namespace {

Cluster at(double range, double angle) {
  Cluster c;
  c.range_m = range;
  c.angle_deg = angle;
  return c;
}

double oracle_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t rows = cost.size(), cols = cost.empty() ? 0 : cost[0].size();
  if (rows == 0 || cols == 0) return 0;
  const bool transpose = rows > cols;
  const std::size_t a = transpose ? cols : rows, b = transpose ? rows : cols;
  std::vector<int> perm(b);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < a; ++i) s += transpose ? cost[perm[i]][i] : cost[i][perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Dataset tiny_corpus(const RadarConfig& cfg) {
  GridOptions go;
  go.noise_snr_db = 20;
  go.max_velocity = 0.5;
  auto pool = grid_examples(cfg, default_grid_ranges(cfg, 8), default_grid_angles(cfg, 4), go);
  for (auto& e : pool) e.split = "train";
  CorpusOptions co;
  co.train_per_count = {6, 6, 0, 0};
  co.test_per_count = {0, 0, 0, 0};
  co.val_fraction = 0.25;
  return build_training_corpus(cfg, pool, co);
}

ArchConfig tiny_arch(const RadarConfig& cfg) {
  ArchConfig a = ArchConfig::desk(cfg);
  a.initial_channels = 3;
  a.latent_dim = 4;
  return a;
}

}  // namespace

TEST(Clusters, BlobCenterOnFullGrid) {
  const RadarConfig cfg;
  std::vector<double> prob(std::size_t(cfg.n_range_bins) * cfg.n_angle_bins, 0.1);
  for (int dr = -1; dr <= 1; ++dr)
    for (int da = -1; da <= 1; ++da) prob[std::size_t(40 + dr) * cfg.n_angle_bins + 16 + da] = 0.9;
  const auto c = extract_clusters(prob, cfg);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].range_m, 40 * derive_params(cfg).range_resolution, 1e-9);
  EXPECT_NEAR(c[0].range_m, 1.50, 2e-3);
  EXPECT_NEAR(c[0].angle_deg, -50.0 + 16 * 100.0 / 31.0, 1e-9);
  EXPECT_EQ(c[0].members.size(), 9u);
}

TEST(Clusters, NanMapIsEmpty) {
  const RadarConfig cfg = RadarConfig::desk();
  std::vector<double> prob(std::size_t(cfg.n_range_bins) * cfg.n_angle_bins, std::numeric_limits<double>::quiet_NaN());
  EXPECT_TRUE(extract_clusters(prob, cfg, 0.5).empty());
}

TEST(Clusters, UniformBelowThresholdIsEmpty) {
  const RadarConfig cfg = RadarConfig::desk();
  std::vector<double> prob(std::size_t(cfg.n_range_bins) * cfg.n_angle_bins, 0.49);
  EXPECT_TRUE(extract_clusters(prob, cfg).empty());
}

TEST(Clusters, DisjointAndDiagonalBlobs) {
  const RadarConfig cfg = RadarConfig::desk();
  const int na = cfg.n_angle_bins;
  std::vector<double> prob(std::size_t(cfg.n_range_bins) * na, 0.0);
  prob[5 * na + 1] = 1;
  prob[20 * na + 6] = 1;
  prob[21 * na + 7] = 1;  // diagonal neighbour joins the same component
  const auto c = extract_clusters(prob, cfg);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].members.size() + c[1].members.size(), 3u);
}

TEST(Clusters, LabelClustersRecoverTargets) {
  const RadarConfig cfg = RadarConfig::desk();
  const std::vector<PointTarget> targets{{0.5, 0, -20, 1}, {0.9, 0, 25, 1}};
  const auto c = label_clusters(label_for_targets(cfg, targets), cfg);
  ASSERT_EQ(c.size(), 2u);
  const auto m = match_detections(c, {at(0.5, -20), at(0.9, 25)}, 0.1);
  EXPECT_EQ(m.tp, 2);
}

TEST(Hungarian, MatchesPermutationOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> size(0, 5);
  std::uniform_real_distribution<double> u(0, 10);
  for (int t = 0; t < 300; ++t) {
    const int r = size(rng), c = size(rng);
    std::vector<std::vector<double>> cost(r, std::vector<double>(c));
    for (auto& row : cost)
      for (auto& v : row) v = u(rng);
    const auto assign = hungarian(cost);
    ASSERT_EQ(int(assign.size()), r);
    double s = 0;
    std::vector<int> used(c, 0);
    for (int i = 0; i < r; ++i) {
      if (assign[i] < 0) continue;
      ASSERT_LT(assign[i], c);
      EXPECT_EQ(used[assign[i]]++, 0);
      s += cost[i][assign[i]];
    }
    EXPECT_EQ(std::count_if(assign.begin(), assign.end(), [](int v) { return v >= 0; }), std::min(r, c));
    EXPECT_NEAR(s, oracle_cost(cost), 1e-9);
  }
}

TEST(Match, ExactPredictionsAreAllTruePositives) {
  const DetectionSet truth{at(0.5, -10), at(1.0, 20), at(0.8, 0)};
  const auto m = match_detections(truth, truth);
  EXPECT_EQ(m.tp, 3);
  EXPECT_EQ(m.fp, 0);
  EXPECT_EQ(m.fn, 0);
  EXPECT_NEAR(m.total_distance, 0.0, 1e-12);
}

TEST(Match, PairBeyondThresholdIsFalsePositiveAndNegative) {
  const auto m = match_detections({at(1.40, 0)}, {at(1.0, 0)});
  EXPECT_EQ(m.tp, 0);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.fn, 1);
  const auto near = match_detections({at(1.30, 0)}, {at(1.0, 0)});
  EXPECT_EQ(near.tp, 1);
}

TEST(Match, CrossedConfigurationBeatsGreedy) {
  // Greedy takes the closest pair (p0, t0) first and leaves p1 too far from t1.
  const DetectionSet pred{at(1.0, 0), at(1.3, 0)};
  const DetectionSet truth{at(1.1, 0), at(0.8, 0)};
  const auto m = match_detections(pred, truth);
  EXPECT_EQ(m.tp, 2);
  EXPECT_EQ(m.fp + m.fn, 0);
}

TEST(Match, CartesianDistance) {
  EXPECT_NEAR(cartesian_distance(at(1.0, 30), at(1.0, -30)), 1.0, 1e-12);
  EXPECT_NEAR(cartesian_distance(at(0.0, 10), at(2.0, 77)), 2.0, 1e-12);
}

TEST(Evaluate, PerfectAndEmptyDetectors) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  const auto ex = select_split(ds, "train");
  ASSERT_FALSE(ex.empty());
  const auto perfect = evaluate(ex, [&](std::size_t, const LabeledExample& e) { return label_clusters(e.label, cfg); },
                                cfg);
  EXPECT_EQ(perfect.f1(), 1.0);
  EXPECT_EQ(perfect.overall.fp + perfect.overall.fn, 0);
  const auto none = evaluate(ex, [](std::size_t, const LabeledExample&) { return DetectionSet{}; }, cfg);
  EXPECT_EQ(none.f1(), 0.0);
  long truths = 0;
  for (const auto* e : ex) truths += long(label_clusters(e->label, cfg).size());
  EXPECT_EQ(none.overall.fn, truths);
}

TEST(Evaluate, OrderInvariantAndParallelConsistent) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  auto ex = select_split(ds, "train");
  const PipelineParams pp = PipelineParams::desk();
  const double f1 = evaluate_classic(ex, cfg, pp).f1();
  EXPECT_EQ(evaluate_classic(ex, cfg, pp, 3).f1(), f1);
  std::reverse(ex.begin(), ex.end());
  EXPECT_EQ(evaluate_classic(ex, cfg, pp).f1(), f1);
}

TEST(Evaluate, F1Formula) {
  CountStats s;
  s.tp = 6;
  s.fp = 2;
  s.fn = 4;
  EXPECT_DOUBLE_EQ(s.f1(), 12.0 / 18.0);
  EXPECT_EQ(CountStats{}.f1(), 1.0);
}

TEST(Divergence, MonotoneUnderInterpolation) {
  const RadarConfig cfg = RadarConfig::desk();
  const Model ref = build_model(tiny_arch(cfg), 1);
  const Model other = build_model(tiny_arch(cfg), 2);
  double prev = -1;
  for (int k = 0; k <= 10; ++k) {
    const double t = k / 10.0;
    Model m = ref;
    for (std::size_t i = 0; i < m.params.size(); ++i)
      for (std::size_t e = 0; e < m.params[i].value.size(); ++e)
        m.params[i].value[e] = (1 - t) * ref.params[i].value[e] + t * other.params[i].value[e];
    const double d = weight_divergence(m, ref);
    if (k == 0) {
      EXPECT_EQ(d, 0.0);
    }
    EXPECT_GT(d, prev);
    prev = d;
  }
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  const Model m = build_model(tiny_arch(cfg), 4);
  TrainConfig tc;
  tc.epochs = 0;
  const TrainResult r = train(m, ds, tc);
  ASSERT_EQ(r.log.size(), 1u);
  for (std::size_t i = 0; i < m.params.size(); ++i) EXPECT_EQ(r.model.params[i].value.values(), m.params[i].value.values());
}

TEST(Train, DomainAdaptRequiresReference) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  TrainConfig tc;
  tc.mode = TrainMode::DomainAdapt;
  EXPECT_THROW(train(build_model(tiny_arch(cfg), 4), ds, tc), ConfigError);
}

TEST(Train, DomainAdaptLogsDivergenceAndWarnsOnZeroBeta) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  const Model ref = build_model(tiny_arch(cfg), 4);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.mode = TrainMode::DomainAdapt;
  tc.keep_best = false;
  tc.weights.beta = 0;
  const auto log = std::filesystem::temp_directory_path() / "rawradar_train_log.csv";
  tc.metric_log = log;
  const TrainResult r = train(ref, ds, tc, &ref);
  ASSERT_EQ(r.log.size(), 3u);
  EXPECT_EQ(r.log[0].weight_divergence, 0.0);
  EXPECT_GT(r.log[2].weight_divergence, 0.0);
  EXPECT_FALSE(r.warnings.empty());
  std::ifstream in(log);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "epoch,L_FL,L_KL,L_DA,total,val_F1,weight_divergence");
}

TEST(Train, DeterministicUnderFixedSeed) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  const Model m = build_model(tiny_arch(cfg), 4);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  const TrainResult a = train(m, ds, tc);
  const TrainResult b = train(m, ds, tc);
  for (std::size_t i = 0; i < m.params.size(); ++i) EXPECT_EQ(a.model.params[i].value.values(), b.model.params[i].value.values());
  EXPECT_EQ(a.log.back().total, b.log.back().total);
}

TEST(Train, NanLossNamesBatch) {
  const RadarConfig cfg = RadarConfig::desk();
  const Dataset ds = tiny_corpus(cfg);
  Model m = build_model(tiny_arch(cfg), 4);
  m.bias(m.layer("head.out")).value[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  try {
    train(m, ds, tc);
    FAIL() << "no exception";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch 0"), std::string::npos) << e.what();
  }
}

TEST(Images, PgmHeaderAndSize) {
  const auto path = std::filesystem::temp_directory_path() / "rawradar_test.pgm";
  std::vector<double> v{0, 0.5, 1, 2, -1, 0.25};
  write_pgm(path, v, 2, 3, 0, 1);
  const auto bytes = read_file(path);
  const std::string head(bytes.begin(), bytes.begin() + 11);
  EXPECT_EQ(head, "P5\n3 2\n255\n");
  ASSERT_EQ(bytes.size(), 11u + 6u);
  EXPECT_EQ(bytes[11], 0);
  EXPECT_EQ(bytes[13], 255);
  EXPECT_EQ(bytes[14], 255);
  EXPECT_EQ(bytes[15], 0);
}
