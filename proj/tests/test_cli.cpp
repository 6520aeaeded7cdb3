#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "rawradar/dataset_io.hpp"

using namespace rawradar;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("rawradar_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::string p(const fs::path& d) { return d.string(); }

// Tiny desk corpora shared by the training tests.
struct Corpora {
  fs::path root, syn, walk;
};

const Corpora& corpora() {
  static const Corpora c = [] {
    Corpora k;
    k.root = temp_dir("corpora");
    k.syn = k.root / "syn";
    k.walk = k.root / "walk";
    const auto grid = k.root / "grid", wpool = k.root / "wpool";
    EXPECT_EQ(run_cli({"simulate", "--grid", "--profile", "desk", "--grid-ranges", "8", "--grid-angles", "4", "--snr",
                       "15", "--out", p(grid)})
                  .code,
              0);
    EXPECT_EQ(run_cli({"simulate", "--corpus", "--pool", p(grid), "--train-per-count", "10", "--out", p(k.syn)}).code, 0);
    EXPECT_EQ(run_cli({"simulate", "--walk", "--profile", "desk", "--count", "40", "--out", p(wpool)}).code, 0);
    EXPECT_EQ(run_cli({"simulate", "--corpus", "--pool", p(wpool), "--train-per-count", "8", "--test-per-count", "4",
                       "--out", p(k.walk)})
                  .code,
              0);
    return k;
  }();
  return c;
}

std::vector<std::string> train_synth_args(const fs::path& out) {
  return {"train-synth", "--profile", "desk", "--data", p(corpora().syn), "--epochs", "1", "--batch", "8",
          "--channels", "3", "--seed", "4", "--out", p(out)};
}

}  // namespace

TEST(Cli, MissingSubcommandIsUsageError) {
  const auto r = run_cli({});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_EQ(first_line(r.err).rfind("error: usage:", 0), 0u) << r.err;
}

TEST(Cli, UnknownFlagRejected) {
  const auto d = temp_dir("unknown");
  const auto r = run_cli({"simulate", "--grid", "--profile", "desk", "--out", p(d / "x"), "--bogus"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(first_line(r.err).find("--bogus"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(d / "x"));
}

TEST(Cli, UnknownSubcommandRejected) {
  EXPECT_EQ(run_cli({"fly"}).code, cli::kExitUsage);
}

TEST(Cli, BadProfileRejected) {
  const auto d = temp_dir("profile");
  EXPECT_EQ(run_cli({"simulate", "--grid", "--profile", "huge", "--out", p(d)}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  const auto r = run_cli({"--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("train-da"), std::string::npos);
}

TEST(Cli, TrainDaWithoutReferenceIsUsageError) {
  const auto d = temp_dir("noref");
  const auto r = run_cli({"train-da", "--profile", "desk", "--data", p(corpora().walk), "--out", p(d)});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_EQ(first_line(r.err), "error: usage: train-da requires --reference");
  EXPECT_NE(r.err.find("Usage:"), std::string::npos);
}

TEST(Cli, SimulateGridWritesFullCorpus) {
  const auto d = temp_dir("grid");
  const auto r = run_cli({"simulate", "--grid", "--out", p(d / "ds")});
  ASSERT_EQ(r.code, 0) << r.err;
  const DatasetManifest man = load_manifest(d / "ds");
  EXPECT_EQ(man.example_count, 4096u);
  EXPECT_EQ(man.config.n_range_bins, 128);
  EXPECT_EQ(man.config.n_angle_bins, 32);
  EXPECT_TRUE(fs::exists(d / "ds" / "resolved_config.json"));
  fs::remove_all(d);
}

TEST(Cli, SnapshotRecordsResolvedConfig) {
  const auto d = temp_dir("snapshot");
  {
    std::ofstream(d / "radar.cfg") << "# override\nn_chirps = 8\n";
  }
  const auto r = run_cli({"simulate", "--walk", "--profile", "desk", "--config", p(d / "radar.cfg"), "--count", "5",
                          "--seed", "9", "--out", p(d / "ds")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto snap = read_json(d / "ds" / "resolved_config.json");
  EXPECT_EQ(snap["command"], "simulate");
  EXPECT_EQ(snap["seed"], 9);
  EXPECT_EQ(snap["radar"]["n_chirps"], 8);
  EXPECT_EQ(snap["radar"]["n_samples"], 64);
  EXPECT_EQ(load_manifest(d / "ds").config.n_chirps, 8);
}

TEST(Cli, BadConfigFileReportsConfigCategory) {
  const auto d = temp_dir("badcfg");
  {
    std::ofstream(d / "radar.cfg") << "n_chirps = many\n";
  }
  const auto r = run_cli({"simulate", "--grid", "--config", p(d / "radar.cfg"), "--out", p(d / "ds")});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_EQ(r.err.rfind("error: config:", 0), 0u) << r.err;
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1);
}

TEST(Cli, CorruptDatasetReportsStorageCategory) {
  const auto d = temp_dir("corrupt");
  ASSERT_EQ(run_cli({"simulate", "--walk", "--profile", "desk", "--count", "4", "--out", p(d / "ds")}).code, 0);
  auto payload = read_file(d / "ds" / "payload.bin");
  payload[100] ^= 0x10;
  write_file(d / "ds" / "payload.bin", payload);
  const auto r = run_cli({"classic", "--profile", "desk", "--data", p(d / "ds"), "--out", p(d / "cl")});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_EQ(r.err.rfind("error: storage.checksum-mismatch:", 0), 0u) << r.err;
  EXPECT_EQ(r.err.find('\n'), r.err.size() - 1);
}

TEST(Cli, SimulateIsByteIdenticalUnderFixedSeed) {
  const auto d = temp_dir("det_sim");
  for (const char* name : {"a", "b"})
    ASSERT_EQ(run_cli({"simulate", "--walk", "--profile", "desk", "--count", "12", "--seed", "3", "--out", p(d / name)})
                  .code,
              0);
  for (const char* f : {"payload.bin", "manifest.json", "resolved_config.json"})
    EXPECT_EQ(read_file(d / "a" / f), read_file(d / "b" / f)) << f;
  ASSERT_EQ(run_cli({"simulate", "--walk", "--profile", "desk", "--count", "12", "--seed", "4", "--out", p(d / "c")})
                .code,
            0);
  EXPECT_NE(read_file(d / "a" / "payload.bin"), read_file(d / "c" / "payload.bin"));
}

TEST(Cli, TrainingIsByteIdenticalUnderFixedSeed) {
  const auto d = temp_dir("det_train");
  for (const char* name : {"a", "b"}) {
    const auto r = run_cli(train_synth_args(d / name));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const char* f : {"model/params.bin", "model/manifest.json", "metrics.csv", "summary.json"})
    EXPECT_EQ(read_file(d / "a" / f), read_file(d / "b" / f)) << f;
}

TEST(Cli, PretrainAdaptEvaluateClassicAndImages) {
  const auto d = temp_dir("flow");
  ASSERT_EQ(run_cli(train_synth_args(d / "pre")).code, 0);
  auto r = run_cli({"train-da", "--profile", "desk", "--data", p(corpora().walk), "--reference", p(d / "pre" / "model"),
                    "--epochs", "1", "--batch", "8", "--beta", "1e-2", "--out", p(d / "da")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("divergence"), std::string::npos);
  EXPECT_DOUBLE_EQ(read_json(d / "da" / "resolved_config.json")["train"]["beta"].get<double>(), 1e-2);

  r = run_cli({"eval", "--profile", "desk", "--model", p(d / "da" / "model"), "--data", p(corpora().walk), "--classic",
               "--out", p(d / "ev")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = read_json(d / "ev" / "report.json");
  EXPECT_EQ(rep["vae"]["examples"], 16);
  EXPECT_TRUE(rep.contains("classic"));

  r = run_cli({"classic", "--profile", "desk", "--data", p(corpora().walk), "--images", "1", "--out", p(d / "cl")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = read_file(d / "cl" / "detections.csv");
  EXPECT_EQ(std::string(csv.begin(), csv.begin() + 42), "frame_id,cluster_id,range_m,angle_deg,mass");
  EXPECT_TRUE(fs::exists(d / "cl" / "rai_0.pgm"));
  EXPECT_TRUE(fs::exists(d / "cl" / "rdi_0.pgm"));

  r = run_cli({"dump-images", "--profile", "desk", "--model", p(d / "da" / "model"), "--data", p(corpora().walk),
               "--count", "2", "--out", p(d / "img")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(d / "img" / "triptych_1.pgm"));
  EXPECT_FALSE(fs::exists(d / "img" / "triptych_2.pgm"));
}

TEST(Cli, EmptySplitIsReported) {
  const auto d = temp_dir("split");
  ASSERT_EQ(run_cli(train_synth_args(d / "pre")).code, 0);
  const auto r = run_cli({"eval", "--profile", "desk", "--model", p(d / "pre" / "model"), "--data", p(corpora().syn),
                          "--split", "test", "--out", p(d / "ev")});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_EQ(r.err.rfind("error: invalid-argument:", 0), 0u) << r.err;
}

TEST(Cli, GradCheckPassesOnSmallModel) {
  const auto d = temp_dir("grad");
  const auto r = run_cli({"grad-check", "--profile", "desk", "--channels", "3", "--per-param", "4", "--out", p(d)});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_TRUE(read_json(d / "grad_check.json")["model"]["passed"].get<bool>());
}
