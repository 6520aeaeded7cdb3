#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

#include "rawradar/cfel.hpp"
#include "rawradar/checks.hpp"
#include "rawradar/classic.hpp"
#include "rawradar/dataset.hpp"
#include "rawradar/dataset_io.hpp"
#include "rawradar/synth.hpp"
#include "rawradar/train_eval.hpp"
#include "rawradar/vae.hpp"

namespace rawradar::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string profile = "full";
  int workers = std::max(1, int(std::thread::hardware_concurrency()));
  std::string out;
};

struct SimulateOpts {
  bool grid = false;
  bool walk = false;
  bool corpus = false;
  int grid_ranges = 0;  // 0 selects the number of range bins
  int grid_angles = 0;  // 0 selects the number of angle bins
  int repeat = 1;
  std::optional<double> snr;
  bool quantize = false;
  double max_velocity = 0.0;
  int count = 200;
  double test_fraction = 0.2;
  std::string pool;
  int train_per_count = 200;
  int test_per_count = 0;
  double val_fraction = 0.1;
  int max_shift_bins = 3;
};

struct ClassicOpts {
  std::string data;
  bool stream = false;
  int images = 0;
};

struct TrainOpts {
  std::string data;
  std::string reference;
  int epochs = 30;
  int batch = 16;
  double lr = 3e-3;
  double lr_final_scale = 1.0;
  double cfel_lr_scale = 0.1;
  int channels = 16;
  std::optional<double> beta;
  double theta = 0.1;
  double gamma = 2.0;
  double alpha = 0.25;
  double threshold = 0.5;
  int checkpoint_every = 0;
  bool final_model = false;
};

struct EvalOpts {
  std::string model;
  std::string data;
  std::string split = "test";
  double threshold = 0.5;
  bool classic = false;
  int count = 8;
};

struct GradOpts {
  int channels = 16;
  std::size_t per_param = 24;
};

RadarConfig profile_config(const std::string& profile) { return profile == "desk" ? RadarConfig::desk() : RadarConfig{}; }

// Profile defaults, then any keys from --config.
RadarConfig resolve_radar(const Common& c) {
  std::string text = to_text(profile_config(c.profile));
  if (!c.config_path.empty()) {
    const auto bytes = read_file(c.config_path);
    text += "\n" + std::string(bytes.begin(), bytes.end());
  }
  return config_from_text(text);
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json common_json(const std::string& command, const Common& c, const RadarConfig& cfg) {
  return json{{"command", command},
              {"seed", c.seed},
              {"profile", c.profile},
              {"config_file", c.config_path},
              {"workers", c.workers},
              {"radar", config_to_json(cfg)}};
}

void write_snapshot(const fs::path& out, json snapshot) {
  fs::create_directories(out);
  write_json(out / "resolved_config.json", snapshot);
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

ArchConfig profile_arch(const std::string& profile, const RadarConfig& cfg, int channels) {
  ArchConfig a = profile == "desk" ? ArchConfig::desk(cfg) : ArchConfig::for_radar(cfg);
  a.initial_channels = channels;
  return a;
}

json report_json(const EvalReport& r) {
  json per = json::object();
  for (const auto& [k, s] : r.per_count) per[std::to_string(k)] = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"f1", s.f1()}};
  return json{{"examples", r.examples.size()},
              {"f1", r.f1()},
              {"tp", r.overall.tp},
              {"fp", r.overall.fp},
              {"fn", r.overall.fn},
              {"mean_localization_error_m", r.mean_localization_error},
              {"per_count", per}};
}

std::vector<double> db_span(std::vector<double> power, double span_db, double& lo, double& hi) {
  double peak = 0;
  for (double v : power) peak = std::max(peak, v);
  for (auto& v : power) v = 10 * std::log10(std::max(v, peak * 1e-12) + 1e-300);
  hi = 10 * std::log10(peak + 1e-300);
  lo = hi - span_db;
  return power;
}

void write_db_pgm(const fs::path& path, const std::vector<double>& power, int h, int w) {
  double lo = 0, hi = 0;
  const auto db = db_span(power, 40.0, lo, hi);
  write_pgm(path, db, h, w, lo, hi);
}

int cmd_simulate(const Common& c, const SimulateOpts& o, std::ostream& out) {
  if (int(o.grid) + int(o.walk) + int(o.corpus) != 1) throw UsageError("simulate needs exactly one of --grid, --walk, --corpus");
  const fs::path dir = c.out;
  RadarConfig cfg = resolve_radar(c);
  json snap = common_json("simulate", c, cfg);
  DatasetManifest man;
  if (o.grid) {
    if (o.repeat < 1) throw UsageError("--repeat must be >= 1");
    const int nr = o.grid_ranges > 0 ? o.grid_ranges : cfg.n_range_bins;
    const int na = o.grid_angles > 0 ? o.grid_angles : cfg.n_angle_bins;
    const auto ranges = default_grid_ranges(cfg, nr);
    const auto angles = default_grid_angles(cfg, na);
    std::vector<LabeledExample> examples;
    for (int r = 0; r < o.repeat; ++r) {
      GridOptions go;
      go.noise_snr_db = o.snr.value_or(kNoNoise);
      go.quantize = o.quantize;
      go.max_velocity = o.max_velocity;
      go.seed = c.seed + std::uint64_t(r);
      auto part = grid_examples(cfg, ranges, angles, go);
      std::move(part.begin(), part.end(), std::back_inserter(examples));
    }
    snap["grid"] = {{"ranges", nr}, {"angles", na},     {"repeat", o.repeat},
                    {"snr_db", optional_json(o.snr)}, {"quantize", o.quantize}, {"max_velocity", o.max_velocity}};
    man = save_dataset(dir, cfg, examples, json::object(), json{{"kind", "synthetic-grid"}, {"seed", c.seed}});
  } else if (o.walk) {
    WalkOptions wo;
    wo.count = o.count;
    wo.noise_snr_db = o.snr.value_or(wo.noise_snr_db);
    wo.test_fraction = o.test_fraction;
    wo.seed = c.seed;
    snap["walk"] = {{"count", wo.count}, {"snr_db", wo.noise_snr_db}, {"test_fraction", wo.test_fraction}};
    man = save_dataset(dir, cfg, walk_pool(cfg, wo), json::object(), json{{"kind", "walk"}, {"seed", c.seed}});
  } else {
    if (o.pool.empty()) throw UsageError("--corpus requires --pool");
    const Dataset pool = load_dataset(o.pool);
    cfg = pool.manifest.config;
    snap["radar"] = config_to_json(cfg);
    CorpusOptions co;
    co.train_per_count.fill(o.train_per_count);
    co.test_per_count.fill(o.test_per_count);
    co.val_fraction = o.val_fraction;
    co.max_shift_bins = o.max_shift_bins;
    co.seed = c.seed;
    snap["corpus"] = {{"pool", o.pool},
                      {"train_per_count", o.train_per_count},
                      {"test_per_count", o.test_per_count},
                      {"val_fraction", o.val_fraction},
                      {"max_shift_bins", o.max_shift_bins}};
    man = save_dataset(dir, build_training_corpus(cfg, pool.examples, co));
  }
  write_snapshot(dir, snap);
  out << "wrote " << man.example_count << " examples to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_classic(const Common& c, const ClassicOpts& o, std::ostream& out) {
  const Dataset ds = load_dataset(o.data);
  const RadarConfig& cfg = ds.manifest.config;
  const PipelineParams params = c.profile == "desk" ? PipelineParams::desk() : PipelineParams{};
  const fs::path dir = c.out;
  json snap = common_json("classic", c, cfg);
  snap["classic"] = {{"data", o.data}, {"stream", o.stream}, {"images", o.images}, {"dbscan_eps", params.dbscan_eps},
                     {"cfar_alpha", params.resolved_cfar_alpha()}};
  write_snapshot(dir, snap);

  std::ostringstream csv;
  csv << "frame_id,cluster_id,range_m,angle_deg,mass\n" << std::setprecision(10);
  std::vector<const LabeledExample*> all;
  ClassicPipeline stream(cfg, params);
  std::vector<DetectionSet> detections(ds.examples.size());
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const LabeledExample& ex = ds.examples[i];
    all.push_back(&ex);
    ClassicPipeline fresh(cfg, params);
    ClassicPipeline& pipe = o.stream ? stream : fresh;
    const PipelineOutput po = pipe.process(ex.frame);
    detections[i] = po.detections;
    for (std::size_t k = 0; k < po.detections.size(); ++k) {
      const Cluster& cl = po.detections[k];
      csv << i << "," << k << "," << cl.range_m << "," << cl.angle_deg << "," << cl.mass << "\n";
    }
    if (int(i) < o.images) {
      std::vector<double> rdi(po.rdis[0].data.size());
      for (std::size_t j = 0; j < rdi.size(); ++j) rdi[j] = std::norm(po.rdis[0].data[j]);
      write_db_pgm(dir / ("rdi_" + std::to_string(i) + ".pgm"), rdi, po.rdis[0].n_range, po.rdis[0].n_doppler);
      write_db_pgm(dir / ("rai_" + std::to_string(i) + ".pgm"), po.rai.values, po.rai.n_range, po.rai.n_angle);
    }
  }
  write_text(dir / "detections.csv", csv.str());
  const EvalReport report =
      evaluate(all, [&](std::size_t i, const LabeledExample&) { return detections[i]; }, cfg, 0.375, c.workers);
  write_json(dir / "report.json", report_json(report));
  out << report.summary();
  return kExitOk;
}

int cmd_train(const Common& c, const TrainOpts& o, bool domain_adapt, std::ostream& out) {
  if (domain_adapt && o.reference.empty()) throw UsageError("train-da requires --reference");
  const Dataset ds = load_dataset(o.data);
  const RadarConfig& cfg = ds.manifest.config;
  const fs::path dir = c.out;

  TrainConfig tc;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.lr = o.lr;
  tc.lr_final_scale = o.lr_final_scale;
  tc.cfel_lr_scale = o.cfel_lr_scale;
  tc.weights = domain_adapt ? LossWeights{} : LossWeights::synthetic();
  if (o.beta) tc.weights.beta = *o.beta;
  tc.weights.theta = o.theta;
  tc.weights.gamma = o.gamma;
  tc.weights.alpha = o.alpha;
  tc.mode = domain_adapt ? TrainMode::DomainAdapt : TrainMode::Synthetic;
  tc.seed = c.seed;
  tc.threshold = o.threshold;
  tc.checkpoint_every = o.checkpoint_every;
  tc.checkpoint_dir = dir / "checkpoints";
  tc.metric_log = dir / "metrics.csv";
  tc.keep_best = !o.final_model;
  tc.workers = c.workers;
  tc.validate();

  std::optional<Model> reference;
  Model init;
  if (domain_adapt) {
    reference = load_checkpoint(o.reference);
    init = *reference;
  } else {
    init = build_model(profile_arch(c.profile, cfg, o.channels), c.seed);
  }

  json snap = common_json(domain_adapt ? "train-da" : "train-synth", c, cfg);
  snap["train"] = {{"data", o.data},
                   {"reference", o.reference},
                   {"epochs", tc.epochs},
                   {"batch", tc.batch_size},
                   {"lr", tc.lr},
                   {"lr_final_scale", tc.lr_final_scale},
                   {"cfel_lr_scale", tc.cfel_lr_scale},
                   {"beta", tc.weights.beta},
                   {"theta", tc.weights.theta},
                   {"gamma", tc.weights.gamma},
                   {"alpha", tc.weights.alpha},
                   {"threshold", tc.threshold},
                   {"keep_best", tc.keep_best}};
  snap["arch"] = arch_to_json(init.arch);
  write_snapshot(dir, snap);

  TrainResult tr = train(std::move(init), ds, tc, reference ? &*reference : nullptr, [&](const EpochMetrics& e) {
    out << "epoch " << e.epoch << std::fixed << std::setprecision(5) << "  focal " << e.focal << "  kl " << e.kl
        << "  da " << e.da << "  total " << e.total << "  val_f1 " << e.val_f1;
    if (domain_adapt) out << "  divergence " << e.weight_divergence;
    out << std::defaultfloat << "\n";
  });
  for (const auto& w : tr.warnings) out << "warning: " << w << "\n";
  save_checkpoint(dir / "model", tr.model,
                  json{{"best_epoch", tr.best_epoch}, {"best_val_f1", tr.best_val_f1}, {"seed", c.seed}});
  write_json(dir / "summary.json", json{{"best_epoch", tr.best_epoch},
                                        {"best_val_f1", tr.best_val_f1},
                                        {"epochs", tc.epochs},
                                        {"warnings", tr.warnings}});
  out << "model written to " << (dir / "model").string() << " (epoch " << tr.best_epoch << ")\n";
  return kExitOk;
}

std::vector<const LabeledExample*> split_or_throw(const Dataset& ds, const std::string& split) {
  auto sel = select_split(ds, split);
  if (sel.empty()) throw std::invalid_argument("dataset has no examples in split '" + split + "'");
  return sel;
}

int cmd_eval(const Common& c, const EvalOpts& o, std::ostream& out) {
  Model model = load_checkpoint(o.model);
  const Dataset ds = load_dataset(o.data);
  const RadarConfig& cfg = ds.manifest.config;
  const auto examples = split_or_throw(ds, o.split);
  const fs::path dir = c.out;
  json snap = common_json("eval", c, cfg);
  snap["eval"] = {{"model", o.model}, {"data", o.data}, {"split", o.split}, {"threshold", o.threshold},
                  {"classic", o.classic}};
  write_snapshot(dir, snap);
  const EvalReport vae = evaluate_model(model, examples, cfg, o.threshold, 32, c.workers);
  json rep{{"vae", report_json(vae)}};
  vae.write_csv(dir / "vae_counts.csv");
  out << "vae: " << vae.summary();
  if (o.classic) {
    const PipelineParams params = c.profile == "desk" ? PipelineParams::desk() : PipelineParams{};
    const EvalReport cl = evaluate_classic(examples, cfg, params, c.workers);
    rep["classic"] = report_json(cl);
    cl.write_csv(dir / "classic_counts.csv");
    out << "classic: " << cl.summary();
  }
  write_json(dir / "report.json", rep);
  return kExitOk;
}

int cmd_dump_images(const Common& c, const EvalOpts& o, std::ostream& out) {
  Model model = load_checkpoint(o.model);
  const Dataset ds = load_dataset(o.data);
  const RadarConfig& cfg = ds.manifest.config;
  auto examples = split_or_throw(ds, o.split);
  if (int(examples.size()) > o.count) examples.resize(std::size_t(std::max(0, o.count)));
  const fs::path dir = c.out;
  json snap = common_json("dump-images", c, cfg);
  snap["dump_images"] = {{"model", o.model}, {"data", o.data}, {"split", o.split}, {"count", examples.size()}};
  write_snapshot(dir, snap);
  const PipelineParams params = c.profile == "desk" ? PipelineParams::desk() : PipelineParams{};
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const LabeledExample& ex = *examples[i];
    ClassicPipeline pipe(cfg, params);
    const PipelineOutput po = pipe.process(ex.frame);
    const ag::Tensor prob = predict(model, {&ex.frame});
    write_triptych_pgm(dir / ("triptych_" + std::to_string(i) + ".pgm"), ex.label, po.rai, prob.values());
  }
  out << "wrote " << examples.size() << " images to " << dir.string() << "\n";
  return kExitOk;
}

json grad_json(const ag::GradCheckReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}, {"passed", e.passed}});
  return json{{"passed", r.passed && r.deterministic}, {"worst", r.worst()}, {"entries", entries}};
}

int cmd_grad_check(const Common& c, const GradOpts& o, std::ostream& out) {
  const RadarConfig cfg = resolve_radar(c);
  const fs::path dir = c.out;
  const ArchConfig arch = profile_arch(c.profile, cfg, o.channels);
  json snap = common_json("grad-check", c, cfg);
  snap["grad_check"] = {{"channels", o.channels}, {"per_param", o.per_param}};
  snap["arch"] = arch_to_json(arch);
  write_snapshot(dir, snap);

  json rep = json::object();
  bool ok = true;
  auto line = [&](const std::string& name, const ag::GradCheckReport& r, double tol) {
    const bool pass = r.passed && r.deterministic;
    ok = ok && pass;
    out << (pass ? "PASS " : "FAIL ") << name << "  worst " << std::scientific << std::setprecision(3) << r.worst()
        << "  tolerance " << tol << std::defaultfloat << "\n";
    rep[name] = grad_json(r);
  };
  for (const auto& [name, r] : primitive_grad_checks(c.seed)) line("primitive." + name, r, 1e-3);
  line("cfel", cfel_grad_check(c.seed), 1e-4);
  line("model", model_grad_check(arch, c.seed, 1e-3, o.per_param), 1e-3);
  write_json(dir / "grad_check.json", rep);
  if (!ok) throw CheckFailed("gradient check exceeded tolerance");
  return kExitOk;
}

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config_path, "Radar config file (key = value lines) applied over the profile")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
  sub->add_option("--profile", c.profile, "desk or full")
      ->check(CLI::IsMember({"desk", "full"}))
      ->capture_default_str();
  sub->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  auto* out = sub->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
}

std::string category_of(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ConfigError*>(&e)) return "config";
  if (auto* s = dynamic_cast<const StorageError*>(&e)) return std::string("storage.") + to_string(s->kind());
  if (dynamic_cast<const TrainingError*>(&e)) return "training";
  if (dynamic_cast<const CheckFailed*>(&e)) return "check-failed";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const std::invalid_argument*>(&e) || dynamic_cast<const std::out_of_range*>(&e)) return "invalid-argument";
  return "internal";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Raw-signal radar detection: simulation, classical chain, CFEL-VAE training and evaluation",
               "rawradar"};
  app.require_subcommand(1);
  Common common;
  SimulateOpts sim;
  ClassicOpts cls;
  TrainOpts trn;
  EvalOpts ev;
  GradOpts gc;

  auto* simulate = app.add_subcommand("simulate", "Write a synthetic grid, walk pool or augmented corpus dataset");
  add_common(simulate, common);
  simulate->add_flag("--grid", sim.grid, "Single-target grid over range x angle");
  simulate->add_flag("--walk", sim.walk, "Walking-person pool with clutter");
  simulate->add_flag("--corpus", sim.corpus, "Superposed, range-shifted corpus built from --pool");
  simulate->add_option("--grid-ranges", sim.grid_ranges, "Grid range positions (0: one per range bin)");
  simulate->add_option("--grid-angles", sim.grid_angles, "Grid angle positions (0: one per angle bin)");
  simulate->add_option("--repeat", sim.repeat, "Independent noise draws of the grid")->capture_default_str();
  simulate->add_option("--snr", sim.snr, "Noise SNR in dB (grid default: noise-free; walk default: 15)");
  simulate->add_flag("--quantize", sim.quantize, "12-bit ADC quantization of grid frames");
  simulate->add_option("--max-velocity", sim.max_velocity, "Grid radial velocity bound, m/s")->capture_default_str();
  simulate->add_option("--count", sim.count, "Walk pool frames")->capture_default_str();
  simulate->add_option("--test-fraction", sim.test_fraction, "Walk frames reserved for testing")->capture_default_str();
  simulate->add_option("--pool", sim.pool, "Pool dataset for --corpus");
  simulate->add_option("--train-per-count", sim.train_per_count, "Training examples per target count 1..4")
      ->capture_default_str();
  simulate->add_option("--test-per-count", sim.test_per_count, "Test examples per target count 1..4")
      ->capture_default_str();
  simulate->add_option("--val-fraction", sim.val_fraction, "Validation share of the training side")->capture_default_str();
  simulate->add_option("--max-shift-bins", sim.max_shift_bins, "Range shift bound in bins")->capture_default_str();

  auto* classic = app.add_subcommand("classic", "Run the classical chain over a dataset");
  add_common(classic, common);
  classic->add_option("--data", cls.data, "Dataset directory")->required();
  classic->add_flag("--stream", cls.stream, "Treat the dataset as one time-ordered stream");
  classic->add_option("--images", cls.images, "Write RDI and RAI images for the first N frames")->capture_default_str();

  auto add_train = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--data", trn.data, "Corpus with train and val splits")->required();
    sub->add_option("--epochs", trn.epochs)->capture_default_str();
    sub->add_option("--batch", trn.batch)->capture_default_str();
    sub->add_option("--lr", trn.lr)->capture_default_str();
    sub->add_option("--lr-final-scale", trn.lr_final_scale, "Cosine decay floor as a fraction of --lr")
        ->capture_default_str();
    sub->add_option("--cfel-lr-scale", trn.cfel_lr_scale)->capture_default_str();
    sub->add_option("--theta", trn.theta, "KL weight")->capture_default_str();
    sub->add_option("--gamma", trn.gamma, "Focal exponent")->capture_default_str();
    sub->add_option("--alpha", trn.alpha, "Focal negative weight")->capture_default_str();
    sub->add_option("--threshold", trn.threshold, "Detection threshold for validation")->capture_default_str();
    sub->add_option("--checkpoint-every", trn.checkpoint_every, "Epochs between checkpoints (0: off)")
        ->capture_default_str();
    sub->add_flag("--final-model", trn.final_model, "Keep the last epoch instead of the best validation epoch");
  };
  auto* train_synth = app.add_subcommand("train-synth", "Train a fresh model on a synthetic corpus");
  add_train(train_synth);
  train_synth->add_option("--channels", trn.channels, "Initial encoder channels")->capture_default_str();
  auto* train_da = app.add_subcommand("train-da", "Domain-adapt a pretrained model on a measured-style corpus");
  add_train(train_da);
  train_da->add_option("--reference", trn.reference, "Pretrained checkpoint directory");
  train_da->add_option("--beta", trn.beta, "DA weight (default 1e-4)");

  auto add_eval = [&](CLI::App* sub) {
    add_common(sub, common);
    sub->add_option("--model", ev.model, "Checkpoint directory")->required();
    sub->add_option("--data", ev.data, "Dataset directory")->required();
    sub->add_option("--split", ev.split)->capture_default_str();
  };
  auto* eval = app.add_subcommand("eval", "Score a model (and optionally the classical chain) on a split");
  add_eval(eval);
  eval->add_option("--threshold", ev.threshold)->capture_default_str();
  eval->add_flag("--classic", ev.classic, "Also score the classical chain");
  auto* dump = app.add_subcommand("dump-images", "Write label | RAI | network output images");
  add_eval(dump);
  dump->add_option("--count", ev.count, "Examples to render")->capture_default_str();

  auto* grad = app.add_subcommand("grad-check", "Finite-difference checks of primitives, CFEL and the model");
  add_common(grad, common);
  grad->add_option("--channels", gc.channels)->capture_default_str();
  grad->add_option("--per-param", gc.per_param, "Sampled elements per parameter")->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(common, sim, out);
    if (classic->parsed()) return cmd_classic(common, cls, out);
    if (train_synth->parsed()) return cmd_train(common, trn, false, out);
    if (train_da->parsed()) return cmd_train(common, trn, true, out);
    if (eval->parsed()) return cmd_eval(common, ev, out);
    if (dump->parsed()) return cmd_dump_images(common, ev, out);
    return cmd_grad_check(common, gc, out);
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n" << app.get_subcommands().front()->help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << category_of(e) << ": " << one_line(e.what()) << "\n";
    return kExitFailure;
  }
}

}  // namespace rawradar::cli
