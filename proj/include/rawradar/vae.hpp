#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rawradar/autograd.hpp"
#include "rawradar/cfel.hpp"
#include "rawradar/frame.hpp"
#include "rawradar/radar_config.hpp"
#include "rawradar/scene.hpp"

namespace rawradar {

struct ArchConfig {
  int encoder_blocks = 6;
  int decoder_blocks = 5;
  int initial_channels = 16;
  double channel_growth = 1.6;
  double dropout_rate = 0.4;
  int latent_dim = 140;
  // CFEL grid, equal to the output probability map (range x angle).
  int n_ft = 128;
  int n_st = 32;
  // Raw frame extent seen by the CFEL.
  int frame_samples = 256;
  int frame_chirps = 32;
  int n_rx = 2;
  double fs_ft = 1.0;
  double fs_st = 1.0;
  bool share_antenna_weights = true;
  // Multiplies the CFEL output; 0 selects 1 / sqrt(frame_samples * frame_chirps).
  double cfel_scale = 0.0;
  // Initial bias of the output layer, i.e. the logit of the prior foreground rate.
  double output_bias = -2.0;

  // floor-rounded growth recursion: 16, 25, 40, 64, 102, 163 by default.
  std::vector<int> channels() const;
  // (height, width) of every encoder level.
  std::vector<std::pair<int, int>> level_sizes() const;
  double resolved_cfel_scale() const;
  void validate() const;

  // Full-size architecture for a radar configuration.
  static ArchConfig for_radar(const RadarConfig& cfg);
  // Two-block architecture for the desk profile.
  static ArchConfig desk(const RadarConfig& cfg);
};

nlohmann::json arch_to_json(const ArchConfig& a);
ArchConfig arch_from_json(const nlohmann::json& j);

struct LossWeights {
  double gamma = 2.0;
  double alpha = 0.25;
  double beta = 1e-4;
  double theta = 0.1;

  void validate() const;
  static LossWeights synthetic() {
    LossWeights w;
    w.beta = 0.0;
    return w;
  }
};

enum class LayerKind { Conv, Dense, Cfel };

const char* to_string(LayerKind k);

// One weight/bias pair; for the CFEL layer the pair is (f_ft, f_st).
struct LayerRecord {
  std::string id;
  LayerKind kind;
  int weight;  // index into Model::params
  int bias;
};

class LayerMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Model {
  ArchConfig arch;
  std::vector<ag::Parameter> params;
  std::vector<LayerRecord> layers;

  const LayerRecord& layer(const std::string& id) const;
  const LayerRecord* find_layer(const std::string& id) const;
  ag::Parameter& weight(const LayerRecord& l) { return params[l.weight]; }
  const ag::Parameter& weight(const LayerRecord& l) const { return params[l.weight]; }
  ag::Parameter& bias(const LayerRecord& l) { return params[l.bias]; }
  const ag::Parameter& bias(const LayerRecord& l) const { return params[l.bias]; }
  std::vector<ag::Parameter*> parameter_list();
  std::size_t parameter_count() const;
  void zero_grad();
  CfelParams cfel_params() const;
  // Wraps CFEL frequencies into [0, 1).
  void wrap_cfel();
};

Model build_model(const ArchConfig& arch, std::uint64_t seed);

struct ForwardOptions {
  bool train = false;       // dropout active and z sampled
  std::uint64_t seed = 0;   // dropout masks and reparameterization noise
};

struct ForwardResult {
  ag::Var prob;    // [B, 1, n_ft, n_st]
  ag::Var mu;      // [B * n_rx, latent]
  ag::Var logvar;  // clamped to [-10, 10]
  ag::Var z;
  int batch = 0;
};

// x [B, n_rx, frame_chirps, frame_samples].
ForwardResult forward(Model& model, ag::Graph& g, ag::Var x, const ForwardOptions& opts);

// z = mu + exp(logvar / 2) * eps with eps ~ N(0, 1) from `seed`; z = mu in inference.
ag::Var reparameterize(ag::Var mu, ag::Var logvar, bool train, std::uint64_t seed);

// Stacks normalized frames into [B, n_rx, n_chirps, n_samples].
ag::Tensor frames_to_tensor(const std::vector<const Frame*>& frames);
// Stacks label masks into [B, 1, n_range, n_angle].
ag::Tensor labels_to_tensor(const std::vector<const LabelMask*>& labels);

// Inference (dropout off, z = mu): probability maps [B, 1, n_ft, n_st].
ag::Tensor predict(Model& model, const std::vector<const Frame*>& frames);

// -0.5 * sum(1 + logvar - mu^2 - exp(logvar)) / batch.
ag::Var kl_loss(ag::Var mu, ag::Var logvar, int batch);

// Sum over convolutional layers of relative squared weight divergence from
// the reference.
ag::Var da_loss(ag::Graph& g, Model& model, const Model& reference);
double weight_divergence(const Model& model, const Model& reference);

struct LossBreakdown {
  double focal = 0;
  double kl = 0;
  double da = 0;
  double total = 0;
};

double compose_total(double focal, double da, double kl, const LossWeights& w);

struct TotalLoss {
  ag::Var total;
  LossBreakdown parts;
};

// L_FL + beta * L_DA + theta * L_KL. The DA term enters the graph only when
// `reference` is set and beta > 0.
TotalLoss total_loss(ag::Graph& g, const ForwardResult& fr, const ag::Tensor& labels, Model& model,
                     const Model* reference, const LossWeights& w);

// Directory with manifest.json and params.bin (little-endian float32).
void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const nlohmann::json& metadata = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& dir, nlohmann::json* metadata = nullptr);

// Rounds every parameter to float32 precision, the checkpoint resolution.
void round_to_float(Model& model);

}  // namespace rawradar
