#include "rawradar/vae.hpp"

#include <cmath>
#include <random>

#include "rawradar/dataset_io.hpp"
#include "rawradar/seed.hpp"

namespace rawradar {

using nlohmann::json;

std::vector<int> ArchConfig::channels() const {
  std::vector<int> c{initial_channels};
  for (int i = 1; i < encoder_blocks; ++i) c.push_back(int(std::floor(c.back() * channel_growth)));
  return c;
}

std::vector<std::pair<int, int>> ArchConfig::level_sizes() const {
  std::vector<std::pair<int, int>> s{{n_ft, n_st}};
  for (int i = 1; i < encoder_blocks; ++i) s.push_back({(s.back().first + 1) / 2, (s.back().second + 1) / 2});
  return s;
}

double ArchConfig::resolved_cfel_scale() const {
  return cfel_scale > 0 ? cfel_scale : 1.0 / std::sqrt(double(frame_samples) * frame_chirps);
}

void ArchConfig::validate() const {
  if (encoder_blocks < 1) throw ConfigError("arch: encoder_blocks must be at least 1");
  if (decoder_blocks != encoder_blocks - 1)
    throw ConfigError("arch: decoder_blocks must equal encoder_blocks - 1 (got " + std::to_string(decoder_blocks) + ")");
  if (initial_channels < 1 || !(channel_growth >= 1.0)) throw ConfigError("arch: invalid channel settings");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("arch: dropout_rate must lie in [0, 1)");
  if (latent_dim < 1) throw ConfigError("arch: latent_dim must be positive");
  if (n_rx < 1 || frame_samples < 1 || frame_chirps < 1) throw ConfigError("arch: invalid frame extent");
  if (!(fs_ft > 0) || !(fs_st > 0)) throw ConfigError("arch: sampling rates must be positive");
  const int down = encoder_blocks - 1;
  for (int d : {n_ft, n_st}) {
    if (d < 1 || (d >> down) < 1)
      throw ConfigError("arch: " + std::to_string(down) + " downsampling steps reduce a " + std::to_string(d) +
                        "-bin axis below 1");
    if (d % (1 << down) != 0)
      throw ConfigError("arch: axis of " + std::to_string(d) + " bins is not divisible by 2^" + std::to_string(down));
  }
}

ArchConfig ArchConfig::for_radar(const RadarConfig& cfg) {
  ArchConfig a;
  a.n_ft = cfg.n_range_bins;
  a.n_st = cfg.n_angle_bins;
  a.frame_samples = cfg.n_samples;
  a.frame_chirps = cfg.n_chirps;
  a.n_rx = cfg.n_rx;
  a.fs_ft = cfg.n_samples / cfg.chirp_time;
  a.fs_st = 1.0 / cfg.chirp_repetition;
  return a;
}

ArchConfig ArchConfig::desk(const RadarConfig& cfg) {
  ArchConfig a = for_radar(cfg);
  a.encoder_blocks = 2;
  a.decoder_blocks = 1;
  a.latent_dim = 32;
  return a;
}

json arch_to_json(const ArchConfig& a) {
  return json{{"encoder_blocks", a.encoder_blocks},
              {"decoder_blocks", a.decoder_blocks},
              {"initial_channels", a.initial_channels},
              {"channel_growth", a.channel_growth},
              {"dropout_rate", a.dropout_rate},
              {"latent_dim", a.latent_dim},
              {"n_ft", a.n_ft},
              {"n_st", a.n_st},
              {"frame_samples", a.frame_samples},
              {"frame_chirps", a.frame_chirps},
              {"n_rx", a.n_rx},
              {"fs_ft", a.fs_ft},
              {"fs_st", a.fs_st},
              {"share_antenna_weights", a.share_antenna_weights},
              {"cfel_scale", a.cfel_scale},
              {"output_bias", a.output_bias}};
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  try {
    a.encoder_blocks = j.at("encoder_blocks");
    a.decoder_blocks = j.at("decoder_blocks");
    a.initial_channels = j.at("initial_channels");
    a.channel_growth = j.at("channel_growth");
    a.dropout_rate = j.at("dropout_rate");
    a.latent_dim = j.at("latent_dim");
    a.n_ft = j.at("n_ft");
    a.n_st = j.at("n_st");
    a.frame_samples = j.at("frame_samples");
    a.frame_chirps = j.at("frame_chirps");
    a.n_rx = j.at("n_rx");
    a.fs_ft = j.at("fs_ft");
    a.fs_st = j.at("fs_st");
    a.share_antenna_weights = j.at("share_antenna_weights");
    a.cfel_scale = j.at("cfel_scale");
    a.output_bias = j.at("output_bias");
  } catch (const json::exception& e) {
    throw StorageError(StorageErrorKind::Format, std::string("arch block: ") + e.what());
  }
  a.validate();
  return a;
}

void LossWeights::validate() const {
  if (!(gamma >= 0) || !(alpha >= 0) || !(beta >= 0) || !(theta >= 0))
    throw ConfigError("loss weights must be nonnegative");
}

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Dense: return "dense";
    case LayerKind::Cfel: return "cfel";
  }
  return "unknown";
}

const LayerRecord* Model::find_layer(const std::string& id) const {
  for (const auto& l : layers)
    if (l.id == id) return &l;
  return nullptr;
}

const LayerRecord& Model::layer(const std::string& id) const {
  const LayerRecord* l = find_layer(id);
  if (!l) throw LayerMismatch("no layer '" + id + "'");
  return *l;
}

std::vector<ag::Parameter*> Model::parameter_list() {
  std::vector<ag::Parameter*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

void Model::zero_grad() {
  for (auto& p : params) p.zero_grad();
}

CfelParams Model::cfel_params() const {
  const LayerRecord& l = layer("cfel");
  CfelParams p;
  p.n_ft = arch.n_ft;
  p.n_st = arch.n_st;
  p.kernel_ft = arch.frame_samples;
  p.kernel_st = arch.frame_chirps;
  p.fs_ft = arch.fs_ft;
  p.fs_st = arch.fs_st;
  p.f_ft = weight(l).value.values();
  p.f_st = bias(l).value.values();
  return p;
}

void Model::wrap_cfel() {
  const LayerRecord& l = layer("cfel");
  wrap_frequencies(weight(l).value.values());
  wrap_frequencies(bias(l).value.values());
}

namespace {

class Builder {
 public:
  Builder(Model& m, std::uint64_t seed) : m_(m), rng_(seed) {}

  void conv(const std::string& id, int out, int in, int kh, int kw) { add(id, LayerKind::Conv, {out, in, kh, kw}, in * kh * kw, out); }
  void dense(const std::string& id, int out, int in) { add(id, LayerKind::Dense, {out, in}, in, out); }

  void cfel(const CfelParams& p) {
    const int k = p.kernel_count();
    m_.params.emplace_back("cfel.f_ft", ag::Tensor({k}, p.f_ft));
    m_.params.emplace_back("cfel.f_st", ag::Tensor({k}, p.f_st));
    m_.layers.push_back({"cfel", LayerKind::Cfel, int(m_.params.size()) - 2, int(m_.params.size()) - 1});
  }

 private:
  void add(const std::string& id, LayerKind kind, ag::Shape wshape, int fan_in, int out) {
    ag::Tensor w(std::move(wshape));
    const double limit = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : w.values()) v = u(rng_);
    m_.params.emplace_back(id + ".w", std::move(w));
    m_.params.emplace_back(id + ".b", ag::Tensor({out}));
    m_.layers.push_back({id, kind, int(m_.params.size()) - 2, int(m_.params.size()) - 1});
  }

  Model& m_;
  std::mt19937_64 rng_;
};

std::string branch_prefix(const ArchConfig& a, int rx) {
  return a.share_antenna_weights ? std::string() : "ant" + std::to_string(rx) + ".";
}

}  // namespace

Model build_model(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Model m;
  m.arch = arch;
  Builder b(m, seed);
  b.cfel(init_grid(arch.n_ft, arch.n_st, arch.frame_samples, arch.frame_chirps, arch.fs_ft, arch.fs_st));
  const auto ch = arch.channels();
  const auto sizes = arch.level_sizes();
  const int n_branches = arch.share_antenna_weights ? 1 : arch.n_rx;
  const int last = arch.encoder_blocks - 1;
  for (int br = 0; br < n_branches; ++br) {
    const std::string pre = branch_prefix(arch, br);
    int in = 2;
    for (int i = 0; i < arch.encoder_blocks; ++i) {
      const std::string id = pre + "enc" + std::to_string(i);
      b.conv(id + ".conv1", ch[i], in, 3, 3);
      b.conv(id + ".conv2", ch[i], ch[i], 3, 3);
      b.conv(id + ".proj", ch[i], in, 1, 1);
      if (i < last) b.conv(id + ".down", ch[i], ch[i], 3, 3);
      in = ch[i];
    }
    const int flat = ch[last] * sizes[last].first * sizes[last].second;
    b.dense(pre + "bottleneck.mu", arch.latent_dim, flat);
    b.dense(pre + "bottleneck.logvar", arch.latent_dim, flat);
    b.dense(pre + "bottleneck.decode", flat, arch.latent_dim);
    in = ch[last];
    for (int j = 0; j < arch.decoder_blocks; ++j) {
      const int t = last - 1 - j;
      const std::string id = pre + "dec" + std::to_string(j);
      b.conv(id + ".up_conv", ch[t], in, 2, 2);
      b.conv(id + ".conv1", ch[t], 2 * ch[t], 3, 3);
      b.conv(id + ".conv2", ch[t], ch[t], 3, 3);
      in = ch[t];
    }
  }
  b.conv("head.merge", ch[0], arch.n_rx * ch[0], 1, 1);
  b.conv("head.out", 1, ch[0], 1, 1);
  m.bias(m.layer("head.out")).value.fill(arch.output_bias);
  // Small-variance logvar head starts the posterior near unit variance.
  for (int br = 0; br < n_branches; ++br) {
    auto& w = m.weight(m.layer(branch_prefix(arch, br) + "bottleneck.logvar")).value;
    for (auto& v : w.values()) v *= 0.1;
  }
  return m;
}

ag::Var reparameterize(ag::Var mu, ag::Var logvar, bool train, std::uint64_t seed) {
  if (mu.shape() != logvar.shape())
    throw ag::ShapeMismatch("reparameterize: " + ag::shape_str(mu.shape()) + " vs " + ag::shape_str(logvar.shape()));
  if (!train) return mu;
  ag::Tensor eps(mu.shape());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : eps.values()) v = nd(rng);
  ag::Graph& g = *mu.graph;
  return ag::add(mu, ag::mul(ag::exp(ag::scale(logvar, 0.5)), g.constant(std::move(eps))));
}

namespace {

struct Ctx {
  Model& m;
  ag::Graph& g;
  const ForwardOptions& opts;
  std::uint64_t stream = 0;

  ag::Var w(const std::string& id) { return g.param(m.weight(m.layer(id))); }
  ag::Var b(const std::string& id) { return g.param(m.bias(m.layer(id))); }
  ag::Var conv(const std::string& id, ag::Var x, int stride = 1) { return ag::conv2d_same(x, w(id), b(id), stride); }
  ag::Var dense(const std::string& id, ag::Var x) { return ag::dense(x, w(id), b(id)); }
  ag::Var drop(ag::Var x) {
    return ag::dropout(x, m.arch.dropout_rate, opts.train, derive_seed(opts.seed, stream++));
  }
};

struct BranchOut {
  ag::Var features;  // [S, c0, n_ft, n_st]
  ag::Var mu;
  ag::Var logvar;
  ag::Var z;
};

// x: [S, 2, n_ft, n_st] CFEL features of S antenna slices.
BranchOut run_branch(Ctx& c, ag::Var x, const std::string& pre) {
  const ArchConfig& a = c.m.arch;
  const auto ch = a.channels();
  const auto sizes = a.level_sizes();
  const int last = a.encoder_blocks - 1;
  const int S = x.shape()[0];
  std::vector<ag::Var> skips;
  for (int i = 0; i < a.encoder_blocks; ++i) {
    const std::string id = pre + "enc" + std::to_string(i);
    ag::Var h = ag::elu(c.conv(id + ".conv1", x));
    h = c.drop(h);
    h = c.conv(id + ".conv2", h);
    const ag::Var added = ag::elu(ag::add(h, ag::conv1x1(x, c.w(id + ".proj"), c.b(id + ".proj"))));
    skips.push_back(added);
    x = i < last ? ag::elu(c.conv(id + ".down", added, 2)) : added;
  }
  const int flat = ch[last] * sizes[last].first * sizes[last].second;
  const ag::Var flat_x = ag::reshape(x, {S, flat});
  BranchOut out;
  out.mu = c.dense(pre + "bottleneck.mu", flat_x);
  out.logvar = ag::clamp(c.dense(pre + "bottleneck.logvar", flat_x), -10.0, 10.0);
  out.z = reparameterize(out.mu, out.logvar, c.opts.train, derive_seed(c.opts.seed, c.stream++));
  ag::Var y = ag::elu(c.dense(pre + "bottleneck.decode", out.z));
  y = ag::reshape(y, {S, ch[last], sizes[last].first, sizes[last].second});
  for (int j = 0; j < a.decoder_blocks; ++j) {
    const int t = last - 1 - j;
    const std::string id = pre + "dec" + std::to_string(j);
    const ag::Var up = ag::elu(c.conv(id + ".up_conv", ag::upsample_nearest_x2(y)));
    ag::Var h = ag::elu(c.conv(id + ".conv1", ag::concat({up, skips[t]}, 1)));
    h = c.drop(h);
    h = c.conv(id + ".conv2", h);
    y = ag::elu(ag::add(h, up));
  }
  out.features = y;
  return out;
}

}  // namespace

ForwardResult forward(Model& model, ag::Graph& g, ag::Var x, const ForwardOptions& opts) {
  const ArchConfig& a = model.arch;
  const ag::Shape& xs = x.shape();
  if (xs.size() != 4 || xs[1] != a.n_rx || xs[2] != a.frame_chirps || xs[3] != a.frame_samples)
    throw ag::ShapeMismatch("forward: input " + ag::shape_str(xs) + " does not match [B," + std::to_string(a.n_rx) + "," +
                            std::to_string(a.frame_chirps) + "," + std::to_string(a.frame_samples) + "]");
  const int B = xs[0];
  Ctx c{model, g, opts};
  const LayerRecord& cl = model.layer("cfel");
  ag::Var feat = ag::scale(cfel_layer(x, g.param(model.weight(cl)), g.param(model.bias(cl)), a.n_ft, a.n_st),
                           a.resolved_cfel_scale());
  const int c0 = a.channels()[0];
  ForwardResult fr;
  fr.batch = B;
  ag::Var merged_in;
  if (a.share_antenna_weights) {
    BranchOut bo = run_branch(c, feat, "");
    fr.mu = bo.mu;
    fr.logvar = bo.logvar;
    fr.z = bo.z;
    merged_in = ag::reshape(bo.features, {B, a.n_rx * c0, a.n_ft, a.n_st});
  } else {
    const ag::Var per_batch = ag::reshape(feat, {B, a.n_rx * 2, a.n_ft, a.n_st});
    std::vector<ag::Var> feats, mus, lvs, zs;
    for (int rx = 0; rx < a.n_rx; ++rx) {
      BranchOut bo = run_branch(c, ag::slice(per_batch, 1, 2 * rx, 2), branch_prefix(a, rx));
      feats.push_back(bo.features);
      mus.push_back(bo.mu);
      lvs.push_back(bo.logvar);
      zs.push_back(bo.z);
    }
    // Interleave antennas per example so mu rows follow the shared layout.
    auto stack = [&](const std::vector<ag::Var>& v) {
      const int L = v[0].shape()[1];
      std::vector<ag::Var> r;
      for (const auto& t : v) r.push_back(ag::reshape(t, {B, 1, L}));
      return ag::reshape(ag::concat(r, 1), {B * a.n_rx, L});
    };
    fr.mu = stack(mus);
    fr.logvar = stack(lvs);
    fr.z = stack(zs);
    merged_in = ag::concat(feats, 1);
  }
  ag::Var h = ag::elu(ag::conv1x1(merged_in, c.w("head.merge"), c.b("head.merge")));
  fr.prob = ag::sigmoid(ag::conv1x1(h, c.w("head.out"), c.b("head.out")));
  return fr;
}

ag::Tensor frames_to_tensor(const std::vector<const Frame*>& frames) {
  if (frames.empty()) throw std::invalid_argument("frames_to_tensor: empty batch");
  const Frame& f0 = *frames[0];
  ag::Tensor t({int(frames.size()), f0.n_rx, f0.n_chirps, f0.n_samples});
  const std::size_t per = f0.samples.size();
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (!frames[b]->same_shape(f0))
      throw ShapeError("frames_to_tensor: frame " + frames[b]->shape_string() + " differs from " + f0.shape_string());
    std::copy(frames[b]->samples.begin(), frames[b]->samples.end(), t.data() + b * per);
  }
  return t;
}

ag::Tensor labels_to_tensor(const std::vector<const LabelMask*>& labels) {
  if (labels.empty()) throw std::invalid_argument("labels_to_tensor: empty batch");
  const LabelMask& l0 = *labels[0];
  ag::Tensor t({int(labels.size()), 1, l0.n_range, l0.n_angle});
  const std::size_t per = l0.bits.size();
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b]->n_range != l0.n_range || labels[b]->n_angle != l0.n_angle)
      throw ShapeError("labels_to_tensor: mask shapes differ");
    for (std::size_t i = 0; i < per; ++i) t[b * per + i] = labels[b]->bits[i] ? 1.0 : 0.0;
  }
  return t;
}

ag::Tensor predict(Model& model, const std::vector<const Frame*>& frames) {
  ag::Graph g;
  const ag::Var x = g.constant(frames_to_tensor(frames));
  return forward(model, g, x, ForwardOptions{}).prob.value();
}

ag::Var kl_loss(ag::Var mu, ag::Var logvar, int batch) {
  if (mu.shape() != logvar.shape())
    throw ag::ShapeMismatch("kl_loss: " + ag::shape_str(mu.shape()) + " vs " + ag::shape_str(logvar.shape()));
  if (batch < 1) throw std::invalid_argument("kl_loss: batch must be positive");
  // 1 + lv - mu^2 - exp(lv)
  const ag::Var inner = ag::sub(ag::add_scalar(logvar, 1.0), ag::add(ag::mul(mu, mu), ag::exp(logvar)));
  return ag::scale(ag::reduce_sum(inner), -0.5 / batch);
}

namespace {

struct DaPair {
  const LayerRecord* model;
  const LayerRecord* reference;
  double ref_norm;
};

std::vector<DaPair> da_pairs(const Model& model, const Model& reference) {
  std::vector<DaPair> out;
  for (const auto& l : model.layers) {
    if (l.kind != LayerKind::Conv) continue;
    const LayerRecord* r = reference.find_layer(l.id);
    if (!r || r->kind != LayerKind::Conv || !model.weight(l).value.same_shape(reference.weight(*r).value) ||
        !model.bias(l).value.same_shape(reference.bias(*r).value))
      throw LayerMismatch("da_loss: layer '" + l.id + "' has no matching reference layer");
    double norm = 0;
    for (double v : reference.weight(*r).value.values()) norm += v * v;
    for (double v : reference.bias(*r).value.values()) norm += v * v;
    if (!(norm > 0)) throw LayerMismatch("da_loss: reference layer '" + l.id + "' has zero norm");
    out.push_back({&l, r, norm});
  }
  for (const auto& r : reference.layers)
    if (r.kind == LayerKind::Conv && !model.find_layer(r.id))
      throw LayerMismatch("da_loss: reference layer '" + r.id + "' missing from model");
  return out;
}

}  // namespace

ag::Var da_loss(ag::Graph& g, Model& model, const Model& reference) {
  ag::Var total = g.constant(ag::Tensor::scalar(0.0));
  for (const auto& p : da_pairs(model, reference)) {
    const ag::Var dw = ag::squared_distance(g.param(model.weight(*p.model)), reference.weight(*p.reference).value);
    const ag::Var db = ag::squared_distance(g.param(model.bias(*p.model)), reference.bias(*p.reference).value);
    total = ag::add(total, ag::scale(ag::add(dw, db), 1.0 / p.ref_norm));
  }
  return total;
}

double weight_divergence(const Model& model, const Model& reference) {
  double total = 0;
  for (const auto& p : da_pairs(model, reference)) {
    double d = 0;
    const auto& w = model.weight(*p.model).value;
    const auto& w0 = reference.weight(*p.reference).value;
    for (std::size_t i = 0; i < w.size(); ++i) d += (w[i] - w0[i]) * (w[i] - w0[i]);
    const auto& b = model.bias(*p.model).value;
    const auto& b0 = reference.bias(*p.reference).value;
    for (std::size_t i = 0; i < b.size(); ++i) d += (b[i] - b0[i]) * (b[i] - b0[i]);
    total += d / p.ref_norm;
  }
  return total;
}

double compose_total(double focal, double da, double kl, const LossWeights& w) {
  return focal + w.beta * da + w.theta * kl;
}

TotalLoss total_loss(ag::Graph& g, const ForwardResult& fr, const ag::Tensor& labels, Model& model,
                     const Model* reference, const LossWeights& w) {
  w.validate();
  TotalLoss out;
  const ag::Var fl = ag::focal_loss(fr.prob, labels, w.gamma, w.alpha);
  const ag::Var kl = kl_loss(fr.mu, fr.logvar, fr.batch);
  out.parts.focal = fl.value().item();
  out.parts.kl = kl.value().item();
  ag::Var total = ag::add(fl, ag::scale(kl, w.theta));
  if (reference) {
    if (w.beta > 0) {
      const ag::Var da = da_loss(g, model, *reference);
      out.parts.da = da.value().item();
      total = ag::add(total, ag::scale(da, w.beta));
    } else {
      out.parts.da = weight_divergence(model, *reference);
    }
  }
  out.total = total;
  out.parts.total = total.value().item();
  return out;
}

namespace {

constexpr int kCheckpointVersion = 1;

}  // namespace

void round_to_float(Model& model) {
  for (auto& p : model.params)
    for (auto& v : p.value.values()) v = double(float(v));
}

void save_checkpoint(const std::filesystem::path& dir, const Model& model, const json& metadata) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw StorageError(StorageErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::uint8_t> blob;
  json layers = json::array();
  for (const auto& l : model.layers) {
    json tensors = json::array();
    for (int idx : {l.weight, l.bias}) {
      const auto& p = model.params[idx];
      tensors.push_back({{"name", p.name}, {"offset", blob.size()}, {"shape", p.value.shape()}});
      for (double v : p.value.values()) append_f32_le(blob, float(v));
    }
    layers.push_back({{"id", l.id}, {"kind", to_string(l.kind)}, {"tensors", tensors}});
  }
  const CfelParams cp = model.cfel_params();
  json cfel{{"n_ft", cp.n_ft}, {"n_st", cp.n_st}, {"fs_ft", cp.fs_ft}, {"fs_st", cp.fs_st}};
  std::vector<float> ft(cp.f_ft.begin(), cp.f_ft.end()), st(cp.f_st.begin(), cp.f_st.end());
  cfel["f_ft"] = ft;
  cfel["f_st"] = st;
  const json manifest{{"format", "rawradar-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"arch", arch_to_json(model.arch)},
                      {"layers", layers},
                      {"cfel", cfel},
                      {"metadata", metadata},
                      {"param_bytes", blob.size()},
                      {"crc32", crc32_of(blob.data(), blob.size())}};
  write_file(dir / "params.bin", blob);
  write_json(dir / "manifest.json", manifest);
}

Model load_checkpoint(const std::filesystem::path& dir, json* metadata) {
  const json manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", "") != "rawradar-checkpoint")
    throw StorageError(StorageErrorKind::Format, (dir / "manifest.json").string() + ": not a checkpoint manifest");
  if (manifest.value("version", -1) != kCheckpointVersion)
    throw StorageError(StorageErrorKind::Version, (dir / "manifest.json").string() + ": checkpoint version " +
                                                      manifest.value("version", json(-1)).dump() + ", expected " +
                                                      std::to_string(kCheckpointVersion));
  Model m;
  std::size_t param_bytes = 0;
  std::uint32_t crc = 0;
  try {
    m.arch = arch_from_json(manifest.at("arch"));
    param_bytes = manifest.at("param_bytes");
    crc = manifest.at("crc32");
  } catch (const json::exception& e) {
    throw StorageError(StorageErrorKind::Format, (dir / "manifest.json").string() + ": " + e.what());
  }
  const auto blob = read_file(dir / "params.bin");
  if (blob.size() < param_bytes)
    throw StorageError(StorageErrorKind::Truncated, (dir / "params.bin").string() + ": " + std::to_string(blob.size()) +
                                                        " bytes, expected " + std::to_string(param_bytes));
  if (blob.size() > param_bytes)
    throw StorageError(StorageErrorKind::Integrity, (dir / "params.bin").string() + ": " +
                                                        std::to_string(blob.size() - param_bytes) + " trailing bytes");
  if (crc32_of(blob.data(), blob.size()) != crc)
    throw StorageError(StorageErrorKind::Checksum, (dir / "params.bin").string() + ": crc32 mismatch");

  const Model skeleton = build_model(m.arch, 0);
  try {
    const auto& layers = manifest.at("layers");
    if (layers.size() != skeleton.layers.size())
      throw StorageError(StorageErrorKind::Integrity, "checkpoint has " + std::to_string(layers.size()) +
                                                          " layers, architecture expects " +
                                                          std::to_string(skeleton.layers.size()));
    m.params = skeleton.params;
    m.layers = skeleton.layers;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& jl = layers[i];
      const LayerRecord& l = m.layers[i];
      if (jl.at("id").get<std::string>() != l.id)
        throw StorageError(StorageErrorKind::Integrity,
                           "checkpoint layer '" + jl.at("id").get<std::string>() + "' where '" + l.id + "' expected");
      const auto& tensors = jl.at("tensors");
      int k = 0;
      for (int idx : {l.weight, l.bias}) {
        auto& p = m.params[idx];
        const auto& jt = tensors.at(k++);
        const ag::Shape shape = jt.at("shape").get<ag::Shape>();
        const std::size_t offset = jt.at("offset");
        if (shape != p.value.shape())
          throw StorageError(StorageErrorKind::Integrity, "tensor '" + p.name + "' has shape " + ag::shape_str(shape) +
                                                              ", expected " + ag::shape_str(p.value.shape()));
        if (offset + p.value.size() * 4 > blob.size())
          throw StorageError(StorageErrorKind::Integrity, "tensor '" + p.name + "' at offset " +
                                                              std::to_string(offset) + " exceeds the parameter blob");
        for (std::size_t e = 0; e < p.value.size(); ++e) p.value[e] = read_f32_le(blob.data() + offset + 4 * e);
        p.grad = ag::Tensor(p.value.shape());
      }
    }
    if (metadata) *metadata = manifest.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw StorageError(StorageErrorKind::Format, (dir / "manifest.json").string() + ": " + e.what());
  }
  return m;
}

}  // namespace rawradar
