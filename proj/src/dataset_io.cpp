#include "rawradar/dataset_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace rawradar {

using nlohmann::json;

const char* to_string(StorageErrorKind kind) {
  switch (kind) {
    case StorageErrorKind::Io: return "io-error";
    case StorageErrorKind::Format: return "format-error";
    case StorageErrorKind::Version: return "version-mismatch";
    case StorageErrorKind::Truncated: return "truncated";
    case StorageErrorKind::Checksum: return "checksum-mismatch";
    case StorageErrorKind::Integrity: return "integrity-error";
  }
  return "unknown";
}

std::size_t DatasetManifest::frame_bytes() const {
  return std::size_t(config.n_samples) * config.n_chirps * config.n_rx * sizeof(float);
}

std::size_t DatasetManifest::mask_bytes() const { return std::size_t(config.n_range_bins) * config.n_angle_bins; }

std::vector<std::size_t> DatasetManifest::indices_with_split(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

json config_to_json(const RadarConfig& c) {
  return json{{"f_min", c.f_min},
              {"f_max", c.f_max},
              {"chirp_time", c.chirp_time},
              {"n_samples", c.n_samples},
              {"n_chirps", c.n_chirps},
              {"chirp_repetition", c.chirp_repetition},
              {"n_rx", c.n_rx},
              {"antenna_spacing", c.antenna_spacing},
              {"adc_bits", c.adc_bits},
              {"n_range_bins", c.n_range_bins},
              {"n_angle_bins", c.n_angle_bins},
              {"angle_min", c.angle_min},
              {"angle_max", c.angle_max},
              {"adc_rate", c.adc_rate}};
}

RadarConfig config_from_json(const json& j) {
  RadarConfig c;
  try {
    c.f_min = j.at("f_min");
    c.f_max = j.at("f_max");
    c.chirp_time = j.at("chirp_time");
    c.n_samples = j.at("n_samples");
    c.n_chirps = j.at("n_chirps");
    c.chirp_repetition = j.at("chirp_repetition");
    c.n_rx = j.at("n_rx");
    c.antenna_spacing = j.at("antenna_spacing");
    c.adc_bits = j.at("adc_bits");
    c.n_range_bins = j.at("n_range_bins");
    c.n_angle_bins = j.at("n_angle_bins");
    c.angle_min = j.at("angle_min");
    c.angle_max = j.at("angle_max");
    c.adc_rate = j.at("adc_rate");
  } catch (const json::exception& e) {
    throw StorageError(StorageErrorKind::Format, std::string("radar config block: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint32_t crc32_of(const void* data, std::size_t bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32_z(crc, static_cast<const Bytef*>(data), bytes);
  return std::uint32_t(crc);
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

float read_f32_le(const std::uint8_t* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StorageError(StorageErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw StorageError(StorageErrorKind::Io, "write failed for " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError(StorageErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError(StorageErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << j.dump(1) << "\n";
  if (!out) throw StorageError(StorageErrorKind::Io, "write failed for " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError(StorageErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw StorageError(StorageErrorKind::Format, path.string() + ": " + e.what());
  }
}

namespace {

json target_to_json(const PointTarget& t) {
  return json{{"range", t.range}, {"velocity", t.velocity}, {"azimuth", t.azimuth}, {"amplitude", t.amplitude}};
}

PointTarget target_from_json(const json& j) {
  return PointTarget{j.at("range").get<double>(), j.at("velocity").get<double>(), j.at("azimuth").get<double>(),
                     j.at("amplitude").get<double>()};
}

}  // namespace

DatasetManifest save_dataset(const std::filesystem::path& dir, const RadarConfig& cfg,
                             const std::vector<LabeledExample>& examples, json augmentation, json provenance,
                             std::vector<std::string> warnings) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw StorageError(StorageErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  DatasetManifest man;
  man.config = cfg;
  man.example_count = examples.size();
  man.augmentation = std::move(augmentation);
  man.provenance = std::move(provenance);
  man.warnings = std::move(warnings);

  std::vector<std::uint8_t> payload;
  payload.reserve(examples.size() * man.record_bytes());
  for (const auto& ex : examples) {
    if (!ex.frame.matches(cfg))
      throw ShapeError("example frame " + ex.frame.shape_string() + " does not match dataset config");
    if (ex.label.n_range != cfg.n_range_bins || ex.label.n_angle != cfg.n_angle_bins)
      throw ShapeError("example label mask does not match dataset config");
    ExampleRecord rec;
    rec.offset = payload.size();
    for (float v : ex.frame.samples) append_f32_le(payload, v);
    payload.insert(payload.end(), ex.label.bits.begin(), ex.label.bits.end());
    rec.crc32 = crc32_of(payload.data() + rec.offset, payload.size() - rec.offset);
    rec.split = ex.split;
    rec.normalized = ex.frame.normalized;
    rec.frame_index = ex.frame.frame_index;
    rec.targets = ex.targets;
    rec.sources = ex.sources;
    man.records.push_back(std::move(rec));
  }

  json records = json::array();
  for (const auto& r : man.records) {
    json t = json::array();
    for (const auto& tg : r.targets) t.push_back(target_to_json(tg));
    records.push_back(json{{"offset", r.offset},
                           {"crc32", r.crc32},
                           {"split", r.split},
                           {"normalized", r.normalized},
                           {"frame_index", r.frame_index},
                           {"targets", t},
                           {"sources", r.sources}});
  }
  json j{{"format", "rawradar-dataset"},
         {"version", kDatasetVersion},
         {"config", config_to_json(cfg)},
         {"example_count", man.example_count},
         {"record_bytes", man.record_bytes()},
         {"payload_bytes", payload.size()},
         {"augmentation", man.augmentation},
         {"provenance", man.provenance},
         {"warnings", man.warnings},
         {"records", records}};
  write_file(dir / "payload.bin", payload);
  write_json(dir / "manifest.json", j);
  return man;
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
  const json j = read_json(dir / "manifest.json");
  DatasetManifest man;
  try {
    if (j.at("format") != "rawradar-dataset")
      throw StorageError(StorageErrorKind::Format, dir.string() + ": not a dataset manifest");
    const int version = j.at("version");
    if (version != kDatasetVersion)
      throw StorageError(StorageErrorKind::Version, dir.string() + ": dataset version " + std::to_string(version) +
                                                        ", expected " + std::to_string(kDatasetVersion));
    man.config = config_from_json(j.at("config"));
    man.example_count = j.at("example_count");
    man.augmentation = j.value("augmentation", json::object());
    man.provenance = j.value("provenance", json::object());
    man.warnings = j.value("warnings", std::vector<std::string>{});
    for (const auto& r : j.at("records")) {
      ExampleRecord rec;
      rec.offset = r.at("offset");
      rec.crc32 = r.at("crc32");
      rec.split = r.at("split");
      rec.normalized = r.at("normalized");
      rec.frame_index = r.at("frame_index");
      for (const auto& t : r.at("targets")) rec.targets.push_back(target_from_json(t));
      rec.sources = r.at("sources").get<std::vector<int>>();
      man.records.push_back(std::move(rec));
    }
    if (j.at("record_bytes").get<std::size_t>() != man.record_bytes())
      throw StorageError(StorageErrorKind::Integrity, dir.string() + ": record size disagrees with config");
  } catch (const json::exception& e) {
    throw StorageError(StorageErrorKind::Format, dir.string() + "/manifest.json: " + e.what());
  }
  if (man.records.size() != man.example_count)
    throw StorageError(StorageErrorKind::Integrity, dir.string() + ": example_count " + std::to_string(man.example_count) +
                                                        " but " + std::to_string(man.records.size()) + " records");
  for (std::size_t i = 1; i < man.records.size(); ++i)
    if (man.records[i].offset <= man.records[i - 1].offset)
      throw StorageError(StorageErrorKind::Integrity, dir.string() + ": record offsets not increasing at " + std::to_string(i));
  return man;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = load_manifest(dir);
  const auto& man = ds.manifest;
  const auto payload = read_file(dir / "payload.bin");
  const std::size_t rec_bytes = man.record_bytes();
  const std::size_t expected = man.example_count * rec_bytes;
  if (payload.size() < expected)
    throw StorageError(StorageErrorKind::Truncated, (dir / "payload.bin").string() + ": " + std::to_string(payload.size()) +
                                                        " bytes, expected " + std::to_string(expected));
  if (payload.size() > expected)
    throw StorageError(StorageErrorKind::Integrity, (dir / "payload.bin").string() + ": payload holds more bytes than " +
                                                        std::to_string(man.example_count) + " records");
  const auto& cfg = man.config;
  ds.examples.reserve(man.example_count);
  for (std::size_t i = 0; i < man.records.size(); ++i) {
    const auto& rec = man.records[i];
    if (rec.offset + rec_bytes > payload.size())
      throw StorageError(StorageErrorKind::Truncated, dir.string() + ": record " + std::to_string(i) + " at offset " +
                                                          std::to_string(rec.offset) + " runs past end of payload");
    const std::uint8_t* p = payload.data() + rec.offset;
    if (crc32_of(p, rec_bytes) != rec.crc32)
      throw StorageError(StorageErrorKind::Checksum, dir.string() + ": record " + std::to_string(i) + " at offset " +
                                                         std::to_string(rec.offset));
    LabeledExample ex;
    ex.frame = Frame::zeros(cfg);
    for (std::size_t k = 0; k < ex.frame.samples.size(); ++k) ex.frame.samples[k] = read_f32_le(p + 4 * k);
    ex.frame.normalized = rec.normalized;
    ex.frame.frame_index = rec.frame_index;
    ex.label = LabelMask(cfg.n_range_bins, cfg.n_angle_bins);
    std::memcpy(ex.label.bits.data(), p + man.frame_bytes(), man.mask_bytes());
    ex.targets = rec.targets;
    ex.split = rec.split;
    ex.sources = rec.sources;
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

}  // namespace rawradar
