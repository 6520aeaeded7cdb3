#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rawradar/radar_config.hpp"
#include "rawradar/scene.hpp"

namespace rawradar {

// Distinct failure categories of the on-disk containers.
enum class StorageErrorKind { Io, Format, Version, Truncated, Checksum, Integrity };

const char* to_string(StorageErrorKind kind);

class StorageError : public std::runtime_error {
 public:
  StorageError(StorageErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  StorageErrorKind kind() const { return kind_; }

 private:
  StorageErrorKind kind_;
};

inline constexpr int kDatasetVersion = 1;

struct ExampleRecord {
  std::uint64_t offset = 0;
  std::uint32_t crc32 = 0;
  std::string split = "train";
  bool normalized = false;
  long frame_index = 0;
  std::vector<PointTarget> targets;
  std::vector<int> sources;
};

// A dataset directory holds `manifest.json` plus `payload.bin`. Each payload
// record is the frame as little-endian float32 (fast-time fastest) followed by
// the uint8 label mask (angle fastest).
struct DatasetManifest {
  RadarConfig config;
  std::size_t example_count = 0;
  std::vector<ExampleRecord> records;
  nlohmann::json augmentation = nlohmann::json::object();
  nlohmann::json provenance = nlohmann::json::object();
  std::vector<std::string> warnings;

  std::size_t frame_bytes() const;
  std::size_t mask_bytes() const;
  std::size_t record_bytes() const { return frame_bytes() + mask_bytes(); }
  std::vector<std::size_t> indices_with_split(const std::string& split) const;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<LabeledExample> examples;
};

nlohmann::json config_to_json(const RadarConfig& cfg);
RadarConfig config_from_json(const nlohmann::json& j);

std::uint32_t crc32_of(const void* data, std::size_t bytes);

DatasetManifest save_dataset(const std::filesystem::path& dir, const RadarConfig& cfg,
                             const std::vector<LabeledExample>& examples, nlohmann::json augmentation = nlohmann::json::object(),
                             nlohmann::json provenance = nlohmann::json::object(), std::vector<std::string> warnings = {});
DatasetManifest load_manifest(const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

// Little-endian helpers shared with the checkpoint container.
void append_f32_le(std::vector<std::uint8_t>& out, float v);
float read_f32_le(const std::uint8_t* p);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace rawradar
