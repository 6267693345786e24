#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace lgdf::cli {

extern const char* const code_version;

struct ManifestFile {
  std::string path;  // relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::string version = code_version;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<ManifestFile> files;
  nlohmann::json metrics = nlohmann::json::object();

  /// Hashes `out_dir / relative` and records it.
  void add_file(const std::filesystem::path& out_dir, const std::string& relative);
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

/// Files whose hash or size no longer matches, relative to the manifest's
/// directory. Missing files are reported too.
std::vector<std::string> verify_manifest(const std::filesystem::path& path);

}  // namespace lgdf::cli
