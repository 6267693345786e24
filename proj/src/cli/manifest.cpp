#include "lgdf/cli/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "lgdf/core/error.hpp"
#include "lgdf/core/hash.hpp"

namespace lgdf::cli {

const char* const code_version = LGDF_VERSION;

void RunManifest::add_file(const std::filesystem::path& out_dir, const std::string& relative) {
  const auto full = out_dir / relative;
  files.push_back({relative, sha256_file(full), std::filesystem::file_size(full)});
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json to_json(const RunManifest& m) {
  auto files = nlohmann::json::array();
  for (const auto& f : m.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"command", m.command},         {"version", m.version},       {"seed", m.seed},
          {"threads", m.threads},         {"started_at", m.started_at}, {"finished_at", m.finished_at},
          {"config", m.config},           {"files", files},             {"metrics", m.metrics}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threads = j.at("threads").get<unsigned>();
    m.started_at = j.at("started_at").get<std::string>();
    m.finished_at = j.at("finished_at").get<std::string>();
    m.config = j.at("config");
    m.metrics = j.at("metrics");
    for (const auto& f : j.at("files"))
      m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                         f.at("bytes").get<std::uintmax_t>()});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed run manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> verify_manifest(const std::filesystem::path& path) {
  const RunManifest m = read_manifest(path);
  const auto dir = path.parent_path();
  std::vector<std::string> bad;
  for (const auto& f : m.files) {
    const auto full = dir / f.path;
    if (!std::filesystem::exists(full) || std::filesystem::file_size(full) != f.bytes || sha256_file(full) != f.sha256)
      bad.push_back(f.path);
  }
  return bad;
}

}  // namespace lgdf::cli
