#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "lgdf/sph/fields.hpp"
#include "lgdf/sph/sph.hpp"

namespace lgdf::sph {

struct Snapshot {
  SphParams params;
  double t = 0.0;
  ParticleSet particles;
};

/// "LGDF" | u32 version=1 | u32 kind=2 | u32 dims | u64 N | f64 t |
/// params block: f64 mass, h, rho0, c, gamma, alpha, beta, L, dt |
/// positions, velocities (N x dims row-major), densities (N), all f64
void write_snapshot(const std::filesystem::path& path, const Snapshot& s);
Snapshot read_snapshot(const std::filesystem::path& path);

/// Same header with kind=3, then u64 grid_n and the field as
/// grid_n^dims x dims row-major f64 (grid order of VelocityGrid).
void write_grid(const std::filesystem::path& path, const Snapshot& header, const VelocityGrid& g);
struct GridFile {
  Snapshot header;  // particles empty
  VelocityGrid grid;
};
GridFile read_grid(const std::filesystem::path& path);

struct TrajectoryEntry {
  std::string snapshot;
  std::string grid;  // empty when not exported
  double t = 0.0;
  std::uint64_t step = 0;
};

/// {"snapshots": [{"file", "grid", "t", "step"}, ...]}
nlohmann::json trajectory_manifest(const std::vector<TrajectoryEntry>& entries);
std::vector<TrajectoryEntry> parse_trajectory_manifest(const nlohmann::json& j);

nlohmann::json to_json(const SphParams& p);

}  // namespace lgdf::sph
