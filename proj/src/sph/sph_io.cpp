#include "lgdf/sph/sph_io.hpp"

#include "lgdf/core/binary_io.hpp"
#include "lgdf/core/error.hpp"

namespace lgdf::sph {
namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kSnapshotKind = 2;
constexpr std::uint32_t kGridKind = 3;

void write_header(io::BinaryWriter& w, std::uint32_t kind, const SphParams& p, std::uint64_t n, double t) {
  w.magic();
  w.u32(kVersion);
  w.u32(kind);
  w.u32(static_cast<std::uint32_t>(p.dims));
  w.u64(n);
  w.f64(t);
  for (double v : {p.mass, p.h, p.rho0, p.sound_c, p.gamma, p.alpha_visc, p.beta_visc, p.box_L, p.dt}) w.f64(v);
}

Snapshot read_header(io::BinaryReader& r, std::uint32_t kind, const std::filesystem::path& path) {
  r.expect_magic();
  if (r.u32() != kVersion) throw IoError(path.string() + ": unsupported version");
  if (r.u32() != kind) throw IoError(path.string() + ": unexpected file kind");
  Snapshot s;
  s.params.dims = static_cast<int>(r.u32());
  if (s.params.dims != 2 && s.params.dims != 3) throw IoError(path.string() + ": invalid dims");
  s.params.n_particles = r.u64();
  s.t = r.f64();
  for (double* v : {&s.params.mass, &s.params.h, &s.params.rho0, &s.params.sound_c, &s.params.gamma,
                    &s.params.alpha_visc, &s.params.beta_visc, &s.params.box_L, &s.params.dt})
    *v = r.f64();
  return s;
}


// dims x N column-major equals N x dims row-major
void write_columns(io::BinaryWriter& w, const Eigen::MatrixXd& m) {
  w.f64s({m.data(), static_cast<std::size_t>(m.size())});
}

Eigen::MatrixXd read_columns(io::BinaryReader& r, int rows, std::size_t cols) {
  const auto v = r.f64s(static_cast<std::size_t>(rows) * cols);
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, static_cast<Eigen::Index>(cols));
}

}  // namespace

void write_snapshot(const std::filesystem::path& path, const Snapshot& s) {
  const auto& p = s.particles;
  io::BinaryWriter w(path);
  write_header(w, kSnapshotKind, s.params, p.size(), s.t);
  write_columns(w, p.positions);
  write_columns(w, p.velocities);
  w.f64s({p.densities.data(), static_cast<std::size_t>(p.densities.size())});
  w.close();
}

Snapshot read_snapshot(const std::filesystem::path& path) {
  io::BinaryReader r(path);
  Snapshot s = read_header(r, kSnapshotKind, path);
  const std::size_t n = s.params.n_particles;
  if (n > (std::size_t{1} << 32)) throw IoError(path.string() + ": implausible particle count");
  s.particles.positions = read_columns(r, s.params.dims, n);
  s.particles.velocities = read_columns(r, s.params.dims, n);
  const auto rho = r.f64s(n);
  s.particles.densities = Eigen::Map<const Eigen::VectorXd>(rho.data(), static_cast<Eigen::Index>(n));
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes");
  return s;
}

void write_grid(const std::filesystem::path& path, const Snapshot& header, const VelocityGrid& g) {
  io::BinaryWriter w(path);
  write_header(w, kGridKind, header.params, header.params.n_particles, header.t);
  w.u64(static_cast<std::uint64_t>(g.n));
  write_columns(w, g.values);
  w.close();
}

GridFile read_grid(const std::filesystem::path& path) {
  io::BinaryReader r(path);
  GridFile f;
  f.header = read_header(r, kGridKind, path);
  const std::uint64_t n = r.u64();
  if (n < 1 || n > 4096) throw IoError(path.string() + ": implausible grid size");
  f.grid.n = static_cast<int>(n);
  f.grid.dims = f.header.params.dims;
  f.grid.box_L = f.header.params.box_L;
  std::size_t total = 1;
  for (int k = 0; k < f.grid.dims; ++k) total *= n;
  f.grid.values = read_columns(r, f.grid.dims, total);
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes");
  return f;
}

nlohmann::json trajectory_manifest(const std::vector<TrajectoryEntry>& entries) {
  auto arr = nlohmann::json::array();
  for (const auto& e : entries)
    arr.push_back({{"file", e.snapshot}, {"grid", e.grid.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.grid)},
                   {"t", e.t}, {"step", e.step}});
  return {{"snapshots", arr}};
}

std::vector<TrajectoryEntry> parse_trajectory_manifest(const nlohmann::json& j) {
  std::vector<TrajectoryEntry> out;
  try {
    for (const auto& e : j.at("snapshots")) {
      TrajectoryEntry t;
      t.snapshot = e.at("file").get<std::string>();
      if (e.contains("grid") && !e.at("grid").is_null()) t.grid = e.at("grid").get<std::string>();
      t.t = e.at("t").get<double>();
      t.step = e.at("step").get<std::uint64_t>();
      out.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw IoError(std::string("trajectory manifest: ") + ex.what());
  }
  return out;
}

nlohmann::json to_json(const SphParams& p) {
  return {{"n_particles", p.n_particles}, {"mass", p.mass},       {"h", p.h},
          {"rho0", p.rho0},               {"sound_c", p.sound_c}, {"gamma", p.gamma},
          {"alpha_visc", p.alpha_visc},   {"beta_visc", p.beta_visc}, {"box_L", p.box_L},
          {"dt", p.dt},                   {"dims", p.dims}};
}

}  // namespace lgdf::sph
