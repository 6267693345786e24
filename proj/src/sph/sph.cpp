#include "lgdf/sph/sph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"
#include "lgdf/sph/kernel.hpp"

namespace lgdf::sph {
namespace {

constexpr std::size_t kChunk = 128;

double kernel_norm(const SphParams& p) { return kernel_sigma(p.dims) / std::pow(p.h, p.dims); }

Eigen::Vector3d column3(const Eigen::MatrixXd& m, std::size_t i) {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  for (Eigen::Index k = 0; k < m.rows(); ++k) v[k] = m(k, static_cast<Eigen::Index>(i));
  return v;
}

}  // namespace

void SphParams::validate() const {
  if (dims != 2 && dims != 3) throw ConfigError("sph: dims must be 2 or 3");
  if (!(h > 0.0)) throw ConfigError("sph: h must be positive");
  if (!(box_L > 4.0 * h)) throw ConfigError("sph: box_L must exceed 4h");
  if (!(gamma >= 1.0)) throw ConfigError("sph: gamma must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("sph: dt must be positive");
  if (!(mass > 0.0) || !(rho0 > 0.0) || !(sound_c > 0.0)) throw ConfigError("sph: mass, rho0, c must be positive");
  if (alpha_visc < 0.0 || beta_visc < 0.0) throw ConfigError("sph: viscosity coefficients must be non-negative");
}

ParticleSet make_lattice(SphParams& params) {
  const double root = std::pow(static_cast<double>(params.n_particles), 1.0 / params.dims);
  const auto n = static_cast<std::size_t>(std::llround(root));
  std::size_t total = 1;
  for (int k = 0; k < params.dims; ++k) total *= n;
  if (n == 0 || total != params.n_particles)
    throw ConfigError("sph: lattice needs n_particles = n^dims, got " + std::to_string(params.n_particles));
  params.mass = params.rho0 * std::pow(params.box_L, params.dims) / static_cast<double>(total);
  const double dx = params.box_L / static_cast<double>(n);
  ParticleSet p{Eigen::MatrixXd(params.dims, static_cast<Eigen::Index>(total)),
                Eigen::MatrixXd::Zero(params.dims, static_cast<Eigen::Index>(total)),
                Eigen::VectorXd::Constant(static_cast<Eigen::Index>(total), params.rho0)};
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    for (int k = 0; k < params.dims; ++k) {
      p.positions(k, static_cast<Eigen::Index>(idx)) = (static_cast<double>(rest % n) + 0.5) * dx;
      rest /= n;
    }
  }
  return p;
}

void wrap_positions(Eigen::MatrixXd& positions, double box_L) {
  for (double& x : positions.reshaped()) {
    x -= box_L * std::floor(x / box_L);
    if (x >= box_L) x = 0.0;
  }
}

Eigen::Vector3d separation(const Eigen::MatrixXd& pos, std::size_t a, std::size_t b, double box_L) {
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  for (Eigen::Index k = 0; k < pos.rows(); ++k) {
    double v = pos(k, static_cast<Eigen::Index>(a)) - pos(k, static_cast<Eigen::Index>(b));
    v -= box_L * std::round(v / box_L);
    d[k] = v;
  }
  return d;
}

CellGrid::CellGrid(const Eigen::MatrixXd& positions, double box_L, double support)
    : dims_(static_cast<int>(positions.rows())), box_L_(box_L) {
  n_side_ = std::max(1, static_cast<int>(std::floor(box_L / support)));
  cell_size_ = box_L / n_side_;
  std::size_t n_cells = 1;
  for (int k = 0; k < dims_; ++k) n_cells *= static_cast<std::size_t>(n_side_);
  cells_.resize(n_cells);
  for (Eigen::Index i = 0; i < positions.cols(); ++i)
    cells_[cell_of(column3(positions, static_cast<std::size_t>(i)))].push_back(static_cast<std::uint32_t>(i));
}

std::size_t CellGrid::cell_of(const Eigen::Vector3d& x) const {
  std::size_t idx = 0, stride = 1;
  for (int k = 0; k < dims_; ++k) {
    const int c = std::clamp(static_cast<int>(std::floor(x[k] / cell_size_)), 0, n_side_ - 1);
    idx += static_cast<std::size_t>(c) * stride;
    stride *= static_cast<std::size_t>(n_side_);
  }
  return idx;
}

std::vector<std::size_t> CellGrid::neighbourhood(const Eigen::Vector3d& x) const {
  int base[3] = {0, 0, 0};
  for (int k = 0; k < dims_; ++k) base[k] = std::clamp(static_cast<int>(std::floor(x[k] / cell_size_)), 0, n_side_ - 1);
  std::vector<std::size_t> out;
  const int span_z = dims_ == 3 ? 1 : 0;
  for (int dz = -span_z; dz <= span_z; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int off[3] = {dx, dy, dz};
        std::size_t idx = 0, stride = 1;
        for (int k = 0; k < dims_; ++k) {
          const int c = ((base[k] + off[k]) % n_side_ + n_side_) % n_side_;
          idx += static_cast<std::size_t>(c) * stride;
          stride *= static_cast<std::size_t>(n_side_);
        }
        out.push_back(idx);
      }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

NeighborList assemble(std::size_t n, const std::function<void(std::size_t, std::vector<Neighbor>&)>& collect) {
  std::vector<std::vector<Neighbor>> per(n);
  parallel_chunks(n, kChunk, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      collect(i, per[i]);
      std::sort(per[i].begin(), per[i].end(), [](const Neighbor& a, const Neighbor& b) { return a.j < b.j; });
    }
  });
  NeighborList nl;
  nl.offsets.resize(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) nl.offsets[i + 1] = nl.offsets[i] + per[i].size();
  nl.items.reserve(nl.offsets[n]);
  for (auto& v : per) nl.items.insert(nl.items.end(), v.begin(), v.end());
  return nl;
}

}  // namespace

NeighborList find_neighbors(const ParticleSet& p, const SphParams& params, const CellGrid& grid) {
  const double support = params.support();
  return assemble(p.size(), [&](std::size_t i, std::vector<Neighbor>& out) {
    for (std::size_t c : grid.neighbourhood(column3(p.positions, i)))
      for (std::uint32_t j : grid.particles_in(c)) {
        if (j == i) continue;
        const Eigen::Vector3d dx = separation(p.positions, i, j, params.box_L);
        const double r = dx.norm();
        if (r < support) out.push_back({j, dx, r});
      }
  });
}

NeighborList find_neighbors_brute(const ParticleSet& p, const SphParams& params) {
  const double support = params.support();
  return assemble(p.size(), [&](std::size_t i, std::vector<Neighbor>& out) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (j == i) continue;
      const Eigen::Vector3d dx = separation(p.positions, i, j, params.box_L);
      const double r = dx.norm();
      if (r < support) out.push_back({static_cast<std::uint32_t>(j), dx, r});
    }
  });
}

Eigen::VectorXd density_summation(const ParticleSet& p, const SphParams& params, const NeighborList& nl) {
  const double norm = kernel_norm(params);
  const double self = params.mass * detail::w_unchecked(0.0, params.h, norm);
  Eigen::VectorXd rho(static_cast<Eigen::Index>(p.size()));
  parallel_chunks(p.size(), kChunk, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      double s = self;
      for (const Neighbor* nb = nl.begin(i); nb != nl.end(i); ++nb) s += params.mass * detail::w_unchecked(nb->r, params.h, norm);
      rho[static_cast<Eigen::Index>(i)] = s;
    }
  });
  return rho;
}

double eos_pressure(double rho, const SphParams& params) {
  if (!(rho > 0.0)) throw ArgumentError("eos: density must be positive");
  return params.sound_c * params.sound_c * params.rho0 / params.gamma * (std::pow(rho / params.rho0, params.gamma) - 1.0);
}

double eos_internal_energy(double rho, const SphParams& params) {
  if (!(rho > 0.0)) throw ArgumentError("eos: density must be positive");
  const double c2 = params.sound_c * params.sound_c, g = params.gamma, r0 = params.rho0;
  const double tail = 1.0 / rho - 1.0 / r0;
  if (g == 1.0) return c2 * r0 * (std::log(rho / r0) / r0 + tail);
  return c2 * r0 / g * ((std::pow(rho / r0, g - 1.0) - 1.0) / ((g - 1.0) * r0) + tail);
}

double artificial_viscosity(const Eigen::Vector3d& x_ij, const Eigen::Vector3d& v_ij, double rho_i, double rho_j,
                            const SphParams& params) {
  const double vx = v_ij.dot(x_ij);
  if (vx >= 0.0) return 0.0;
  const double mu = params.h * vx / (x_ij.squaredNorm() + 0.01 * params.h * params.h);
  const double rho_bar = 0.5 * (rho_i + rho_j);
  return (-params.alpha_visc * params.sound_c * mu + params.beta_visc * mu * mu) / rho_bar;
}

std::string to_string(ForcingKind k) {
  switch (k) {
    case ForcingKind::none: return "none";
    case ForcingKind::taylor_green: return "taylor_green";
    case ForcingKind::stochastic: return "stochastic";
    case ForcingKind::uniform: return "uniform";
  }
  return "?";
}

ForcingKind forcing_kind_from_string(const std::string& s) {
  if (s == "none") return ForcingKind::none;
  if (s == "taylor_green") return ForcingKind::taylor_green;
  if (s == "stochastic") return ForcingKind::stochastic;
  if (s == "uniform") return ForcingKind::uniform;
  throw ConfigError("unknown forcing kind '" + s + "' (expected none|taylor_green|stochastic|uniform)");
}

void ForcingSpec::validate(int dims) const {
  if (!(amplitude >= 0.0)) throw ConfigError("forcing: amplitude must be >= 0");
  if (kind == ForcingKind::stochastic) {
    if (k_max_forced < 1) throw ConfigError("forcing: k_max_forced must be >= 1");
    if (!(ou_correlation_time > 0.0)) throw ConfigError("forcing: ou_correlation_time must be > 0");
  }
  if (kind == ForcingKind::uniform) {
    if (!direction.allFinite() || direction.norm() == 0.0) throw ConfigError("forcing: direction must be non-zero");
    if (dims == 2 && direction[2] != 0.0) throw ConfigError("forcing: 2D direction must have zero z component");
  }
}

Forcing::Forcing(ForcingSpec spec, int dims, double box_L, std::uint64_t seed)
    : spec_(std::move(spec)), dims_(dims), box_L_(box_L), seed_(seed) {
  spec_.validate(dims);
  if (spec_.kind != ForcingKind::stochastic) return;
  const int km = spec_.k_max_forced;
  const int kz = dims == 3 ? km : 0;
  for (int nz = -kz; nz <= kz; ++nz)
    for (int ny = -km; ny <= km; ++ny)
      for (int nx = -km; nx <= km; ++nx) {
        const int n2 = nx * nx + ny * ny + nz * nz;
        if (n2 == 0 || n2 > km * km) continue;
        // one representative of each +-n pair
        const int first = nx != 0 ? nx : (ny != 0 ? ny : nz);
        if (first < 0) continue;
        Mode m;
        m.k = 2.0 * std::numbers::pi / box_L * Eigen::Vector3d(nx, ny, nz);
        modes_.push_back(m);
      }
  Rng rng(seed_, ~std::uint64_t{0});
  for (auto& m : modes_) {
    m.re.setZero();
    m.im.setZero();
    for (int k = 0; k < dims; ++k) {
      m.re[k] = rng.normal();
      m.im[k] = rng.normal();
    }
  }
  mode_scale_ = spec_.amplitude / std::sqrt(static_cast<double>(modes_.size()) * (dims - 1));
}

void Forcing::project(Mode& m) const {
  const Eigen::Vector3d khat = m.k.normalized();
  m.re -= khat.dot(m.re) * khat;
  m.im -= khat.dot(m.im) * khat;
}

Eigen::Vector3d Forcing::at(const Eigen::Vector3d& x) const {
  const double A = spec_.amplitude;
  switch (spec_.kind) {
    case ForcingKind::none: return Eigen::Vector3d::Zero();
    case ForcingKind::uniform: return A * spec_.direction.normalized();
    case ForcingKind::taylor_green: {
      const double k = 2.0 * std::numbers::pi / box_L_;
      const double sx = std::sin(k * x[0]), cx = std::cos(k * x[0]);
      const double sy = std::sin(k * x[1]), cy = std::cos(k * x[1]);
      const double cz = dims_ == 3 ? std::cos(k * x[2]) : 1.0;
      return A * Eigen::Vector3d(sx * cy * cz, -cx * sy * cz, 0.0);
    }
    case ForcingKind::stochastic: {
      Eigen::Vector3d f = Eigen::Vector3d::Zero();
      for (Mode m : modes_) {
        project(m);
        const double ph = m.k.dot(x);
        f += std::cos(ph) * m.re - std::sin(ph) * m.im;
      }
      return mode_scale_ * f;
    }
  }
  return Eigen::Vector3d::Zero();
}

void Forcing::advance(double dt) {
  if (spec_.kind != ForcingKind::stochastic) return;
  const double decay = std::exp(-dt / spec_.ou_correlation_time);
  const double kick = std::sqrt(-std::expm1(-2.0 * dt / spec_.ou_correlation_time));
  Rng rng(seed_, updates_++);
  for (auto& m : modes_)
    for (int k = 0; k < dims_; ++k) {
      m.re[k] = decay * m.re[k] + kick * rng.normal();
      m.im[k] = decay * m.im[k] + kick * rng.normal();
    }
}

Eigen::MatrixXd acceleration(const ParticleSet& p, const SphParams& params, const Forcing& forcing,
                             const NeighborList& nl) {
  const std::size_t n = p.size();
  const double norm = kernel_norm(params);
  Eigen::VectorXd p_over_rho2(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = p.densities[static_cast<Eigen::Index>(i)];
    p_over_rho2[static_cast<Eigen::Index>(i)] = eos_pressure(rho, params) / (rho * rho);
  }
  Eigen::MatrixXd acc(p.dims(), static_cast<Eigen::Index>(n));
  parallel_chunks(n, kChunk, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::Vector3d vi = column3(p.velocities, i);
      const Eigen::Vector3d xi = column3(p.positions, i);
      Eigen::Vector3d a = Eigen::Vector3d::Zero();
      for (const Neighbor* nb = nl.begin(i); nb != nl.end(i); ++nb) {
        if (nb->r == 0.0) continue;
        const Eigen::Vector3d v_ij = vi - column3(p.velocities, nb->j);
        const double pi_ij = artificial_viscosity(nb->dx, v_ij, p.densities[ii], p.densities[nb->j], params);
        const double coef = p_over_rho2[ii] + p_over_rho2[nb->j] + pi_ij;
        const double g = detail::dwdr_unchecked(nb->r, params.h, norm) / nb->r;
        a -= (params.mass * coef * g) * nb->dx;
      }
      a += forcing.at(xi);
      for (int k = 0; k < p.dims(); ++k) acc(k, ii) = a[k];
    }
  });
  return acc;
}

Simulation::Simulation(SphParams params, ParticleSet particles, ForcingSpec forcing, std::uint64_t seed, CflPolicy cfl,
                       NeighborSearch search)
    : params_(params), p_(std::move(particles)), forcing_(std::move(forcing), params.dims, params.box_L, seed),
      cfl_(cfl), search_(search) {
  params_.validate();
  if (p_.dims() != params_.dims || p_.velocities.rows() != params_.dims ||
      p_.velocities.cols() != p_.positions.cols())
    throw ConfigError("sph: particle arrays do not match dims");
  params_.n_particles = p_.size();
  wrap_positions(p_.positions, params_.box_L);
  refresh();
}

void Simulation::refresh() {
  if (search_ == NeighborSearch::cells)
    nl_ = find_neighbors(p_, params_, CellGrid(p_.positions, params_.box_L, params_.support()));
  else
    nl_ = find_neighbors_brute(p_, params_);
  p_.densities = density_summation(p_, params_, nl_);
  acc_ = acceleration(p_, params_, forcing_, nl_);
}

double Simulation::cfl_limit() const {
  const double vmax = p_.size() ? std::sqrt(p_.velocities.colwise().squaredNorm().maxCoeff()) : 0.0;
  return cfl_.safety * params_.h / (params_.sound_c + vmax);
}

void Simulation::step() {
  const double dt = params_.dt;
  if (dt > cfl_limit()) {
    if (cfl_violations_++ == 0)
      std::cerr << "warning: sph dt=" << dt << " exceeds CFL limit " << cfl_limit() << " at t=" << t_ << '\n';
    if (cfl_.abort) throw NumericalError("sph: CFL violation at step " + std::to_string(steps_));
  }
  p_.velocities += 0.5 * dt * acc_;
  p_.positions += dt * p_.velocities;
  wrap_positions(p_.positions, params_.box_L);
  forcing_.advance(dt);
  t_ += dt;
  ++steps_;
  refresh();
  p_.velocities += 0.5 * dt * acc_;
  if (!p_.velocities.allFinite()) throw NumericalError("sph: non-finite velocity at step " + std::to_string(steps_));
}

void Simulation::run(std::uint64_t n) {
  for (std::uint64_t k = 0; k < n; ++k) step();
}

Eigen::VectorXd Simulation::total_momentum() const { return params_.mass * p_.velocities.rowwise().sum(); }

double Simulation::kinetic_energy() const { return 0.5 * params_.mass * p_.velocities.squaredNorm(); }

double Simulation::internal_energy() const {
  double e = 0.0;
  for (Eigen::Index i = 0; i < p_.densities.size(); ++i) e += params_.mass * eos_internal_energy(p_.densities[i], params_);
  return e;
}

}  // namespace lgdf::sph
