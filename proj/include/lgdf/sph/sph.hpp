#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace lgdf::sph {

struct SphParams {
  std::size_t n_particles = 0;
  double mass = 1.0;
  double h = 0.1;
  double rho0 = 1.0;
  double sound_c = 10.0;
  double gamma = 7.0;
  double alpha_visc = 1.0;
  double beta_visc = 2.0;
  double box_L = 1.0;
  double dt = 1e-3;
  int dims = 2;

  /// Throws ConfigError.
  void validate() const;
  double support() const { return 2.0 * h; }
};

/// State stored one particle per column (dims rows).
struct ParticleSet {
  Eigen::MatrixXd positions;
  Eigen::MatrixXd velocities;
  Eigen::VectorXd densities;

  std::size_t size() const { return static_cast<std::size_t>(positions.cols()); }
  int dims() const { return static_cast<int>(positions.rows()); }
};

/// Particles on a uniform periodic lattice of n^dims sites, at rest, with
/// mass rho0 L^dims / N written into params. Throws ConfigError unless
/// params.n_particles is a perfect power.
ParticleSet make_lattice(SphParams& params);

/// Maps every coordinate into [0, L).
void wrap_positions(Eigen::MatrixXd& positions, double box_L);

/// Minimum-image separation a - b in a periodic box, zero-padded to 3D.
Eigen::Vector3d separation(const Eigen::MatrixXd& pos, std::size_t a, std::size_t b, double box_L);

struct Neighbor {
  std::uint32_t j;
  Eigen::Vector3d dx;  // r_i - r_j, minimum image
  double r;
};

/// Neighbours within the kernel support of every particle, self excluded,
/// ordered by index. CSR layout: neighbours of i are
/// items[offsets[i] .. offsets[i + 1]).
struct NeighborList {
  std::vector<std::size_t> offsets;
  std::vector<Neighbor> items;

  std::size_t count(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
  const Neighbor* begin(std::size_t i) const { return items.data() + offsets[i]; }
  const Neighbor* end(std::size_t i) const { return items.data() + offsets[i + 1]; }
};

/// Uniform periodic cells of size >= the support radius.
class CellGrid {
 public:
  CellGrid(const Eigen::MatrixXd& positions, double box_L, double support);

  int cells_per_side() const { return n_side_; }
  double cell_size() const { return cell_size_; }
  std::size_t cell_of(const Eigen::Vector3d& x) const;
  const std::vector<std::uint32_t>& particles_in(std::size_t cell) const { return cells_[cell]; }
  /// Distinct cells within one cell of the cell containing x.
  std::vector<std::size_t> neighbourhood(const Eigen::Vector3d& x) const;

 private:
  int dims_;
  int n_side_;
  double box_L_;
  double cell_size_;
  std::vector<std::vector<std::uint32_t>> cells_;
};

NeighborList find_neighbors(const ParticleSet& p, const SphParams& params, const CellGrid& grid);
/// All-pairs reference search with the same ordering.
NeighborList find_neighbors_brute(const ParticleSet& p, const SphParams& params);

/// rho_i = sum_j m W(r_ij, h) including the self term.
Eigen::VectorXd density_summation(const ParticleSet& p, const SphParams& params, const NeighborList& nl);

/// P = (c^2 rho0 / gamma) ((rho/rho0)^gamma - 1). Throws ArgumentError for rho <= 0.
double eos_pressure(double rho, const SphParams& params);

/// Specific internal energy e(rho) = integral from rho0 to rho of P(s)/s^2 ds.
double eos_internal_energy(double rho, const SphParams& params);

/// Monaghan viscosity with mu = h (v_ij . x_ij) / (|x_ij|^2 + 0.01 h^2),
/// Pi = (-alpha c mu + beta mu^2) / rho_bar for approaching pairs, else 0.
double artificial_viscosity(const Eigen::Vector3d& x_ij, const Eigen::Vector3d& v_ij, double rho_i, double rho_j,
                            const SphParams& params);

enum class ForcingKind { none, taylor_green, stochastic, uniform };

std::string to_string(ForcingKind k);
ForcingKind forcing_kind_from_string(const std::string& s);

struct ForcingSpec {
  ForcingKind kind = ForcingKind::none;
  double amplitude = 0.0;
  int k_max_forced = 2;
  double ou_correlation_time = 1.0;
  /// Direction of the uniform kind.
  Eigen::Vector3d direction = Eigen::Vector3d::UnitX();

  /// Throws ConfigError.
  void validate(int dims) const;
};

/// Body force f_ext(x, t). Taylor-Green: at the base wavenumber k = 2 pi / L,
///   2D: A (sin kx cos ky, -cos kx sin ky)
///   3D: A (sin kx cos ky cos kz, -cos kx sin ky cos kz, 0).
/// Stochastic: sum over integer wavevectors n with 1 <= |n| <= k_max of
/// Re[a_n e^{i 2 pi n.x / L}], each complex amplitude an OU process with
/// correlation time tau projected onto the plane normal to n, scaled so the
/// stationary mean of |f|^2 is A^2.
class Forcing {
 public:
  Forcing(ForcingSpec spec, int dims, double box_L, std::uint64_t seed);

  const ForcingSpec& spec() const { return spec_; }
  Eigen::Vector3d at(const Eigen::Vector3d& x) const;
  /// Exact OU update of the stochastic amplitudes over dt; no-op for other kinds.
  void advance(double dt);
  std::size_t mode_count() const { return modes_.size(); }

 private:
  struct Mode {
    Eigen::Vector3d k;
    Eigen::Vector3d re, im;
  };
  void project(Mode& m) const;

  ForcingSpec spec_;
  int dims_;
  double box_L_;
  std::uint64_t seed_;
  std::uint64_t updates_ = 0;
  double mode_scale_ = 0.0;
  std::vector<Mode> modes_;
};

/// a_i = -sum_{j != i} m (P_i/rho_i^2 + P_j/rho_j^2 + Pi_ij) grad_i W_ij + f_ext(r_i).
/// Terms are gathered per particle in neighbour order, so every pair
/// contributes exactly opposite forces and the result does not depend on
/// the worker count.
Eigen::MatrixXd acceleration(const ParticleSet& p, const SphParams& params, const Forcing& forcing,
                             const NeighborList& nl);

enum class NeighborSearch { cells, brute };

struct CflPolicy {
  double safety = 0.25;
  bool abort = false;
};

/// Kick-drift-kick integration with densities and neighbours refreshed
/// after every drift.
class Simulation {
 public:
  Simulation(SphParams params, ParticleSet particles, ForcingSpec forcing, std::uint64_t seed,
             CflPolicy cfl = {}, NeighborSearch search = NeighborSearch::cells);

  const SphParams& params() const { return params_; }
  const ParticleSet& particles() const { return p_; }
  const Eigen::MatrixXd& accelerations() const { return acc_; }
  const NeighborList& neighbors() const { return nl_; }
  const Forcing& forcing() const { return forcing_; }
  double time() const { return t_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t cfl_violations() const { return cfl_violations_; }

  /// 0.25 h / (c + max |v|) with the policy's safety factor.
  double cfl_limit() const;
  /// One step of params.dt. A dt above the CFL limit is counted, reported
  /// on stderr once, and throws NumericalError when the policy aborts.
  void step();
  void run(std::uint64_t n);

  Eigen::VectorXd total_momentum() const;
  double kinetic_energy() const;
  double internal_energy() const;

 private:
  void refresh();

  SphParams params_;
  ParticleSet p_;
  Forcing forcing_;
  CflPolicy cfl_;
  NeighborSearch search_;
  NeighborList nl_;
  Eigen::MatrixXd acc_;
  double t_ = 0.0;
  std::uint64_t steps_ = 0;
  std::uint64_t cfl_violations_ = 0;
};

}  // namespace lgdf::sph
