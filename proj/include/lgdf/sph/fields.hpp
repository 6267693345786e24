#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lgdf/sph/sph.hpp"

namespace lgdf::sph {

/// m_i = sum_j (m / rho_j) (v_j - v_i) outer grad_i W_ij, i.e. (m_i)_ab
/// estimates d v_a / d x_b. One dims x dims matrix per particle.
std::vector<Eigen::MatrixXd> estimate_vgt(const ParticleSet& p, const SphParams& params, const NeighborList& nl);

/// Velocity on a uniform periodic grid. Point (i0, i1[, i2]) sits at
/// (i + 1/2) L / n and is stored in column i0 + n (i1 + n i2).
struct VelocityGrid {
  int n = 0;
  int dims = 0;
  double box_L = 1.0;
  Eigen::MatrixXd values;            // dims x n^dims
  std::vector<std::size_t> empty;    // points with no particle in range (value 0)

  std::size_t points() const { return static_cast<std::size_t>(values.cols()); }
  Eigen::Vector3d point(std::size_t idx) const;
};

/// Shepard-normalised kernel interpolation
///   u(x) = sum_j V_j v_j W(|x - r_j|) / sum_j V_j W(|x - r_j|), V_j = m / rho_j.
/// Throws ArgumentError for n < 4.
VelocityGrid grid_interpolate(const ParticleSet& p, const SphParams& params, int n);

/// Shell energies E(k) = sum over integer wavevectors with round(|k|) = k of
/// 1/2 |u_hat|^2, u_hat the DFT normalised by the number of points. Then
/// A sin(2 pi k0 x / L) puts A^2/4 into shell k0, and the shells sum to
/// 1/2 mean |u|^2. Returns shells 0 .. max.
std::vector<double> energy_spectrum(const VelocityGrid& g);

/// Same for a field given as dims x n^dims values in grid order.
std::vector<double> energy_spectrum(const Eigen::MatrixXd& values, int n, int dims);

}  // namespace lgdf::sph
