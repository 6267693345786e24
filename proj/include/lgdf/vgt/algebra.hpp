#pragma once

#include <Eigen/Dense>
#include <array>
#include <span>

namespace lgdf::vgt {

using Mat3 = Eigen::Matrix3d;

struct SymSkewSplit {
  Mat3 s;  // strain, symmetric
  Mat3 w;  // vorticity, skew
};

SymSkewSplit split_sym_skew(const Mat3& m);

/// {tr s^2, tr w^2, tr s^3, tr w^2 s, tr w^2 s^2}
using InvariantVec = std::array<double, 5>;

InvariantVec invariants(const SymSkewSplit& sw);

using TensorBases = std::array<Mat3, 10>;

/// The ten bases T1..T10 of the pressure-Hessian expansion, taken term by
/// term as printed. Every subtracted trace is multiplied by the identity,
/// including the (2/3) tr[(sw)^2] term of T6. T5, T7 and T8 are kept in the
/// printed form even though they differ from the usual integrity basis.
TensorBases tensor_bases(const SymSkewSplit& sw);

/// sum_n g[n] T[n]. Throws ArgumentError unless g has 10 entries.
Mat3 basis_expansion(std::span<const double> g, const TensorBases& t);

struct PairNormalizers {
  double d = 1.0;
  double v_rms = 1.0;
  double rho_rms = 1.0;
};

struct PairFeatures {
  std::array<double, 5> I{};  // rho_i, rho_j, |x_ij|, |v_ij|, x_ij.v_ij (normalised)
  Eigen::VectorXd b1;         // x_ij
  Eigen::VectorXd b2;         // v_ij
};

/// x_ij = (x_i - x_j)/d under the minimum image of a periodic box of side
/// box_L (no wrapping when box_L <= 0), v_ij = (v_i - v_j)/v_rms.
/// Throws ArgumentError on a non-positive normaliser or mismatched sizes.
PairFeatures lles_pair_features(const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_j,
                                const Eigen::VectorXd& v_i, const Eigen::VectorXd& v_j, double rho_i,
                                double rho_j, const PairNormalizers& norm, double box_L);

/// Q = -tr(M^2)/2, R = -det M.
double q_invariant(const Mat3& m);
double r_invariant(const Mat3& m);

/// Q^3 + (27/4) R^2; zero on the Vieillefosse line.
double vieillefosse(const Mat3& m);

}  // namespace lgdf::vgt
