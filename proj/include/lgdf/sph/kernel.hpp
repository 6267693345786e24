#pragma once

#include <Eigen/Dense>

namespace lgdf::sph {

/// Cubic-spline normalisation sigma_d: 2/3, 10/(7 pi), 1/pi for d = 1, 2, 3.
double kernel_sigma(int dims);

/// Cubic spline with support 2h, q = r/h:
///   W = sigma_d / h^d * { 1 - 3/2 q^2 + 3/4 q^3  (q < 1)
///                         1/4 (2 - q)^3         (1 <= q < 2)
///                         0                      (q >= 2) }
/// Throws ArgumentError for h <= 0, r < 0 or unsupported dims.
double kernel_w(double r, double h, int dims);

/// dW/dr.
double kernel_dwdr(double r, double h, int dims);

/// Gradient of W(|r_vec|, h) with respect to r_i, where r_vec = r_i - r_j.
/// The dimension is r_vec.size().
Eigen::VectorXd kernel_grad(const Eigen::VectorXd& r_vec, double h);

namespace detail {
// Unchecked forms for inner loops; h > 0 and dims in {1, 2, 3} assumed.
inline double w_unchecked(double r, double h, double norm) {
  const double q = r / h;
  if (q >= 2.0) return 0.0;
  if (q < 1.0) return norm * (1.0 - 1.5 * q * q + 0.75 * q * q * q);
  const double u = 2.0 - q;
  return norm * 0.25 * u * u * u;
}

inline double dwdr_unchecked(double r, double h, double norm) {
  const double q = r / h;
  if (q >= 2.0) return 0.0;
  if (q < 1.0) return norm / h * (-3.0 * q + 2.25 * q * q);
  const double u = 2.0 - q;
  return -norm / h * 0.75 * u * u;
}
}  // namespace detail

}  // namespace lgdf::sph
