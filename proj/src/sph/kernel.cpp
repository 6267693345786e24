#include "lgdf/sph/kernel.hpp"

#include <cmath>
#include <numbers>

#include "lgdf/core/error.hpp"

namespace lgdf::sph {
namespace {

double norm_factor(double h, int dims) {
  if (!(h > 0.0)) throw ArgumentError("kernel: h must be positive");
  return kernel_sigma(dims) / std::pow(h, dims);
}

}  // namespace

double kernel_sigma(int dims) {
  switch (dims) {
    case 1: return 2.0 / 3.0;
    case 2: return 10.0 / (7.0 * std::numbers::pi);
    case 3: return 1.0 / std::numbers::pi;
  }
  throw ArgumentError("kernel: dims must be 1, 2 or 3");
}

double kernel_w(double r, double h, int dims) {
  const double norm = norm_factor(h, dims);
  if (r < 0.0) throw ArgumentError("kernel: r must be non-negative");
  return detail::w_unchecked(r, h, norm);
}

double kernel_dwdr(double r, double h, int dims) {
  const double norm = norm_factor(h, dims);
  if (r < 0.0) throw ArgumentError("kernel: r must be non-negative");
  return detail::dwdr_unchecked(r, h, norm);
}

Eigen::VectorXd kernel_grad(const Eigen::VectorXd& r_vec, double h) {
  const int dims = static_cast<int>(r_vec.size());
  const double norm = norm_factor(h, dims);
  const double r = r_vec.norm();
  if (r == 0.0) return Eigen::VectorXd::Zero(dims);
  return detail::dwdr_unchecked(r, h, norm) / r * r_vec;
}

}  // namespace lgdf::sph
