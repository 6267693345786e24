#include "lgdf/sph/fields.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/sph/kernel.hpp"

namespace lgdf::sph {
namespace {

// FFTW planning is not thread safe.
std::mutex fftw_mutex;

}  // namespace

std::vector<Eigen::MatrixXd> estimate_vgt(const ParticleSet& p, const SphParams& params, const NeighborList& nl) {
  const int d = p.dims();
  const double norm = kernel_sigma(d) / std::pow(params.h, d);
  std::vector<Eigen::MatrixXd> out(p.size());
  parallel_chunks(p.size(), 128, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
      for (const Neighbor* nb = nl.begin(i); nb != nl.end(i); ++nb) {
        if (nb->r == 0.0) continue;
        const double vol = params.mass / p.densities[nb->j];
        const double g = detail::dwdr_unchecked(nb->r, params.h, norm) / nb->r;
        const Eigen::VectorXd dv = p.velocities.col(nb->j) - p.velocities.col(static_cast<Eigen::Index>(i));
        m.noalias() += (vol * g) * dv * nb->dx.head(d).transpose();
      }
      out[i] = std::move(m);
    }
  });
  return out;
}

Eigen::Vector3d VelocityGrid::point(std::size_t idx) const {
  Eigen::Vector3d x = Eigen::Vector3d::Zero();
  const double dx = box_L / n;
  for (int k = 0; k < dims; ++k) {
    x[k] = (static_cast<double>(idx % static_cast<std::size_t>(n)) + 0.5) * dx;
    idx /= static_cast<std::size_t>(n);
  }
  return x;
}

VelocityGrid grid_interpolate(const ParticleSet& p, const SphParams& params, int n) {
  if (n < 4) throw ArgumentError("grid_interpolate: grid_n must be >= 4");
  const int d = p.dims();
  VelocityGrid g;
  g.n = n;
  g.dims = d;
  g.box_L = params.box_L;
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(n);
  g.values.setZero(d, static_cast<Eigen::Index>(total));
  const CellGrid cells(p.positions, params.box_L, params.support());
  const double norm = kernel_sigma(d) / std::pow(params.h, d);
  std::vector<char> is_empty(total, 0);
  parallel_chunks(total, 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t idx = lo; idx < hi; ++idx) {
      const Eigen::Vector3d x = g.point(idx);
      Eigen::VectorXd num = Eigen::VectorXd::Zero(d);
      double den = 0.0;
      for (std::size_t c : cells.neighbourhood(x))
        for (std::uint32_t j : cells.particles_in(c)) {
          Eigen::Vector3d dx = Eigen::Vector3d::Zero();
          for (int k = 0; k < d; ++k) {
            double v = x[k] - p.positions(k, j);
            v -= params.box_L * std::round(v / params.box_L);
            dx[k] = v;
          }
          const double w = detail::w_unchecked(dx.norm(), params.h, norm);
          if (w == 0.0) continue;
          const double vw = params.mass / p.densities[j] * w;
          num += vw * p.velocities.col(j);
          den += vw;
        }
      if (den > 0.0)
        g.values.col(static_cast<Eigen::Index>(idx)) = num / den;
      else
        is_empty[idx] = 1;
    }
  });
  for (std::size_t idx = 0; idx < total; ++idx)
    if (is_empty[idx]) g.empty.push_back(idx);
  return g;
}

std::vector<double> energy_spectrum(const Eigen::MatrixXd& values, int n, int dims) {
  if (dims != 2 && dims != 3) throw ArgumentError("energy_spectrum: dims must be 2 or 3");
  std::size_t total = 1;
  for (int k = 0; k < dims; ++k) total *= static_cast<std::size_t>(n);
  if (static_cast<std::size_t>(values.cols()) != total) throw ArgumentError("energy_spectrum: field size mismatch");

  const int max_shell = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dims)) * (n / 2))) + 1;
  std::vector<double> shells(static_cast<std::size_t>(max_shell) + 1, 0.0);

  // FFTW wants the slowest index first: our column index is i0 + n (i1 + n i2),
  // so the array is row-major in (i2, i1, i0).
  const int rank = dims;
  int shape[3] = {n, n, n};
  fftw_complex* buf = fftw_alloc_complex(total);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    plan = fftw_plan_dft(rank, shape, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  const double inv_n = 1.0 / static_cast<double>(total);
  for (Eigen::Index comp = 0; comp < values.rows(); ++comp) {
    for (std::size_t idx = 0; idx < total; ++idx) {
      buf[idx][0] = values(comp, static_cast<Eigen::Index>(idx));
      buf[idx][1] = 0.0;
    }
    fftw_execute(plan);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rest = idx;
      double k2 = 0.0;
      for (int a = 0; a < dims; ++a) {
        int k = static_cast<int>(rest % static_cast<std::size_t>(n));
        rest /= static_cast<std::size_t>(n);
        if (k > n / 2) k -= n;
        k2 += static_cast<double>(k) * k;
      }
      const double re = buf[idx][0] * inv_n, im = buf[idx][1] * inv_n;
      shells[static_cast<std::size_t>(std::lround(std::sqrt(k2)))] += 0.5 * (re * re + im * im);
    }
  }
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return shells;
}

std::vector<double> energy_spectrum(const VelocityGrid& g) { return energy_spectrum(g.values, g.n, g.dims); }

}  // namespace lgdf::sph
