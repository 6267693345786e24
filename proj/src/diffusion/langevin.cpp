#include "lgdf/diffusion/langevin.hpp"

#include <cmath>
#include <sstream>

#include "lgdf/core/error.hpp"
#include "lgdf/core/rng.hpp"

namespace lgdf::diffusion {
namespace {

void check_config(const LangevinTarget& target, const LangevinConfig& cfg) {
  if (!(cfg.step_tau > 0.0)) throw ArgumentError("langevin: step_tau must be positive");
  if (!target.score) throw ArgumentError("langevin: target has no score");
  if (!(cfg.divergence_bound > 0.0)) throw ArgumentError("langevin: divergence bound must be positive");
}

/// Advances x by one step, throwing on divergence.
template <class Score>
void langevin_step(Eigen::VectorXd& x, const Score& psi, double tau, double bound, Rng& rng,
                   std::size_t step) {
  const Eigen::VectorXd drift = psi(x);
  const double sd = std::sqrt(2.0 * tau);
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += -tau * drift[i] + sd * rng.normal();
  const double norm = x.norm();
  if (!std::isfinite(norm) || norm > bound) {
    std::ostringstream msg;
    msg << "langevin: chain diverged at step " << step << " (|x|=" << norm << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

Eigen::MatrixXd langevin_sample(const LangevinTarget& target, const LangevinConfig& cfg,
                                const Eigen::VectorXd& x0, std::uint64_t seed, std::uint64_t stream) {
  check_config(target, cfg);
  Rng rng(seed, stream);
  Eigen::MatrixXd traj(x0.size(), static_cast<Eigen::Index>(cfg.n_steps + 1));
  Eigen::VectorXd x = x0;
  traj.col(0) = x;
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    langevin_step(x, target.score, cfg.step_tau, cfg.divergence_bound, rng, k);
    traj.col(static_cast<Eigen::Index>(k + 1)) = x;
  }
  return traj;
}

ChainMoments langevin_moments(const LangevinTarget& target, const LangevinConfig& cfg,
                              const Eigen::VectorXd& x0, std::size_t burn_in, std::uint64_t seed,
                              std::uint64_t stream) {
  check_config(target, cfg);
  Rng rng(seed, stream);
  const Eigen::Index d = x0.size();
  Eigen::VectorXd x = x0;
  // Welford accumulation.
  ChainMoments m{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d), 0, {}};
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    langevin_step(x, target.score, cfg.step_tau, cfg.divergence_bound, rng, k);
    if (k < burn_in) continue;
    ++m.kept;
    const Eigen::VectorXd delta = x - m.mean;
    m.mean += delta / static_cast<double>(m.kept);
    m.covariance.noalias() += delta * (x - m.mean).transpose();
  }
  if (m.kept > 1) m.covariance /= static_cast<double>(m.kept - 1);
  m.final_state = x;
  return m;
}

Eigen::VectorXd annealed_langevin_sample(const LangevinTarget& target, const AnnealPath& path,
                                         const LangevinConfig& cfg, std::uint64_t seed, std::uint64_t stream) {
  check_config(target, cfg);
  if (!path) throw ArgumentError("annealed langevin: missing lambda path");
  Rng rng(seed, stream);
  Eigen::VectorXd x(target.dim);
  for (auto& v : x) v = rng.normal();
  const auto n = static_cast<double>(cfg.n_steps);
  for (std::size_t k = 0; k < cfg.n_steps; ++k) {
    const double lambda = path(static_cast<double>(k + 1) / n);
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("annealed langevin: lambda outside [0, 1]");
    auto psi = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
      if (lambda == 0.0) return y;
      return (1.0 - lambda) * y + lambda * target.score(y);
    };
    langevin_step(x, psi, cfg.step_tau, cfg.divergence_bound, rng, k);
  }
  return x;
}

}  // namespace lgdf::diffusion
