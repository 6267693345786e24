#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

namespace lgdf::diffusion {

/// Target of a Langevin chain. Only the score is needed for sampling;
/// log_density is optional and used by diagnostics.
struct LangevinTarget {
  int dim = 1;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> score;  // psi = -grad log p
  std::function<double(const Eigen::VectorXd&)> log_density;
};

struct LangevinConfig {
  double step_tau = 0.01;
  std::size_t n_steps = 1000;
  /// A chain whose Euclidean norm exceeds this bound is declared divergent.
  double divergence_bound = 1e8;
};

/// Unadjusted Langevin chain x <- x - tau psi(x) + sqrt(2 tau) z.
/// Returns the d x (n_steps + 1) trajectory including x0.
Eigen::MatrixXd langevin_sample(const LangevinTarget& target, const LangevinConfig& cfg,
                                const Eigen::VectorXd& x0, std::uint64_t seed, std::uint64_t stream = 0);

/// Running mean/covariance of a chain without storing it. Steps before
/// `burn_in` are discarded.
struct ChainMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t kept = 0;
  Eigen::VectorXd final_state;
};
ChainMoments langevin_moments(const LangevinTarget& target, const LangevinConfig& cfg,
                              const Eigen::VectorXd& x0, std::size_t burn_in, std::uint64_t seed,
                              std::uint64_t stream = 0);

/// Annealing path: lambda as a function of the run fraction s in (0, 1].
using AnnealPath = std::function<double(double)>;
inline double linear_anneal(double s) { return s; }

/// Langevin with the time-dependent score of the geometric path
/// p(x|lambda) ~ N(0,I)^(1-lambda) p(x)^lambda, whose score is
/// (1 - lambda) x + lambda psi(x). Starts from x0 ~ N(0, I) drawn from the
/// stream and returns the final state.
Eigen::VectorXd annealed_langevin_sample(const LangevinTarget& target, const AnnealPath& path,
                                         const LangevinConfig& cfg, std::uint64_t seed,
                                         std::uint64_t stream = 0);

}  // namespace lgdf::diffusion
