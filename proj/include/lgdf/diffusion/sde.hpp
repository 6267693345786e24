#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lgdf/diffusion/schedule.hpp"
#include "lgdf/diffusion/score_model.hpp"

namespace lgdf::diffusion {

struct PathState {
  double t = 0.0;
  Eigen::VectorXd x;
};

/// One Euler-Maruyama step of dx = -beta x/2 dt + sqrt(beta) dw.
PathState forward_ou_step(const PathState& state, const NoiseSchedule& schedule, double dt,
                          const Eigen::VectorXd& noise);

/// Exact OU transition from t_from to t_to >= t_from driven by one standard
/// normal vector.
Eigen::VectorXd ou_transition(const Eigen::VectorXd& x, const NoiseSchedule& schedule, double t_from,
                              double t_to, const Eigen::VectorXd& noise);

struct ReverseConfig {
  int steps = 1000;
  /// Integration stops here; the marginal is singular at t = 0.
  double t_min = 1e-3;
  /// Replace the final state by the posterior-mean estimate
  /// (x - var(t_min) psi) / exp(-B(t_min)/2) instead of returning the
  /// noisy state at t_min.
  bool final_denoise = true;
  /// Columns per batch score evaluation; fixed so results do not depend on
  /// the worker count.
  int chunk = 64;

  void validate(const NoiseSchedule& schedule) const;
};

enum class FailurePolicy { raise, record };

struct ReverseResult {
  Eigen::MatrixXd samples;            // d x n; failed columns hold NaN
  std::vector<std::string> failures;  // per column, empty when fine
  std::size_t failed = 0;
};

/// Integrates the time-reversed OU process from x(T) ~ N(0, I) down to t_min:
///
///   x <- x + beta(t) (x/2 - psi(t, x)) h + sqrt(beta(t) h) z
///
/// per backward step of length h, i.e. drift f - g^2 grad log p of the
/// reverse-time SDE written with psi = -grad log p. Sample `index` draws
/// from the stream Rng(seed, index).
Eigen::VectorXd reverse_sde_sample(const ScoreModel& model, const NoiseSchedule& schedule,
                                   const ReverseConfig& cfg, std::uint64_t seed, std::uint64_t index = 0);

/// n independent samples; column i equals reverse_sde_sample(..., seed, i)
/// for exact-score models. Throws NumericalError on the first failure.
Eigen::MatrixXd reverse_sde_ensemble(const ScoreModel& model, const NoiseSchedule& schedule,
                                     const ReverseConfig& cfg, std::size_t n, std::uint64_t seed);

/// Reverse integration of given start states at t_start down to t_min with
/// the same step length as a full run of cfg.steps steps. Column i uses
/// Rng(seed, index_offset + i) for its noise.
ReverseResult reverse_from(const ScoreModel& model, const NoiseSchedule& schedule,
                           const ReverseConfig& cfg, const Eigen::MatrixXd& start, double t_start,
                           std::uint64_t seed, FailurePolicy policy = FailurePolicy::raise,
                           std::uint64_t index_offset = 0);

/// Same integration as reverse_sde_sample, recording every intermediate
/// state (and the denoised end state when enabled, stamped with t_min).
std::vector<PathState> reverse_sde_trajectory(const ScoreModel& model, const NoiseSchedule& schedule,
                                              const ReverseConfig& cfg, std::uint64_t seed,
                                              std::uint64_t index = 0);

}  // namespace lgdf::diffusion
