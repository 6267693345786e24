#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <json.hpp>
#include <numbers>
#include <optional>
#include <vector>

#include "lgdf/core/rng.hpp"

namespace lgdf::scalar {

using Vec2 = Eigen::Vector2d;

/// Random-Fourier streamfunction on a periodic square of side box_L:
///
///   psi(r, t) = sum_m A_m (a_m(t) cos(k_m.r) + b_m(t) sin(k_m.r))
///
/// over integer wavevectors n in a half-plane with 1 <= |n| <= n_max,
/// k = 2 pi n / box_L. a_m, b_m are independent unit-variance OU processes
/// with the given correlation time (constant when frozen), so the field is
/// stationary and statistically time-reversible. Mode velocity amplitudes
/// |k| A_m scale as |k|^(-xi/2) and are normalised to E|v|^2 = u_rms^2.
struct FlowSpec {
  double box_L = 2.0 * std::numbers::pi;
  int n_max = 4;
  double xi = 4.0;
  double u_rms = 1.0;
  double correlation_time = 1.0;
  bool frozen = false;
  Vec2 mean_velocity = Vec2::Zero();

  void validate() const;
};

struct FlowMode {
  Vec2 k;
  double amplitude;
  double a, b;
};

class SyntheticFlow {
 public:
  /// Initial coefficients drawn from the stationary law.
  SyntheticFlow(const FlowSpec& spec, Rng& rng);
  SyntheticFlow(const FlowSpec& spec, std::uint64_t seed);
  SyntheticFlow(std::vector<FlowMode> modes, double box_L, double correlation_time, bool frozen,
                Vec2 mean_velocity = Vec2::Zero());

  double streamfunction(const Vec2& r) const;
  /// v = (d psi/dy, -d psi/dx) + mean_velocity
  Vec2 velocity(const Vec2& r) const;
  /// Exact OU transition of the mode coefficients over dt.
  void advance(double dt, Rng& rng);

  double time() const { return t_; }
  double box_L() const { return box_L_; }
  const std::vector<FlowMode>& modes() const { return modes_; }

 private:
  SyntheticFlow() = default;

  std::vector<FlowMode> modes_;
  double box_L_ = 2.0 * std::numbers::pi;
  double tau_ = 1.0;
  bool frozen_ = false;
  Vec2 mean_ = Vec2::Zero();
  double t_ = 0.0;
};

struct PairState {
  Vec2 rho1 = Vec2::Zero();
  Vec2 rho2 = Vec2::Zero();
  double t = 0.0;

  double separation() const { return (rho1 - rho2).norm(); }
};

struct PairNoise {
  Vec2 z1 = Vec2::Zero();
  Vec2 z2 = Vec2::Zero();
};

PairNoise draw_pair_noise(Rng& rng);

/// rho_i += v(rho_i) dt + sqrt(2 kappa dt) z_i with the flow at its current
/// time. Throws ArgumentError for dt <= 0 or kappa < 0.
PairState advance_pair(const PairState& pair, const SyntheticFlow& flow, double kappa, double dt, const PairNoise& noise);

enum class HitDirection { grow_to, shrink_to };

struct HitConfig {
  double target = 1.0;
  double kappa = 0.0;
  double dt = 1e-3;
  double max_t = 1.0;
  HitDirection direction = HitDirection::grow_to;

  void validate() const;
};

/// First time the separation reaches the target (>= when growing, <= when
/// shrinking); nullopt on timeout. The flow is advanced alongside the pair.
std::optional<double> hitting_time(PairState pair, SyntheticFlow flow, const HitConfig& cfg, Rng& rng);

/// Pair placed with a uniform midpoint in the box and uniform orientation.
/// Returns 0 when r0 is already at or past the target.
std::optional<double> hitting_time(double r0, SyntheticFlow flow, const HitConfig& cfg, Rng& rng);
std::optional<double> hitting_time(double r0, const SyntheticFlow& flow, const HitConfig& cfg, std::uint64_t seed);

struct ChiSpec {
  double corr_scale_L = 1.0;
  double chi0 = 1.0;

  void validate() const;
};

struct PairCorrelationConfig {
  FlowSpec flow;
  double kappa = 0.01;
  ChiSpec chi;
  std::size_t ensemble_n = 1000;
  double dt = 1e-3;
  double max_t = 0.0;  // <= 0 selects default_max_t

  void validate() const;
  /// 100 L^2 / (4 kappa dims) with diffusion, otherwise 1000 eddy times box_L / u_rms.
  double default_max_t() const;
};

struct PairCorrelationResult {
  double r_sep = 0.0;
  double estimate = 0.0;  // chi0 * mean hitting time over pairs that arrived
  double std_error = 0.0;
  double mean_time = 0.0;
  double max_t = 0.0;
  std::size_t n = 0;
  std::size_t n_timeout = 0;
  bool unreliable = false;  // more than half the pairs timed out
  std::vector<std::optional<double>> hitting_times;  // pair order
};

/// Order-of-magnitude estimator chi(0) E[T(r_sep -> L)] of the scalar pair
/// correlation. Pair i uses its own flow realisation and noise from
/// Rng(seed, i). Throws ArgumentError unless 0 <= r_sep <= L.
PairCorrelationResult pair_correlation_estimate(const PairCorrelationConfig& cfg, double r_sep, std::uint64_t seed);

nlohmann::json to_json(const PairCorrelationResult& r);

/// Columns pair, time, timeout.
void write_hitting_times_csv(const std::filesystem::path& path, const PairCorrelationResult& r);

}  // namespace lgdf::scalar
