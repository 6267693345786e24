#pragma once

#include <array>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <vector>

#include "lgdf/core/rng.hpp"
#include "lgdf/vgt/algebra.hpp"

namespace lgdf::vgt {

enum class Integrator { euler, rk4 };

const char* to_string(Integrator i);
Integrator integrator_from_string(const std::string& s);

/// Right-hand side of the Restricted Euler equation,
/// dM/dt = -(M^2 - I tr(M^2)/3).
Mat3 re_drift(const Mat3& m);

/// One step of size dt. Throws DomainError when |tr M| exceeds
/// 1e-8 (1 + |M|), ArgumentError for dt <= 0.
Mat3 restricted_euler_step(const Mat3& m, double dt, Integrator integrator);

/// Isotropic Gaussian matrix with its trace removed, rescaled to the given
/// Frobenius norm.
Mat3 random_traceless(Rng& rng, double norm);

struct SingularityEvent {
  double t = 0.0;
  double norm = 0.0;  // |M| when the bound was crossed
};

struct ReRunConfig {
  double dt = 1e-4;
  double t_max = 1.0;
  Integrator integrator = Integrator::rk4;
  double blowup_norm = 1e3;
  std::size_t record_every = 100;  // steps between recorded (t, Q, R); 0 records only the end

  void validate() const;
};

struct ReSample {
  double t, q, r;
};

struct ReTrajectory {
  std::vector<ReSample> samples;  // starts with t = 0
  Mat3 final;
  double t_end = 0.0;
  std::size_t steps = 0;
  std::optional<SingularityEvent> singularity;
  double max_abs_trace = 0.0;
  /// max over steps of |V(t) - V(0)| / (|Q(t)|^3 + 27/4 R(t)^2), V the
  /// Vieillefosse combination
  double max_vieillefosse_drift = 0.0;
};

/// Integrates until t_max or until |M| exceeds blowup_norm, which ends the
/// run with a singularity event.
ReTrajectory restricted_euler_run(const Mat3& m0, const ReRunConfig& cfg);

struct TetradState {
  Mat3 M = Mat3::Zero();
  Mat3 g = Mat3::Identity();
};

struct TetradParams {
  double alpha = 0.5;
  double noise_M = 0.5;
  double noise_g = 0.1;
  double dt = 1e-3;
  double eig_floor = 1e-6;
  bool freeze_g = false;
  double blowup_norm = 1e3;
  double max_floor_fraction = 0.01;

  void validate() const;
};

/// Standard normal 3x3 draws behind dW_M and dW_g.
struct TetradNoise {
  Mat3 z_M = Mat3::Zero();
  Mat3 z_g = Mat3::Zero();
};

TetradNoise draw_tetrad_noise(Rng& rng);

struct TetradStep {
  TetradState state;
  bool floored = false;
};

/// Euler-Maruyama step of
///   dM = -(1-alpha)(M^2 - g^-1 tr(M^2)/tr(g^-1)) dt + dW_M
///   dg = (M^T g + g M) dt + dW_g
/// with dW_M = noise_M sqrt(dt) z_M minus its trace, dW_g = noise_g sqrt(dt)
/// (z_g + z_g^T)/2, and g's eigenvalues floored at eig_floor afterwards.
/// g is left untouched when freeze_g is set. Throws DomainError when the
/// state is not traceless/symmetric positive definite.
TetradStep tetrad_step(const TetradState& state, const TetradParams& params, const TetradNoise& noise);

struct TetradRun {
  TetradState final;
  std::size_t steps = 0;
  std::size_t floor_events = 0;
  std::optional<SingularityEvent> singularity;
  bool stability_warning = false;  // floor_events / steps > max_floor_fraction
  std::vector<std::array<double, 2>> qr;  // (Q, R) every sample_every steps, then the end state
};

TetradRun tetrad_run(const TetradState& s0, const TetradParams& params, std::size_t n_steps, Rng& rng,
                     std::size_t sample_every = 0);

struct QrHistogram {
  double q_lo = 0, q_hi = 0, r_lo = 0, r_hi = 0;
  std::size_t n_q = 0, n_r = 0;
  std::vector<double> density;  // index iq * n_r + ir
  std::size_t n_total = 0;
  std::size_t n_outside = 0;

  double dq() const { return (q_hi - q_lo) / static_cast<double>(n_q); }
  double dr() const { return (r_hi - r_lo) / static_cast<double>(n_r); }
  /// sum of density * dq * dr; 1 unless points fell outside a fixed range
  double integral() const;
};

/// Joint density of (Q, R). Without ranges the bins span the data; a
/// degenerate span is widened to +-0.5 around the value.
QrHistogram qr_histogram(const std::vector<std::array<double, 2>>& qr, std::size_t n_bins,
                         std::optional<std::array<double, 2>> q_range = std::nullopt,
                         std::optional<std::array<double, 2>> r_range = std::nullopt);

/// Columns q_bin, r_bin (bin centres), density.
void write_qr_histogram_csv(const std::filesystem::path& path, const QrHistogram& h);

struct TetradEnsembleConfig {
  TetradParams params;
  std::size_t n_samples = 1000;
  std::size_t n_steps = 1000;
  std::size_t sample_every = 0;
  TetradState initial;
  std::size_t n_bins = 50;
  std::optional<std::array<double, 2>> q_range, r_range;

  void validate() const;
};

struct TetradEnsembleResult {
  QrHistogram histogram;  // over trajectories that did not blow up
  Mat3 mean_M = Mat3::Zero();
  double mean_q = 0, mean_r = 0, var_q = 0, var_r = 0;
  Eigen::Vector3d mean_g_eigs = Eigen::Vector3d::Zero();  // ascending
  Eigen::Vector3d min_g_eigs = Eigen::Vector3d::Zero();
  std::size_t n_completed = 0;
  std::size_t n_blowup = 0;
  std::size_t n_floor_events = 0;
  std::size_t n_unstable = 0;  // trajectories with a stability warning
  double max_M_change = 0.0;   // max |M_final - M_0| entry over completed trajectories
};

/// Trajectory i draws from Rng(seed, i); results are merged in index order.
TetradEnsembleResult tetrad_ensemble(const TetradEnsembleConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const TetradEnsembleResult& r);

struct ReEnsembleConfig {
  ReRunConfig run;
  std::size_t n_samples = 100;
  double initial_norm = 1.0;
  std::optional<Mat3> initial;  // same start for every trajectory when set
  std::size_t n_bins = 50;

  void validate() const;
};

struct ReEnsembleResult {
  QrHistogram histogram;  // recorded samples before any blow-up
  std::vector<std::pair<std::size_t, SingularityEvent>> singularities;
  double max_abs_trace = 0.0;
  double max_vieillefosse_drift = 0.0;
};

ReEnsembleResult re_ensemble(const ReEnsembleConfig& cfg, std::uint64_t seed);

nlohmann::json to_json(const ReEnsembleResult& r);

}  // namespace lgdf::vgt
