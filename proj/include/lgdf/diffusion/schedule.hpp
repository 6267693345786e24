#pragma once

#include <string>

namespace lgdf::diffusion {

enum class ScheduleKind { constant, linear };

/// Noise rate beta(t) of the forward Ornstein-Uhlenbeck process on [0, T]
/// together with its integral B(t).
class NoiseSchedule {
 public:
  static NoiseSchedule constant(double beta, double horizon);
  static NoiseSchedule linear(double beta_min, double beta_max, double horizon);
  /// Linear 0.1 -> 20 over T = 1.
  static NoiseSchedule standard() { return linear(0.1, 20.0, 1.0); }

  ScheduleKind kind() const { return kind_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }
  double horizon() const { return horizon_; }

  /// Throws DomainError for t outside [0, T].
  double beta(double t) const;
  /// B(t) = integral of beta over [0, t], closed form.
  double integral(double t) const;

  /// exp(-B(t)/2): shrink factor applied to the initial state.
  double mean_factor(double t) const;
  /// 1 - exp(-B(t)): variance injected by the noise up to t.
  double noise_variance(double t) const;

 private:
  NoiseSchedule(ScheduleKind kind, double beta_min, double beta_max, double horizon);
  void check_time(double t) const;

  ScheduleKind kind_;
  double beta_min_;
  double beta_max_;
  double horizon_;
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

}  // namespace lgdf::diffusion
