#include "lgdf/diffusion/schedule.hpp"

#include <cmath>
#include <sstream>

#include "lgdf/core/error.hpp"

namespace lgdf::diffusion {

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double beta_min, double beta_max, double horizon)
    : kind_(kind), beta_min_(beta_min), beta_max_(beta_max), horizon_(horizon) {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ArgumentError("noise schedule: horizon must be positive");
  if (!(beta_min > 0.0) || !(beta_max > 0.0) || !std::isfinite(beta_min) || !std::isfinite(beta_max))
    throw ArgumentError("noise schedule: beta must be positive and finite");
}

NoiseSchedule NoiseSchedule::constant(double beta, double horizon) {
  return {ScheduleKind::constant, beta, beta, horizon};
}

NoiseSchedule NoiseSchedule::linear(double beta_min, double beta_max, double horizon) {
  return {ScheduleKind::linear, beta_min, beta_max, horizon};
}

void NoiseSchedule::check_time(double t) const {
  // Accumulated step sums may overshoot T by a few ulps.
  const double slack = 1e-12 * horizon_;
  if (!(t >= 0.0 && t <= horizon_ + slack)) {
    std::ostringstream msg;
    msg << "noise schedule: t=" << t << " outside [0, " << horizon_ << "]";
    throw DomainError(msg.str());
  }
}

double NoiseSchedule::beta(double t) const {
  check_time(t);
  if (kind_ == ScheduleKind::constant) return beta_min_;
  return beta_min_ + (beta_max_ - beta_min_) * t / horizon_;
}

double NoiseSchedule::integral(double t) const {
  check_time(t);
  if (kind_ == ScheduleKind::constant) return beta_min_ * t;
  return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t / horizon_;
}

double NoiseSchedule::mean_factor(double t) const { return std::exp(-0.5 * integral(t)); }

double NoiseSchedule::noise_variance(double t) const { return -std::expm1(-integral(t)); }

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::constant ? "constant" : "linear";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "linear") return ScheduleKind::linear;
  throw ConfigError("unknown schedule kind '" + s + "' (expected constant|linear)");
}

}  // namespace lgdf::diffusion
