#include "lgdf/diffusion/sde.hpp"

#include <cmath>
#include <sstream>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"

namespace lgdf::diffusion {

PathState forward_ou_step(const PathState& state, const NoiseSchedule& schedule, double dt,
                          const Eigen::VectorXd& noise) {
  if (!(dt > 0.0)) throw ArgumentError("forward_ou_step: dt must be positive");
  if (noise.size() != state.x.size()) throw ArgumentError("forward_ou_step: noise dimension mismatch");
  const double t_next = state.t + dt;
  schedule.beta(t_next);  // domain check on the end point
  const double beta = schedule.beta(state.t);
  PathState next{t_next, state.x - 0.5 * beta * dt * state.x + std::sqrt(beta * dt) * noise};
  if (!next.x.allFinite()) {
    std::ostringstream msg;
    msg << "forward_ou_step: non-finite state at t=" << state.t << " dt=" << dt;
    throw NumericalError(msg.str());
  }
  return next;
}

Eigen::VectorXd ou_transition(const Eigen::VectorXd& x, const NoiseSchedule& schedule, double t_from,
                              double t_to, const Eigen::VectorXd& noise) {
  if (t_to < t_from) throw ArgumentError("ou_transition: t_to < t_from");
  const double db = schedule.integral(t_to) - schedule.integral(t_from);
  return std::exp(-0.5 * db) * x + std::sqrt(-std::expm1(-db)) * noise;
}

void ReverseConfig::validate(const NoiseSchedule& schedule) const {
  if (steps < 1) throw ArgumentError("reverse sampler: steps must be >= 1");
  if (!(t_min > 0.0) || !(t_min < schedule.horizon()))
    throw ArgumentError("reverse sampler: t_min must lie in (0, T)");
  if (chunk < 1) throw ArgumentError("reverse sampler: chunk must be >= 1");
}

namespace {

struct Plan {
  double t_start;
  double t_end;
  int n_steps;
  double h;
};

Plan make_plan(const NoiseSchedule& schedule, const ReverseConfig& cfg, double t_start) {
  const double full_h = (schedule.horizon() - cfg.t_min) / cfg.steps;
  Plan p{t_start, std::min(cfg.t_min, t_start), 0, 0.0};
  const double span = t_start - p.t_end;
  p.n_steps = static_cast<int>(std::lround(span / full_h));
  if (p.n_steps == 0 && span > 0.5 * full_h) p.n_steps = 1;
  p.h = p.n_steps > 0 ? span / p.n_steps : 0.0;
  return p;
}

std::string failure_message(std::size_t column, int step, double t) {
  std::ostringstream msg;
  msg << "reverse SDE: non-finite state in sample " << column << " at step " << step << " (t=" << t << ")";
  return msg.str();
}

/// Integrates the columns of x in place. rngs[j] drives column j.
/// recorder, when given, receives (t, x) after every step.
template <class Recorder>
void integrate(const ScoreModel& model, const NoiseSchedule& schedule, const ReverseConfig& cfg,
               const Plan& plan, Eigen::Ref<Eigen::MatrixXd> x, std::vector<Rng>& rngs,
               std::vector<std::string>& failures, std::size_t first_column, Recorder&& recorder) {
  const Eigen::Index n = x.cols();
  const Eigen::Index d = x.rows();
  std::vector<bool> dead(static_cast<std::size_t>(n), false);
  Eigen::MatrixXd psi(d, n);

  auto check = [&](int step, double t) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (dead[static_cast<std::size_t>(j)]) continue;
      if (!x.col(j).allFinite()) {
        dead[static_cast<std::size_t>(j)] = true;
        failures[static_cast<std::size_t>(j)] = failure_message(first_column + static_cast<std::size_t>(j), step, t);
        x.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
      }
    }
  };

  for (int k = 0; k < plan.n_steps; ++k) {
    const double t = plan.t_start - k * plan.h;
    const double beta = schedule.beta(t);
    model.score(t, x, psi);
    const double noise_sd = std::sqrt(beta * plan.h);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (dead[static_cast<std::size_t>(j)]) continue;
      Rng& rng = rngs[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < d; ++i) {
        x(i, j) += beta * (0.5 * x(i, j) - psi(i, j)) * plan.h + noise_sd * rng.normal();
      }
    }
    const double t_next = k + 1 == plan.n_steps ? plan.t_end : plan.t_start - (k + 1) * plan.h;
    check(k, t_next);
    recorder(t_next, x);
  }

  if (cfg.final_denoise) {
    const double var = schedule.noise_variance(plan.t_end);
    const double shrink = schedule.mean_factor(plan.t_end);
    model.score(plan.t_end, x, psi);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (dead[static_cast<std::size_t>(j)]) continue;
      x.col(j) = (x.col(j) - var * psi.col(j)) / shrink;
    }
    check(plan.n_steps, plan.t_end);
    recorder(plan.t_end, x);
  }
}

struct NoRecorder {
  void operator()(double, const Eigen::Ref<Eigen::MatrixXd>&) const {}
};

}  // namespace

ReverseResult reverse_from(const ScoreModel& model, const NoiseSchedule& schedule, const ReverseConfig& cfg,
                           const Eigen::MatrixXd& start, double t_start, std::uint64_t seed,
                           FailurePolicy policy, std::uint64_t index_offset) {
  cfg.validate(schedule);
  if (start.rows() != model.dim()) throw ArgumentError("reverse sampler: start dimension mismatch");
  if (!(t_start > 0.0)) throw ArgumentError("reverse sampler: t_start must be positive");
  schedule.beta(t_start);
  const Plan plan = make_plan(schedule, cfg, t_start);

  ReverseResult res;
  res.samples = start;
  res.failures.assign(static_cast<std::size_t>(start.cols()), {});
  const auto n = static_cast<std::size_t>(start.cols());
  parallel_chunks(n, static_cast<std::size_t>(cfg.chunk), [&](std::size_t b, std::size_t e) {
    std::vector<Rng> rngs;
    rngs.reserve(e - b);
    for (std::size_t j = b; j < e; ++j) rngs.emplace_back(seed, index_offset + j);
    std::vector<std::string> failures(e - b);
    auto block = res.samples.middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b));
    integrate(model, schedule, cfg, plan, block, rngs, failures, b, NoRecorder{});
    for (std::size_t j = b; j < e; ++j) res.failures[j] = std::move(failures[j - b]);
  });
  for (const auto& f : res.failures) {
    if (f.empty()) continue;
    if (policy == FailurePolicy::raise) throw NumericalError(f);
    ++res.failed;
  }
  return res;
}

Eigen::MatrixXd reverse_sde_ensemble(const ScoreModel& model, const NoiseSchedule& schedule,
                                     const ReverseConfig& cfg, std::size_t n, std::uint64_t seed) {
  cfg.validate(schedule);
  const int d = model.dim();
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(n));
  const Plan plan = make_plan(schedule, cfg, schedule.horizon());
  std::vector<std::string> failures(n);
  parallel_chunks(n, static_cast<std::size_t>(cfg.chunk), [&](std::size_t b, std::size_t e) {
    std::vector<Rng> rngs;
    rngs.reserve(e - b);
    for (std::size_t j = b; j < e; ++j) {
      rngs.emplace_back(seed, j);
      for (int i = 0; i < d; ++i) x(i, static_cast<Eigen::Index>(j)) = rngs.back().normal();
    }
    std::vector<std::string> local(e - b);
    auto block = x.middleCols(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b));
    integrate(model, schedule, cfg, plan, block, rngs, local, b, NoRecorder{});
    for (std::size_t j = b; j < e; ++j) failures[j] = std::move(local[j - b]);
  });
  for (const auto& f : failures)
    if (!f.empty()) throw NumericalError(f);
  return x;
}

Eigen::VectorXd reverse_sde_sample(const ScoreModel& model, const NoiseSchedule& schedule,
                                   const ReverseConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  const auto traj = reverse_sde_trajectory(model, schedule, cfg, seed, index);
  return traj.back().x;
}

std::vector<PathState> reverse_sde_trajectory(const ScoreModel& model, const NoiseSchedule& schedule,
                                              const ReverseConfig& cfg, std::uint64_t seed,
                                              std::uint64_t index) {
  cfg.validate(schedule);
  const int d = model.dim();
  std::vector<Rng> rngs{Rng(seed, index)};
  Eigen::MatrixXd x(d, 1);
  for (int i = 0; i < d; ++i) x(i, 0) = rngs[0].normal();

  std::vector<PathState> traj;
  traj.push_back({schedule.horizon(), x.col(0)});
  const Plan plan = make_plan(schedule, cfg, schedule.horizon());
  std::vector<std::string> failures(1);
  integrate(model, schedule, cfg, plan, x, rngs, failures, index,
            [&](double t, const Eigen::Ref<Eigen::MatrixXd>& state) { traj.push_back({t, state.col(0)}); });
  if (!failures[0].empty()) throw NumericalError(failures[0]);
  return traj;
}

}  // namespace lgdf::diffusion
