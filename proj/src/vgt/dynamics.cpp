#include "lgdf/vgt/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"

namespace lgdf::vgt {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json mat_json(const Mat3& m) {
  auto j = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) j.push_back({num(m(i, 0)), num(m(i, 1)), num(m(i, 2))});
  return j;
}

void check_traceless(const Mat3& m, const char* who) {
  if (!m.allFinite()) throw NumericalError(std::string(who) + ": non-finite M");
  if (std::abs(m.trace()) > 1e-8 * (1.0 + m.norm()))
    throw DomainError(std::string(who) + ": M is not traceless (tr M = " + std::to_string(m.trace()) + ")");
}

std::size_t step_count(double t_max, double dt) {
  return static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
}

nlohmann::json hist_json(const QrHistogram& h) {
  return {{"q_range", {h.q_lo, h.q_hi}}, {"r_range", {h.r_lo, h.r_hi}}, {"bins", {h.n_q, h.n_r}},
          {"n_total", h.n_total},        {"n_outside", h.n_outside},    {"integral", num(h.integral())}};
}

}  // namespace

const char* to_string(Integrator i) { return i == Integrator::euler ? "euler" : "rk4"; }

Integrator integrator_from_string(const std::string& s) {
  if (s == "euler") return Integrator::euler;
  if (s == "rk4") return Integrator::rk4;
  throw ConfigError("unknown integrator '" + s + "' (expected euler or rk4)");
}

Mat3 re_drift(const Mat3& m) {
  const Mat3 m2 = m * m;
  return -(m2 - Mat3::Identity() * (m2.trace() / 3.0));
}

Mat3 restricted_euler_step(const Mat3& m, double dt, Integrator integrator) {
  if (!(dt > 0.0)) throw ArgumentError("restricted_euler_step: dt must be positive");
  check_traceless(m, "restricted_euler_step");
  if (integrator == Integrator::euler) return m + dt * re_drift(m);
  const Mat3 k1 = re_drift(m);
  const Mat3 k2 = re_drift(m + 0.5 * dt * k1);
  const Mat3 k3 = re_drift(m + 0.5 * dt * k2);
  const Mat3 k4 = re_drift(m + dt * k3);
  return m + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Mat3 random_traceless(Rng& rng, double norm) {
  Mat3 z;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) z(i, j) = rng.normal();
  z -= Mat3::Identity() * (z.trace() / 3.0);
  return z * (norm / z.norm());
}

void ReRunConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("re.dt must be positive");
  if (!(t_max >= 0.0)) throw ConfigError("re.t_max must be non-negative");
  if (!(blowup_norm > 0.0)) throw ConfigError("re.blowup_norm must be positive");
}

ReTrajectory restricted_euler_run(const Mat3& m0, const ReRunConfig& cfg) {
  cfg.validate();
  check_traceless(m0, "restricted_euler_run");
  ReTrajectory out;
  Mat3 m = m0;
  const double v0 = vieillefosse(m0);
  out.samples.push_back({0.0, q_invariant(m), r_invariant(m)});
  out.max_abs_trace = std::abs(m.trace());

  const std::size_t n = step_count(cfg.t_max, cfg.dt);
  for (std::size_t k = 1; k <= n; ++k) {
    m = restricted_euler_step(m, cfg.dt, cfg.integrator);
    const double t = static_cast<double>(k) * cfg.dt;
    out.steps = k;
    out.t_end = t;
    const double norm = m.norm();
    if (!(norm <= cfg.blowup_norm)) {
      out.singularity = SingularityEvent{t, norm};
      break;
    }
    const double q = q_invariant(m), r = r_invariant(m);
    const double scale = std::abs(q * q * q) + 6.75 * r * r;
    const double diff = std::abs(q * q * q + 6.75 * r * r - v0);
    const double drift = scale > 0.0 ? diff / scale : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    out.max_vieillefosse_drift = std::max(out.max_vieillefosse_drift, drift);
    out.max_abs_trace = std::max(out.max_abs_trace, std::abs(m.trace()));
    if ((cfg.record_every > 0 && k % cfg.record_every == 0) || k == n) out.samples.push_back({t, q, r});
  }
  out.final = m;
  return out;
}

void TetradParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("tetrad.alpha must lie in [0, 1]");
  if (!(noise_M >= 0.0)) throw ConfigError("tetrad.noise_M must be non-negative");
  if (!(noise_g >= 0.0)) throw ConfigError("tetrad.noise_g must be non-negative");
  if (!(dt > 0.0)) throw ConfigError("tetrad.dt must be positive");
  if (!(eig_floor > 0.0)) throw ConfigError("tetrad.eig_floor must be positive");
  if (!(blowup_norm > 0.0)) throw ConfigError("tetrad.blowup_norm must be positive");
  if (!(max_floor_fraction >= 0.0 && max_floor_fraction <= 1.0))
    throw ConfigError("tetrad.max_floor_fraction must lie in [0, 1]");
}

TetradNoise draw_tetrad_noise(Rng& rng) {
  TetradNoise z;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) z.z_M(i, j) = rng.normal();
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) z.z_g(i, j) = rng.normal();
  return z;
}

TetradStep tetrad_step(const TetradState& state, const TetradParams& params, const TetradNoise& noise) {
  check_traceless(state.M, "tetrad_step");
  const Mat3& g = state.g;
  if (!g.allFinite() || (g - g.transpose()).norm() > 1e-12 * g.norm())
    throw DomainError("tetrad_step: g must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat3> eig0(g, Eigen::EigenvaluesOnly);
  if (!(eig0.eigenvalues()[0] > 0.0)) throw DomainError("tetrad_step: g must be positive definite");

  const double dt = params.dt;
  const double sq = std::sqrt(dt);
  const Mat3& M = state.M;
  const Mat3 ginv = g.inverse();
  const Mat3 m2 = M * M;

  Mat3 dW_M = params.noise_M * sq * noise.z_M;
  dW_M -= Mat3::Identity() * (dW_M.trace() / 3.0);

  TetradStep out;
  out.state.M = M - dt * ((1.0 - params.alpha) * (m2 - ginv * (m2.trace() / ginv.trace()))) + dW_M;

  if (params.freeze_g) {
    out.state.g = g;
    return out;
  }
  const Mat3 dW_g = params.noise_g * sq * 0.5 * (noise.z_g + noise.z_g.transpose());
  Mat3 gn = g + dt * (M.transpose() * g + g * M) + dW_g;
  gn = 0.5 * (gn + gn.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat3> eig(gn);
  if (eig.info() != Eigen::Success || !gn.allFinite()) throw NumericalError("tetrad_step: g became non-finite");
  if (eig.eigenvalues()[0] < params.eig_floor) {
    // margin absorbs the roundoff of rebuilding g from its eigenpairs
    const double margin = 64.0 * std::numeric_limits<double>::epsilon() * eig.eigenvalues().cwiseAbs().maxCoeff();
    const Eigen::Vector3d e = eig.eigenvalues().cwiseMax(params.eig_floor + margin);
    gn = eig.eigenvectors() * e.asDiagonal() * eig.eigenvectors().transpose();
    gn = 0.5 * (gn + gn.transpose()).eval();
    out.floored = true;
  }
  out.state.g = gn;
  return out;
}

TetradRun tetrad_run(const TetradState& s0, const TetradParams& params, std::size_t n_steps, Rng& rng,
                     std::size_t sample_every) {
  params.validate();
  TetradRun run;
  TetradState s = s0;
  for (std::size_t k = 1; k <= n_steps; ++k) {
    const TetradStep st = tetrad_step(s, params, draw_tetrad_noise(rng));
    s = st.state;
    run.steps = k;
    run.floor_events += st.floored ? 1 : 0;
    const double norm = s.M.norm();
    if (!(norm <= params.blowup_norm)) {
      run.singularity = SingularityEvent{static_cast<double>(k) * params.dt, norm};
      break;
    }
    if (sample_every > 0 && k % sample_every == 0 && k != n_steps)
      run.qr.push_back({q_invariant(s.M), r_invariant(s.M)});
  }
  if (!run.singularity) run.qr.push_back({q_invariant(s.M), r_invariant(s.M)});
  run.final = s;
  run.stability_warning =
      run.steps > 0 && static_cast<double>(run.floor_events) > params.max_floor_fraction * static_cast<double>(run.steps);
  return run;
}

double QrHistogram::integral() const {
  double sum = 0.0;
  for (double d : density) sum += d;
  return sum * dq() * dr();
}

QrHistogram qr_histogram(const std::vector<std::array<double, 2>>& qr, std::size_t n_bins,
                         std::optional<std::array<double, 2>> q_range, std::optional<std::array<double, 2>> r_range) {
  if (n_bins == 0) throw ArgumentError("qr_histogram: n_bins must be positive");
  auto span_of = [&](int c, const std::optional<std::array<double, 2>>& fixed) -> std::array<double, 2> {
    if (fixed) {
      if (!((*fixed)[1] > (*fixed)[0])) throw ArgumentError("qr_histogram: empty range");
      return *fixed;
    }
    if (qr.empty()) return {-0.5, 0.5};
    double lo = qr[0][c], hi = qr[0][c];
    for (const auto& p : qr) {
      lo = std::min(lo, p[c]);
      hi = std::max(hi, p[c]);
    }
    if (!(hi > lo)) return {lo - 0.5, lo + 0.5};
    return {lo, hi};
  };
  const auto qs = span_of(0, q_range), rs = span_of(1, r_range);
  QrHistogram h{qs[0], qs[1], rs[0], rs[1], n_bins, n_bins, std::vector<double>(n_bins * n_bins, 0.0), qr.size(), 0};
  if (qr.empty()) return h;

  auto bin = [&](double v, double lo, double hi) -> std::optional<std::size_t> {
    if (!(v >= lo && v <= hi)) return std::nullopt;
    const auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n_bins));
    return std::min(b, n_bins - 1);
  };
  for (const auto& p : qr) {
    const auto iq = bin(p[0], h.q_lo, h.q_hi), ir = bin(p[1], h.r_lo, h.r_hi);
    if (!iq || !ir) {
      ++h.n_outside;
      continue;
    }
    h.density[*iq * n_bins + *ir] += 1.0;
  }
  const double w = 1.0 / (static_cast<double>(qr.size()) * h.dq() * h.dr());
  for (double& d : h.density) d *= w;
  return h;
}

void write_qr_histogram_csv(const std::filesystem::path& path, const QrHistogram& h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "q_bin,r_bin,density\n" << std::setprecision(17);
  for (std::size_t iq = 0; iq < h.n_q; ++iq)
    for (std::size_t ir = 0; ir < h.n_r; ++ir)
      out << h.q_lo + (static_cast<double>(iq) + 0.5) * h.dq() << ',' << h.r_lo + (static_cast<double>(ir) + 0.5) * h.dr()
          << ',' << h.density[iq * h.n_r + ir] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

void TetradEnsembleConfig::validate() const {
  params.validate();
  if (n_samples < 1) throw ConfigError("tetrad.n_samples must be at least 1");
  if (n_bins < 1) throw ConfigError("tetrad.n_bins must be at least 1");
  check_traceless(initial.M, "tetrad initial state");
  Eigen::SelfAdjointEigenSolver<Mat3> eig(initial.g, Eigen::EigenvaluesOnly);
  if ((initial.g - initial.g.transpose()).norm() > 0.0 || !(eig.eigenvalues()[0] > 0.0))
    throw ConfigError("tetrad initial g must be symmetric positive definite");
}

TetradEnsembleResult tetrad_ensemble(const TetradEnsembleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<TetradRun> runs(cfg.n_samples);
  parallel_chunks(cfg.n_samples, 8, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(seed, i);
      runs[i] = tetrad_run(cfg.initial, cfg.params, cfg.n_steps, rng, cfg.sample_every);
    }
  });

  TetradEnsembleResult r;
  std::vector<std::array<double, 2>> points;
  std::vector<double> qs, rs;
  r.min_g_eigs.setConstant(std::numeric_limits<double>::infinity());
  for (const auto& run : runs) {
    r.n_floor_events += run.floor_events;
    r.n_unstable += run.stability_warning ? 1 : 0;
    if (run.singularity) {
      ++r.n_blowup;
      continue;
    }
    ++r.n_completed;
    points.insert(points.end(), run.qr.begin(), run.qr.end());
    r.mean_M += run.final.M;
    r.max_M_change = std::max(r.max_M_change, (run.final.M - cfg.initial.M).cwiseAbs().maxCoeff());
    qs.push_back(q_invariant(run.final.M));
    rs.push_back(r_invariant(run.final.M));
    const Eigen::Vector3d e = Eigen::SelfAdjointEigenSolver<Mat3>(run.final.g, Eigen::EigenvaluesOnly).eigenvalues();
    r.mean_g_eigs += e;
    r.min_g_eigs = r.min_g_eigs.cwiseMin(e);
  }
  r.histogram = qr_histogram(points, cfg.n_bins, cfg.q_range, cfg.r_range);

  const auto n = static_cast<double>(r.n_completed);
  if (r.n_completed == 0) {
    r.mean_M.setConstant(nan);
    r.mean_q = r.mean_r = r.var_q = r.var_r = nan;
    r.mean_g_eigs.setConstant(nan);
    r.min_g_eigs.setConstant(nan);
  } else {
    r.mean_M /= n;
    r.mean_g_eigs /= n;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      r.mean_q += qs[i] / n;
      r.mean_r += rs[i] / n;
    }
    if (r.n_completed > 1) {
      for (std::size_t i = 0; i < qs.size(); ++i) {
        r.var_q += (qs[i] - r.mean_q) * (qs[i] - r.mean_q) / (n - 1);
        r.var_r += (rs[i] - r.mean_r) * (rs[i] - r.mean_r) / (n - 1);
      }
    }
  }
  if (r.n_unstable > 0)
    std::cerr << "warning: tetrad g eigenvalue floor hit in more than " << cfg.params.max_floor_fraction * 100
              << "% of steps on " << r.n_unstable << " of " << cfg.n_samples << " trajectories\n";
  if (r.n_blowup > 0)
    std::cerr << "warning: " << r.n_blowup << " of " << cfg.n_samples << " tetrad trajectories exceeded |M| > "
              << cfg.params.blowup_norm << '\n';
  return r;
}

nlohmann::json to_json(const TetradEnsembleResult& r) {
  return {{"mean_M", mat_json(r.mean_M)},
          {"mean_Q", num(r.mean_q)},
          {"mean_R", num(r.mean_r)},
          {"var_Q", num(r.var_q)},
          {"var_R", num(r.var_r)},
          {"mean_g_eigenvalues", {num(r.mean_g_eigs[0]), num(r.mean_g_eigs[1]), num(r.mean_g_eigs[2])}},
          {"min_g_eigenvalues", {num(r.min_g_eigs[0]), num(r.min_g_eigs[1]), num(r.min_g_eigs[2])}},
          {"n_completed", r.n_completed},
          {"n_blowup", r.n_blowup},
          {"n_floor_events", r.n_floor_events},
          {"n_unstable", r.n_unstable},
          {"max_M_change", num(r.max_M_change)},
          {"histogram", hist_json(r.histogram)}};
}

void ReEnsembleConfig::validate() const {
  run.validate();
  if (n_samples < 1) throw ConfigError("re.n_samples must be at least 1");
  if (n_bins < 1) throw ConfigError("re.n_bins must be at least 1");
  if (!(initial_norm > 0.0)) throw ConfigError("re.initial_norm must be positive");
  if (initial) check_traceless(*initial, "re initial M");
}

ReEnsembleResult re_ensemble(const ReEnsembleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<ReTrajectory> runs(cfg.n_samples);
  parallel_chunks(cfg.n_samples, 4, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(seed, i);
      const Mat3 m0 = cfg.initial ? *cfg.initial : random_traceless(rng, cfg.initial_norm);
      runs[i] = restricted_euler_run(m0, cfg.run);
    }
  });
  ReEnsembleResult r;
  std::vector<std::array<double, 2>> points;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    for (const auto& s : runs[i].samples) points.push_back({s.q, s.r});
    if (runs[i].singularity) r.singularities.emplace_back(i, *runs[i].singularity);
    r.max_abs_trace = std::max(r.max_abs_trace, runs[i].max_abs_trace);
    r.max_vieillefosse_drift = std::max(r.max_vieillefosse_drift, runs[i].max_vieillefosse_drift);
  }
  r.histogram = qr_histogram(points, cfg.n_bins);
  return r;
}

nlohmann::json to_json(const ReEnsembleResult& r) {
  auto events = nlohmann::json::array();
  for (const auto& [i, ev] : r.singularities) events.push_back({{"trajectory", i}, {"t", ev.t}, {"norm", ev.norm}});
  return {{"singularities", events},
          {"n_singular", r.singularities.size()},
          {"max_abs_trace", num(r.max_abs_trace)},
          {"max_vieillefosse_drift", num(r.max_vieillefosse_drift)},
          {"histogram", hist_json(r.histogram)}};
}

}  // namespace lgdf::vgt
