#include "lgdf/diag/uturn.hpp"

#include <cmath>
#include <limits>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"
#include "lgdf/diag/metrics.hpp"

namespace lgdf::diag {
namespace {

using diffusion::MixtureMarginal;

// Stream families derived from the caller's seed.
constexpr std::uint64_t kOriginStream = 1;
constexpr std::uint64_t kReverseStream = 2;

void check_positive_time(const MixtureMarginal& m, double t, const char* what) {
  if (!(t > 0.0) || t > m.schedule().horizon())
    throw DomainError(std::string(what) + ": t=" + std::to_string(t) + " outside (0, T]");
}

nlohmann::json nullable(const std::vector<double>& v) {
  auto j = nlohmann::json::array();
  for (double x : v) j.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return j;
}

}  // namespace

std::vector<double> forward_autocorrelation(const MixtureMarginal& marginal, const std::vector<double>& t_grid,
                                            std::size_t n_paths, std::uint64_t seed) {
  if (n_paths < 2) throw ArgumentError("forward_autocorrelation: need at least 2 paths");
  const auto& sched = marginal.schedule();
  for (double t : t_grid)
    if (t < 0.0 || t > sched.horizon()) throw DomainError("forward_autocorrelation: grid time outside [0, T]");
  const int d = marginal.dim();
  const std::size_t nt = t_grid.size();

  // per-path contributions, summed afterwards in path order
  Eigen::MatrixXd cross(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(n_paths));
  Eigen::VectorXd norm0(static_cast<Eigen::Index>(n_paths));
  parallel_chunks(n_paths, 256, [&](std::size_t lo, std::size_t hi) {
    Eigen::VectorXd z(d);
    for (std::size_t p = lo; p < hi; ++p) {
      Rng rng(seed, p);
      const Eigen::VectorXd x0 = marginal.sample(0.0, rng);
      norm0[static_cast<Eigen::Index>(p)] = x0.squaredNorm();
      for (std::size_t k = 0; k < nt; ++k) {
        for (int i = 0; i < d; ++i) z[i] = rng.normal();
        const Eigen::VectorXd xt = diffusion::ou_transition(x0, sched, 0.0, t_grid[k], z);
        cross(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(p)) = x0.dot(xt);
      }
    }
  });
  const double denom = norm0.sum();
  if (!(denom > 0.0)) throw DomainError("forward_autocorrelation: E|x(0)|^2 = 0, normalisation undefined");
  std::vector<double> c(nt);
  for (std::size_t k = 0; k < nt; ++k) c[k] = cross.row(static_cast<Eigen::Index>(k)).sum() / denom;
  return c;
}

Estimate weighted_score_norm(const MixtureMarginal& marginal, double t, std::size_t n_probe, std::uint64_t seed) {
  check_positive_time(marginal, t, "weighted_score_norm");
  if (n_probe < 2) throw ArgumentError("weighted_score_norm: need at least 2 probes");
  const double var = marginal.schedule().noise_variance(t);
  const double d = marginal.dim();
  Eigen::VectorXd v(static_cast<Eigen::Index>(n_probe));
  parallel_chunks(n_probe, 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      Rng rng(seed, p);
      const Eigen::VectorXd x = marginal.sample(t, rng);
      v[static_cast<Eigen::Index>(p)] = var * marginal.score(t, x).squaredNorm() / d;
    }
  });
  const double n = static_cast<double>(n_probe);
  const double mean = v.mean();
  const double sd = std::sqrt((v.array() - mean).square().sum() / (n - 1.0));
  return {mean, sd / std::sqrt(n)};
}

double ks_to_gaussian(const MixtureMarginal& marginal, double t, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw ArgumentError("ks_to_gaussian: need at least 2 samples");
  const int d = marginal.dim();
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(n));
  parallel_chunks(n, 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      Rng rng(seed, p);
      x.col(static_cast<Eigen::Index>(p)) = marginal.sample(t, rng);
    }
  });
  double worst = 0.0;
  for (int k = 0; k < d; ++k) {
    std::vector<double> c = coordinate(x, k);
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : c) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) return 1.0;
    for (double& v : c) v = (v - mean) / sd;
    worst = std::max(worst, ks_statistic(std::move(c), standard_normal_cdf));
  }
  return worst;
}

UturnReport recommend_uturn_time(const MixtureMarginal& marginal, const UturnThresholds& thresholds,
                                 const UturnScan& scan, std::uint64_t seed) {
  const double T = marginal.schedule().horizon();
  UturnReport r;
  r.thresholds = thresholds;
  if (r.thresholds.ks_max < 0.0) r.thresholds.ks_max = 1.36 / std::sqrt(static_cast<double>(scan.n_ks));
  r.t_candidates = scan.t_grid;
  if (r.t_candidates.empty()) {
    if (!(scan.t_min > 0.0) || scan.t_min >= T) throw ConfigError("uturn scan: t_min must lie in (0, T)");
    const int n = 50;
    for (int k = 0; k < n; ++k) r.t_candidates.push_back(scan.t_min + (T - scan.t_min) * k / (n - 1));
  }
  for (double t : r.t_candidates) check_positive_time(marginal, t, "uturn scan");

  bool autocorr_defined = true;
  try {
    r.autocorr = forward_autocorrelation(marginal, r.t_candidates, scan.n_paths, derive_seed(seed, 1));
  } catch (const DomainError&) {
    autocorr_defined = false;
    r.autocorr.assign(r.t_candidates.size(), std::numeric_limits<double>::quiet_NaN());
  }
  r.recommended_t = T;
  r.no_pass = true;
  for (std::size_t k = 0; k < r.t_candidates.size(); ++k) {
    const double t = r.t_candidates[k];
    r.weighted_score_norm.push_back(weighted_score_norm(marginal, t, scan.n_probe, derive_seed(seed, 2)).value);
    r.ks_to_gaussian.push_back(ks_to_gaussian(marginal, t, scan.n_ks, derive_seed(seed, 3)));
    const bool pass = (!autocorr_defined || std::abs(r.autocorr[k]) < r.thresholds.autocorr_max) &&
                      r.ks_to_gaussian[k] < r.thresholds.ks_max &&
                      std::abs(r.weighted_score_norm[k] - 1.0) < r.thresholds.norm_band;
    if (pass && r.no_pass) {
      r.no_pass = false;
      r.recommended_t = t;
    }
  }
  return r;
}

nlohmann::json to_json(const UturnReport& r) {
  return {{"t_candidates", r.t_candidates},
          {"autocorr", nullable(r.autocorr)},
          {"weighted_score_norm", r.weighted_score_norm},
          {"ks_to_gaussian", r.ks_to_gaussian},
          {"recommended_t", r.recommended_t},
          {"no_pass", r.no_pass},
          {"thresholds",
           {{"autocorr_max", r.thresholds.autocorr_max},
            {"ks_max", r.thresholds.ks_max},
            {"norm_band", r.thresholds.norm_band}}}};
}

UturnResult uturn_ensemble(const MixtureMarginal& data, const diffusion::ScoreModel& model,
                           const diffusion::ReverseConfig& cfg, double t_u, std::size_t n, std::uint64_t seed) {
  check_positive_time(data, t_u, "uturn");
  const auto& sched = data.schedule();
  cfg.validate(sched);
  if (model.dim() != data.dim()) throw ArgumentError("uturn: model and data dimensions differ");
  UturnResult res{Eigen::MatrixXd(data.dim(), static_cast<Eigen::Index>(n)), std::vector<std::size_t>(n)};
  const std::uint64_t origin_key = derive_seed(seed, kOriginStream);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(origin_key, i);
    res.origins[i] = static_cast<std::size_t>(rng.below(data.components()));
    res.outputs.col(static_cast<Eigen::Index>(i)) = data.sample_component(res.origins[i], t_u, rng);
  }
  res.outputs = diffusion::reverse_from(model, sched, cfg, res.outputs, t_u, derive_seed(seed, kReverseStream))
                    .samples;
  return res;
}

UturnSample uturn_sample(const MixtureMarginal& data, const diffusion::ScoreModel& model,
                         const diffusion::ReverseConfig& cfg, double t_u, std::uint64_t seed, std::uint64_t index) {
  check_positive_time(data, t_u, "uturn");
  const auto& sched = data.schedule();
  cfg.validate(sched);
  Rng rng(derive_seed(seed, kOriginStream), index);
  UturnSample s;
  s.origin = static_cast<std::size_t>(rng.below(data.components()));
  const Eigen::MatrixXd start = data.sample_component(s.origin, t_u, rng);
  s.output = diffusion::reverse_from(model, sched, cfg, start, t_u,
                                     derive_seed(seed, kReverseStream), diffusion::FailurePolicy::raise, index)
                 .samples.col(0);
  return s;
}

CollapseDiagnostic collapse_diagnostic(const std::vector<diffusion::PathState>& trajectory,
                                       const diffusion::Dataset& data, double epsilon) {
  if (trajectory.empty()) throw ArgumentError("collapse_diagnostic: empty trajectory");
  data.validate();
  CollapseDiagnostic c;
  std::size_t last_best = 0;
  for (const auto& st : trajectory) {
    if (st.x.size() != data.dim()) throw ArgumentError("collapse_diagnostic: state dimension mismatch");
    Eigen::Index best = 0;
    const double dist = std::sqrt((data.samples.colwise() - st.x).colwise().squaredNorm().minCoeff(&best));
    c.reverse_times.push_back(st.t);
    c.min_dist_to_trainset.push_back(dist);
    last_best = static_cast<std::size_t>(best);
  }
  c.memorized = c.min_dist_to_trainset.back() < epsilon;
  if (c.memorized) c.match_index = last_best;
  return c;
}

nlohmann::json to_json(const CollapseDiagnostic& c) {
  return {{"reverse_times", c.reverse_times},
          {"min_dist_to_trainset", c.min_dist_to_trainset},
          {"memorized", c.memorized},
          {"match_index", c.match_index ? nlohmann::json(*c.match_index) : nlohmann::json(nullptr)}};
}

}  // namespace lgdf::diag
