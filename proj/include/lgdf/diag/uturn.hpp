#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <optional>
#include <vector>

#include "lgdf/diffusion/mixture.hpp"
#include "lgdf/diffusion/sde.hpp"

namespace lgdf::diag {

/// Monte Carlo mean with its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// C(t) = E[x(0) . x(t)] / E[|x(0)|^2] over n_paths forward paths, each
/// starting from a uniformly drawn component of the marginal and moved to
/// every grid time by the exact OU transition. Throws DomainError when
/// E|x(0)|^2 vanishes, ArgumentError when n_paths < 2.
std::vector<double> forward_autocorrelation(const diffusion::MixtureMarginal& marginal,
                                            const std::vector<double>& t_grid, std::size_t n_paths,
                                            std::uint64_t seed);

/// E_{x ~ p(x|t)}[sigma_t^2 |psi(t, x)|^2] / d. Equals 1 when p(x|t) is
/// N(0, sigma_t^2 I) and never exceeds 1, since p(x|t) is a convolution with
/// that Gaussian. Throws DomainError for t <= 0.
Estimate weighted_score_norm(const diffusion::MixtureMarginal& marginal, double t, std::size_t n_probe,
                             std::uint64_t seed);

/// Largest per-coordinate KS distance between n draws of p(x|t), each
/// coordinate standardised by its sample mean and deviation, and N(0, 1).
double ks_to_gaussian(const diffusion::MixtureMarginal& marginal, double t, std::size_t n, std::uint64_t seed);

struct UturnThresholds {
  double autocorr_max = 0.05;
  /// Negative means 1.36 / sqrt(n_ks).
  double ks_max = -1.0;
  double norm_band = 0.1;
};

struct UturnScan {
  /// Empty means 50 evenly spaced times from t_min to T.
  std::vector<double> t_grid;
  double t_min = 1e-3;
  std::size_t n_paths = 4000;
  std::size_t n_probe = 4000;
  std::size_t n_ks = 4000;
};

struct UturnReport {
  std::vector<double> t_candidates;
  std::vector<double> autocorr;  // NaN where undefined
  std::vector<double> weighted_score_norm;
  std::vector<double> ks_to_gaussian;
  double recommended_t = 0.0;
  /// Set when no grid time passes all three criteria; recommended_t is T.
  bool no_pass = false;
  UturnThresholds thresholds;
};

/// Smallest grid time where |C(t)| < autocorr_max, the max KS to Gaussian is
/// below ks_max and |weighted score norm - 1| < norm_band. A dataset with
/// E|x(0)|^2 = 0 has no defined autocorrelation; that criterion then counts
/// as met.
UturnReport recommend_uturn_time(const diffusion::MixtureMarginal& marginal, const UturnThresholds& thresholds,
                                 const UturnScan& scan, std::uint64_t seed);

nlohmann::json to_json(const UturnReport& r);

struct UturnResult {
  Eigen::MatrixXd outputs;            // d x n
  std::vector<std::size_t> origins;   // originating dataset index per column
};

/// Forward-noises a uniformly chosen sample of the marginal's dataset to t_u
/// (exactly, through its component law) and runs the reverse sampler from
/// there to t_min with the step length of cfg. Sample i uses streams derived
/// from (seed, i). Throws DomainError unless 0 < t_u <= T.
UturnResult uturn_ensemble(const diffusion::MixtureMarginal& data, const diffusion::ScoreModel& model,
                           const diffusion::ReverseConfig& cfg, double t_u, std::size_t n, std::uint64_t seed);

struct UturnSample {
  Eigen::VectorXd output;
  std::size_t origin = 0;
};

UturnSample uturn_sample(const diffusion::MixtureMarginal& data, const diffusion::ScoreModel& model,
                         const diffusion::ReverseConfig& cfg, double t_u, std::uint64_t seed,
                         std::uint64_t index = 0);

struct CollapseDiagnostic {
  std::vector<double> reverse_times;
  std::vector<double> min_dist_to_trainset;
  bool memorized = false;
  std::optional<std::size_t> match_index;  // set when memorized
};

/// Distance from every trajectory state to the nearest dataset sample;
/// memorized when the final distance is below epsilon. Throws ArgumentError
/// for an empty trajectory.
CollapseDiagnostic collapse_diagnostic(const std::vector<diffusion::PathState>& trajectory,
                                       const diffusion::Dataset& data, double epsilon = 0.05);

nlohmann::json to_json(const CollapseDiagnostic& c);

}  // namespace lgdf::diag
