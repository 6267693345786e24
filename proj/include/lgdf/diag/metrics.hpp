#pragma once

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <vector>

namespace lgdf::diag {

double standard_normal_cdf(double x);

/// sup_x |F_n(x) - F(x)| over the empirical CDF of the samples. Accepts a
/// single sample. Throws ArgumentError when empty.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Two-sample form: the reference CDF is the empirical CDF of `reference`.
double ks_statistic(std::vector<double> samples, std::vector<double> reference);

/// Histogram estimate of KL(P_a || P_b) on shared bins: pooled range,
/// Scott's-rule width 3.49 s n^(-1/3) with s the pooled deviation and n the
/// smaller sample size, every bin probability regularised by delta then
/// renormalised.
double histogram_kl(const std::vector<double>& a, const std::vector<double>& b, double delta = 1e-10);

struct DistributionMetrics {
  Eigen::VectorXd ks;         // per coordinate, two-sample
  Eigen::VectorXd mean_diff;  // mean(B) - mean(A)
  Eigen::MatrixXd cov_diff;   // cov(B) - cov(A), unbiased
  Eigen::VectorXd kl;         // per coordinate, KL(A || B)

  double max_ks() const { return ks.maxCoeff(); }
  double cov_diff_norm() const { return cov_diff.norm(); }
};

/// Compares two ensembles stored one sample per column. Throws
/// ArgumentError on empty input or dimension mismatch.
DistributionMetrics distribution_metrics(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

nlohmann::json to_json(const DistributionMetrics& m);

/// Row k of an ensemble as a vector.
std::vector<double> coordinate(const Eigen::MatrixXd& ensemble, Eigen::Index k);

}  // namespace lgdf::diag
