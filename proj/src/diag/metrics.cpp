#include "lgdf/diag/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "lgdf/core/error.hpp"

namespace lgdf::diag {
namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.colwise() - x.rowwise().mean();
  const double n = static_cast<double>(x.cols());
  if (n < 2) return Eigen::MatrixXd::Zero(x.rows(), x.rows());
  return c * c.transpose() / (n - 1.0);
}

}  // namespace

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw ArgumentError("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_statistic(std::vector<double> samples, std::vector<double> reference) {
  if (samples.empty() || reference.empty()) throw ArgumentError("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  std::sort(reference.begin(), reference.end());
  const double na = static_cast<double>(samples.size()), nb = static_cast<double>(reference.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < samples.size() && j < reference.size()) {
    const double v = std::min(samples[i], reference[j]);
    while (i < samples.size() && samples[i] <= v) ++i;
    while (j < reference.size() && reference[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double histogram_kl(const std::vector<double>& a, const std::vector<double>& b, double delta) {
  if (a.empty() || b.empty()) throw ArgumentError("histogram_kl: empty sample");
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto [lo_it, hi_it] = std::minmax_element(pooled.begin(), pooled.end());
  const double lo = *lo_it, hi = *hi_it;
  const double n = static_cast<double>(pooled.size());
  double mean = 0.0;
  for (double v : pooled) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : pooled) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / std::max(n - 1.0, 1.0));
  const double n_hist = static_cast<double>(std::min(a.size(), b.size()));
  const double width = 3.49 * sd * std::cbrt(1.0 / n_hist);
  std::size_t bins = 1;
  if (hi > lo && width > 0.0) bins = static_cast<std::size_t>(std::max(1.0, std::ceil((hi - lo) / width)));
  bins = std::min<std::size_t>(bins, 100000);

  auto histogram = [&](const std::vector<double>& v) {
    std::vector<double> p(bins, 0.0);
    for (double x : v) {
      std::size_t k = hi > lo ? static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins)) : 0;
      p[std::min(k, bins - 1)] += 1.0;
    }
    double total = 0.0;
    for (double& q : p) total += (q = q / static_cast<double>(v.size()) + delta);
    for (double& q : p) q /= total;
    return p;
  };
  const auto p = histogram(a), q = histogram(b);
  double kl = 0.0;
  for (std::size_t k = 0; k < bins; ++k) kl += p[k] * std::log(p[k] / q[k]);
  return kl;
}

std::vector<double> coordinate(const Eigen::MatrixXd& ensemble, Eigen::Index k) {
  return to_std(ensemble.row(k).transpose());
}

DistributionMetrics distribution_metrics(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() == 0 || b.cols() == 0) throw ArgumentError("distribution_metrics: empty ensemble");
  if (a.rows() != b.rows())
    throw ArgumentError("distribution_metrics: dimension mismatch (" + std::to_string(a.rows()) + " vs " +
                        std::to_string(b.rows()) + ")");
  const Eigen::Index d = a.rows();
  DistributionMetrics m{Eigen::VectorXd(d), b.rowwise().mean() - a.rowwise().mean(), covariance(b) - covariance(a),
                        Eigen::VectorXd(d)};
  for (Eigen::Index k = 0; k < d; ++k) {
    const auto ak = coordinate(a, k), bk = coordinate(b, k);
    m.ks[k] = ks_statistic(ak, bk);
    m.kl[k] = histogram_kl(ak, bk);
  }
  return m;
}

nlohmann::json to_json(const DistributionMetrics& m) {
  nlohmann::json cov = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.cov_diff.rows(); ++r) cov.push_back(to_std(m.cov_diff.row(r).transpose()));
  return {{"ks", to_std(m.ks)},
          {"mean_diff", to_std(m.mean_diff)},
          {"cov_diff", cov},
          {"cov_diff_norm", m.cov_diff_norm()},
          {"kl", to_std(m.kl)}};
}

}  // namespace lgdf::diag
