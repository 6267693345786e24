#include "lgdf/diffusion/mixture.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "lgdf/core/error.hpp"

namespace lgdf::diffusion {

MixtureMarginal::MixtureMarginal(NoiseSchedule schedule, Dataset data)
    : MixtureMarginal(schedule, std::move(data), Eigen::VectorXd()) {}

MixtureMarginal::MixtureMarginal(NoiseSchedule schedule, Dataset data, Eigen::VectorXd component_var)
    : schedule_(schedule), data_(std::move(data)), component_var_(std::move(component_var)) {
  data_.validate();
  if (component_var_.size() == 0) component_var_ = Eigen::VectorXd::Zero(data_.dim());
  if (component_var_.size() != data_.dim())
    throw ArgumentError("mixture: component variance has wrong dimension");
  if ((component_var_.array() < 0.0).any() || !component_var_.allFinite())
    throw ArgumentError("mixture: component variance must be finite and non-negative");
}

Eigen::VectorXd MixtureMarginal::variance_at(double t) const {
  const double b = schedule_.integral(t);
  return (std::exp(-b) * component_var_.array() - std::expm1(-b)).matrix();
}

Eigen::VectorXd MixtureMarginal::checked_variance(double t) const {
  Eigen::VectorXd var = variance_at(t);
  if (!(var.array() > 0.0).all()) {
    std::ostringstream msg;
    msg << "mixture marginal is singular at t=" << t << " (zero variance)";
    throw DomainError(msg.str());
  }
  return var;
}

double MixtureMarginal::log_density(double t, const Eigen::VectorXd& x) const {
  if (x.size() != dim()) throw ArgumentError("mixture: state dimension mismatch");
  const Eigen::VectorXd var = checked_variance(t);
  const double shrink = schedule_.mean_factor(t);
  const Eigen::ArrayXd inv_var = var.array().inverse();

  const auto s_count = static_cast<Eigen::Index>(components());
  std::vector<double> expo(static_cast<std::size_t>(s_count));
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < s_count; ++s) {
    const Eigen::ArrayXd diff = x.array() - shrink * data_.samples.col(s).array();
    const double e = -0.5 * (diff.square() * inv_var).sum();
    expo[static_cast<std::size_t>(s)] = e;
    top = std::max(top, e);
  }
  double acc = 0.0;
  for (double e : expo) acc += std::exp(e - top);

  const double log_norm = -0.5 * (var.array() * (2.0 * std::numbers::pi)).log().sum();
  return top + std::log(acc) - std::log(static_cast<double>(s_count)) + log_norm;
}

Eigen::VectorXd MixtureMarginal::score(double t, const Eigen::VectorXd& x) const {
  Eigen::MatrixXd out(x.size(), 1);
  score(t, Eigen::MatrixXd(x), out);
  return out.col(0);
}

void MixtureMarginal::score(double t, const Eigen::Ref<const Eigen::MatrixXd>& x,
                            Eigen::Ref<Eigen::MatrixXd> out) const {
  if (x.rows() != dim()) throw ArgumentError("mixture: state dimension mismatch");
  const Eigen::VectorXd var = checked_variance(t);
  const double shrink = schedule_.mean_factor(t);
  const Eigen::ArrayXd inv_var = var.array().inverse();
  const Eigen::MatrixXd means = shrink * data_.samples;
  const Eigen::Index s_count = means.cols();
  const Eigen::Index d = means.rows();

  std::vector<double> expo(static_cast<std::size_t>(s_count));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index s = 0; s < s_count; ++s) {
      double e = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = x(k, j) - means(k, s);
        e += diff * diff * inv_var[k];
      }
      e *= -0.5;
      expo[static_cast<std::size_t>(s)] = e;
      top = std::max(top, e);
    }
    double total = 0.0;
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(d);
    for (Eigen::Index s = 0; s < s_count; ++s) {
      const double w = std::exp(expo[static_cast<std::size_t>(s)] - top);
      total += w;
      weighted.noalias() += w * means.col(s);
    }
    out.col(j) = ((x.col(j) - weighted / total).array() * inv_var).matrix();
  }
}

Eigen::VectorXd MixtureMarginal::sample_component(std::size_t s, double t, Rng& rng) const {
  const double shrink = schedule_.mean_factor(t);
  const Eigen::VectorXd sd = variance_at(t).cwiseSqrt();
  Eigen::VectorXd x(dim());
  for (int k = 0; k < dim(); ++k) x[k] = shrink * data_.samples(k, static_cast<Eigen::Index>(s)) + sd[k] * rng.normal();
  return x;
}

Eigen::VectorXd MixtureMarginal::sample(double t, Rng& rng) const {
  return sample_component(rng.below(components()), t, rng);
}

}  // namespace lgdf::diffusion
