#pragma once

#include <Eigen/Dense>

#include "lgdf/core/rng.hpp"
#include "lgdf/diffusion/dataset.hpp"
#include "lgdf/diffusion/schedule.hpp"
#include "lgdf/diffusion/score_model.hpp"

namespace lgdf::diffusion {

/// Marginal p(x|t) of the forward OU process started from the empirical
/// distribution of a dataset: an equal-weight Gaussian mixture with means
/// exp(-B/2) x^(s) and covariance (1 - exp(-B)) I.
///
/// Optionally every component starts with a diagonal covariance
/// diag(component_var) instead of a delta, which turns the dataset into the
/// list of means of a continuous Gaussian mixture. Its OU evolution stays in
/// closed form with per-coordinate variance exp(-B) var_k + 1 - exp(-B).
class MixtureMarginal final : public ScoreModel {
 public:
  MixtureMarginal(NoiseSchedule schedule, Dataset data);
  MixtureMarginal(NoiseSchedule schedule, Dataset data, Eigen::VectorXd component_var);

  const NoiseSchedule& schedule() const { return schedule_; }
  const Dataset& dataset() const { return data_; }
  const Eigen::VectorXd& component_variance() const { return component_var_; }
  std::size_t components() const { return data_.count(); }

  int dim() const override { return data_.dim(); }

  /// Per-coordinate variance of every component at time t.
  Eigen::VectorXd variance_at(double t) const;

  /// log p(x|t), log-sum-exp stabilised. Throws DomainError when the
  /// mixture is singular at t (t = 0 without component variance).
  double log_density(double t, const Eigen::VectorXd& x) const;

  /// psi(t; x) = -grad_x log p(x|t) = (x - exp(-B/2) sum_s w_s x^(s)) / var,
  /// with w the softmax posterior over components.
  Eigen::VectorXd score(double t, const Eigen::VectorXd& x) const;
  void score(double t, const Eigen::Ref<const Eigen::MatrixXd>& x,
             Eigen::Ref<Eigen::MatrixXd> out) const override;

  /// Draw from component s at time t.
  Eigen::VectorXd sample_component(std::size_t s, double t, Rng& rng) const;
  /// Draw a component uniformly, then a state from it.
  Eigen::VectorXd sample(double t, Rng& rng) const;

 private:
  Eigen::VectorXd checked_variance(double t) const;

  NoiseSchedule schedule_;
  Dataset data_;
  Eigen::VectorXd component_var_;
};

}  // namespace lgdf::diffusion
