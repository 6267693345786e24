#pragma once

#include <Eigen/Dense>
#include <functional>

namespace lgdf::diffusion {

/// Anything that can evaluate the score psi(t; x) = -grad_x log p(x|t) on a
/// batch of states (one state per column). Implementations must be safe to
/// call concurrently and must treat columns independently.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual int dim() const = 0;
  virtual void score(double t, const Eigen::Ref<const Eigen::MatrixXd>& x,
                     Eigen::Ref<Eigen::MatrixXd> out) const = 0;

  Eigen::MatrixXd score_batch(double t, const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out(x.rows(), x.cols());
    score(t, x, out);
    return out;
  }
};

/// Adapts a per-state callable.
class FunctionScore final : public ScoreModel {
 public:
  using Fn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;
  FunctionScore(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  int dim() const override { return dim_; }
  void score(double t, const Eigen::Ref<const Eigen::MatrixXd>& x,
             Eigen::Ref<Eigen::MatrixXd> out) const override {
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = fn_(t, x.col(j));
  }

 private:
  int dim_;
  Fn fn_;
};

}  // namespace lgdf::diffusion
