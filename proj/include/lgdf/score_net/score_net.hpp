#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lgdf/diffusion/schedule.hpp"
#include "lgdf/diffusion/score_model.hpp"
#include "lgdf/score_net/mlp.hpp"

namespace lgdf::score_net {

/// Sinusoidal features of t with frequencies
/// omega_k = (2 pi / base_period) 2^(k/2), k = 0..n-1, laid out as
/// [sin(omega_0 t) .. sin(omega_{n-1} t), cos(omega_0 t) .. cos(omega_{n-1} t)].
struct TimeEmbedding {
  int n_frequencies = 16;
  double base_period = 4.0;

  int width() const { return 2 * n_frequencies; }
  double frequency(int k) const;
  void validate() const;

  Eigen::VectorXd embed(double t) const;
  /// One column per entry of t.
  Eigen::MatrixXd embed(const std::vector<double>& t) const;

  bool operator==(const TimeEmbedding&) const = default;
};

/// How the raw network output r(t, x) becomes a score, with
/// sigma_t^2 = 1 - exp(-B(t)) and alpha_t = exp(-B(t)/2):
///   direct:   psi = r
///   sigma:    psi = r / sigma_t
///   denoiser: psi = (x - alpha_t r) / sigma_t^2, r estimating E[x(0) | x(t)]
enum class OutputScaling { direct, sigma, denoiser };

std::string to_string(OutputScaling o);
OutputScaling output_scaling_from_string(const std::string& s);

/// Everything needed to evaluate the network as a score model.
struct ScoreNetSpec {
  MlpParams params;
  TimeEmbedding embedding;
  diffusion::NoiseSchedule schedule = diffusion::NoiseSchedule::standard();
  OutputScaling output = OutputScaling::sigma;

  int dim() const { return params.output_dim(); }
  /// Throws ConfigError unless params map d + embedding width onto d.
  void validate() const;
};

/// Layer widths {d + embedding width, hidden..., d}.
std::vector<int> layer_dims(int d, const TimeEmbedding& emb, const std::vector<int>& hidden);

/// Network score estimate for one state per column of x, with per-column
/// times t. Throws ConfigError on dimension mismatch.
Eigen::MatrixXd forward_score(const ScoreNetSpec& net, const std::vector<double>& t, const Eigen::MatrixXd& x);
Eigen::VectorXd forward_score(const ScoreNetSpec& net, double t, const Eigen::VectorXd& x);

struct LossGrad {
  double loss = 0.0;
  MlpParams grads;
};

/// loss = mean_j w_j ||target_j - forward_score(t_j, x_j)||^2 with w_j = 1,
/// or w_j = sigma_{t_j}^2 when weighted. Throws ArgumentError on an empty
/// batch and NumericalError when the loss is not finite.
LossGrad loss_and_grad(const ScoreNetSpec& net, const std::vector<double>& t, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& target, bool weighted = false);

/// The network as a ScoreModel for the reverse sampler.
class NetScore final : public diffusion::ScoreModel {
 public:
  explicit NetScore(ScoreNetSpec net);

  const ScoreNetSpec& spec() const { return net_; }
  int dim() const override { return net_.dim(); }
  void score(double t, const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Ref<Eigen::MatrixXd> out) const override;

 private:
  ScoreNetSpec net_;
};

}  // namespace lgdf::score_net
