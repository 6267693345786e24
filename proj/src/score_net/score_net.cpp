#include "lgdf/score_net/score_net.hpp"

#include <cmath>
#include <numbers>

#include "lgdf/core/error.hpp"

namespace lgdf::score_net {
namespace {

/// psi = skip * x + out * raw, per column.
struct Scaling {
  Eigen::RowVectorXd skip, out;
};

Scaling scaling(const ScoreNetSpec& net, const std::vector<double>& t) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Scaling c{Eigen::RowVectorXd::Zero(n), Eigen::RowVectorXd::Ones(n)};
  if (net.output == OutputScaling::direct) return c;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double var = net.schedule.noise_variance(t[static_cast<std::size_t>(j)]);
    if (net.output == OutputScaling::sigma) {
      c.out[j] = 1.0 / std::sqrt(var);
    } else {
      c.skip[j] = 1.0 / var;
      c.out[j] = -net.schedule.mean_factor(t[static_cast<std::size_t>(j)]) / var;
    }
  }
  return c;
}

Eigen::MatrixXd apply_scaling(const Scaling& c, const Eigen::MatrixXd& x, const Eigen::MatrixXd& raw) {
  return (x.array().rowwise() * c.skip.array() + raw.array().rowwise() * c.out.array()).matrix();
}

Eigen::MatrixXd network_input(const ScoreNetSpec& net, const std::vector<double>& t, const Eigen::MatrixXd& x) {
  if (x.rows() != net.dim())
    throw ConfigError("score net: state has dimension " + std::to_string(x.rows()) + ", network expects " +
                      std::to_string(net.dim()));
  if (static_cast<std::size_t>(x.cols()) != t.size())
    throw ArgumentError("score net: " + std::to_string(t.size()) + " times for " + std::to_string(x.cols()) + " states");
  Eigen::MatrixXd in(x.rows() + net.embedding.width(), x.cols());
  in.topRows(x.rows()) = x;
  in.bottomRows(net.embedding.width()) = net.embedding.embed(t);
  return in;
}

}  // namespace

std::string to_string(OutputScaling o) {
  switch (o) {
    case OutputScaling::direct: return "direct";
    case OutputScaling::sigma: return "sigma";
    case OutputScaling::denoiser: return "denoiser";
  }
  return "?";
}

OutputScaling output_scaling_from_string(const std::string& s) {
  if (s == "direct") return OutputScaling::direct;
  if (s == "sigma") return OutputScaling::sigma;
  if (s == "denoiser") return OutputScaling::denoiser;
  throw ConfigError("unknown output scaling '" + s + "' (expected direct|sigma|denoiser)");
}

double TimeEmbedding::frequency(int k) const {
  return 2.0 * std::numbers::pi / base_period * std::exp2(0.5 * k);
}

void TimeEmbedding::validate() const {
  if (n_frequencies < 1) throw ConfigError("time embedding: n_frequencies must be >= 1");
  if (!(base_period > 0.0) || !std::isfinite(base_period)) throw ConfigError("time embedding: base_period must be > 0");
}

Eigen::VectorXd TimeEmbedding::embed(double t) const {
  if (t < 0.0) throw DomainError("time embedding: t must be >= 0");
  Eigen::VectorXd e(width());
  for (int k = 0; k < n_frequencies; ++k) {
    const double a = frequency(k) * t;
    e[k] = std::sin(a);
    e[n_frequencies + k] = std::cos(a);
  }
  return e;
}

Eigen::MatrixXd TimeEmbedding::embed(const std::vector<double>& t) const {
  Eigen::MatrixXd e(width(), static_cast<Eigen::Index>(t.size()));
  for (std::size_t j = 0; j < t.size(); ++j) e.col(static_cast<Eigen::Index>(j)) = embed(t[j]);
  return e;
}

void ScoreNetSpec::validate() const {
  embedding.validate();
  try {
    params.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (params.input_dim() != params.output_dim() + embedding.width())
    throw ConfigError("score net: input width " + std::to_string(params.input_dim()) + " != d + embedding width " +
                      std::to_string(params.output_dim() + embedding.width()));
}

std::vector<int> layer_dims(int d, const TimeEmbedding& emb, const std::vector<int>& hidden) {
  std::vector<int> dims{d + emb.width()};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(d);
  return dims;
}

Eigen::MatrixXd forward_score(const ScoreNetSpec& net, const std::vector<double>& t, const Eigen::MatrixXd& x) {
  return apply_scaling(scaling(net, t), x, mlp_forward(net.params, network_input(net, t, x)));
}

Eigen::VectorXd forward_score(const ScoreNetSpec& net, double t, const Eigen::VectorXd& x) {
  return forward_score(net, std::vector<double>{t}, Eigen::MatrixXd(x)).col(0);
}

LossGrad loss_and_grad(const ScoreNetSpec& net, const std::vector<double>& t, const Eigen::MatrixXd& x,
                       const Eigen::MatrixXd& target, bool weighted) {
  if (t.empty()) throw ArgumentError("loss_and_grad: empty batch");
  if (target.rows() != x.rows() || target.cols() != x.cols())
    throw ArgumentError("loss_and_grad: target shape does not match states");
  ForwardCache cache;
  Eigen::MatrixXd raw = mlp_forward(net.params, network_input(net, t, x), &cache);
  const Eigen::Index n = x.cols();

  const Scaling c = scaling(net, t);
  Eigen::RowVectorXd w = Eigen::RowVectorXd::Ones(n);
  if (weighted)
    for (Eigen::Index j = 0; j < n; ++j) w[j] = net.schedule.noise_variance(t[static_cast<std::size_t>(j)]);
  const Eigen::MatrixXd resid = target - apply_scaling(c, x, raw);
  const double loss = (resid.colwise().squaredNorm().array() * w.array()).sum() / static_cast<double>(n);
  if (!std::isfinite(loss)) throw NumericalError("loss_and_grad: non-finite loss");

  const Eigen::RowVectorXd scale = (-2.0 / static_cast<double>(n)) * w.cwiseProduct(c.out);
  const Eigen::MatrixXd upstream = (resid.array().rowwise() * scale.array()).matrix();
  return {loss, mlp_backward(net.params, cache, upstream)};
}

NetScore::NetScore(ScoreNetSpec net) : net_(std::move(net)) { net_.validate(); }

void NetScore::score(double t, const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Ref<Eigen::MatrixXd> out) const {
  out = forward_score(net_, std::vector<double>(static_cast<std::size_t>(x.cols()), t), Eigen::MatrixXd(x));
}

}  // namespace lgdf::score_net
