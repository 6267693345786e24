#include "lgdf/score_net/mlp.hpp"

#include <cmath>

#include "lgdf/core/error.hpp"

namespace lgdf::score_net {
namespace {

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::tanh) return z.array().tanh().matrix();
  return (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

/// Elementwise derivative of the activation at z.
Eigen::ArrayXXd activate_prime(Activation a, const Eigen::MatrixXd& z) {
  if (a == Activation::tanh) return 1.0 - z.array().tanh().square();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
  return s * (1.0 + z.array() * (1.0 - s));
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::silu ? "silu" : "tanh"; }

Activation activation_from_string(const std::string& s) {
  if (s == "silu") return Activation::silu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected silu|tanh)");
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void MlpParams::validate() const {
  if (layers.empty()) throw ArgumentError("mlp: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows())
      throw ArgumentError("mlp: bias size mismatch in layer " + std::to_string(l));
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
      throw ArgumentError("mlp: layer " + std::to_string(l) + " does not chain with its predecessor");
    if (!layer.weight.allFinite() || !layer.bias.allFinite())
      throw ArgumentError("mlp: non-finite parameter in layer " + std::to_string(l));
  }
}

MlpParams MlpParams::init(const std::vector<int>& dims, Activation act, Rng& rng) {
  if (dims.size() < 2) throw ArgumentError("mlp: need at least input and output widths");
  for (int d : dims)
    if (d < 1) throw ArgumentError("mlp: layer widths must be positive");
  MlpParams p;
  p.activation = act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    DenseLayer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    for (auto& b : layer.bias) b = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MlpParams MlpParams::zeros_like(const MlpParams& p) {
  MlpParams z;
  z.activation = p.activation;
  for (const auto& l : p.layers)
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  return z;
}

Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& input, ForwardCache* cache) {
  if (input.rows() != p.input_dim())
    throw ArgumentError("mlp: input has " + std::to_string(input.rows()) + " rows, network expects " +
                        std::to_string(p.input_dim()));
  if (cache) {
    cache->pre.clear();
    cache->post.clear();
    cache->post.push_back(input);
  }
  Eigen::MatrixXd a = input;
  const std::size_t n_layers = p.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd z = p.layers[l].weight * a;
    z.colwise() += p.layers[l].bias;
    if (l + 1 == n_layers) {
      if (cache) cache->pre.push_back(z);
      return z;
    }
    a = activate(p.activation, z);
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->post.push_back(a);
    }
  }
  return a;
}

MlpParams mlp_backward(const MlpParams& p, const ForwardCache& cache, const Eigen::MatrixXd& upstream) {
  MlpParams g;
  g.activation = p.activation;
  g.layers.resize(p.layers.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = p.layers.size(); l-- > 0;) {
    g.layers[l].weight.noalias() = delta * cache.post[l].transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = p.layers[l].weight.transpose() * delta;
    delta = (back.array() * activate_prime(p.activation, cache.pre[l - 1])).matrix();
  }
  return g;
}

}  // namespace lgdf::score_net
