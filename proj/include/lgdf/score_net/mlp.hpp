#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "lgdf/core/rng.hpp"

namespace lgdf::score_net {

enum class Activation { silu, tanh };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  bool operator==(const DenseLayer& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() && bias.size() == o.bias.size() &&
           weight == o.weight && bias == o.bias;
  }
};

/// Weights and biases of a fully connected network. Hidden layers apply the
/// activation; the last layer is linear.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::silu;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
  std::size_t parameter_count() const;

  /// Throws ArgumentError when dimensions do not chain or values are not finite.
  void validate() const;

  /// Layer widths {in, h1, ..., out}; uniform init in +-1/sqrt(fan_in).
  static MlpParams init(const std::vector<int>& dims, Activation act, Rng& rng);
  /// Same shapes, all parameters zero.
  static MlpParams zeros_like(const MlpParams& p);

  bool operator==(const MlpParams&) const = default;
};

/// Intermediate values of a batched forward pass, kept for backprop.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
  std::vector<Eigen::MatrixXd> post;  // post[0] = input, post[l+1] = act(pre[l])
};

/// Network output for each input column.
Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& input, ForwardCache* cache = nullptr);

/// Gradients of sum_j <upstream_j, output_j> with respect to all parameters,
/// given the cache of the forward pass that produced output.
MlpParams mlp_backward(const MlpParams& p, const ForwardCache& cache, const Eigen::MatrixXd& upstream);

}  // namespace lgdf::score_net
