#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "lgdf/diffusion/dataset.hpp"
#include "lgdf/diffusion/mixture.hpp"
#include "lgdf/score_net/score_net.hpp"

namespace lgdf::score_net {

enum class ScoreTarget {
  /// psi of the full mixture at the sampled state.
  mixture,
  /// Closed-form score of the component the state was drawn from.
  component,
};

std::string to_string(ScoreTarget t);
ScoreTarget score_target_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 128;
  long n_iterations = 20000;
  std::uint64_t seed = 0;
  OutputScaling output = OutputScaling::sigma;
  double t_min = 1e-3;
  ScoreTarget target = ScoreTarget::mixture;
  bool weighted = false;

  std::vector<int> hidden{128, 128, 128};
  Activation activation = Activation::silu;
  TimeEmbedding embedding;

  /// Throws ConfigError.
  void validate(const diffusion::NoiseSchedule& schedule) const;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(const MlpParams& like, double lr, double beta1, double beta2, double epsilon);
  void step(MlpParams& params, const MlpParams& grads);
  long steps() const { return t_; }

 private:
  MlpParams m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainResult {
  ScoreNetSpec net;
  std::vector<double> loss_history;  // batch loss per iteration
};

/// Fresh network for cfg, initialised from Rng(seed, stream) with stream
/// reserved for initialisation.
ScoreNetSpec init_score_net(int d, const diffusion::NoiseSchedule& schedule, const TrainConfig& cfg);

/// Score matching against the exact marginal of `target`. Each iteration
/// draws t ~ U[t_min, T], a component s and x ~ p_s(x|t), all from streams
/// derived from (seed, iteration, batch slot). Throws NumericalError naming
/// the iteration when the loss stops being finite.
TrainResult train_score(const diffusion::MixtureMarginal& target, const TrainConfig& cfg, ScoreNetSpec init);
TrainResult train_score(const diffusion::MixtureMarginal& target, const TrainConfig& cfg);
TrainResult train_score(const diffusion::Dataset& data, const diffusion::NoiseSchedule& schedule,
                        const TrainConfig& cfg);

/// CSV with header "iteration,loss".
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss);

}  // namespace lgdf::score_net
