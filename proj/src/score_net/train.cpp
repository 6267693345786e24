#include "lgdf/score_net/train.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"

namespace lgdf::score_net {
namespace {

constexpr std::uint64_t kInitStream = 0xFFFFFFFFULL;

}  // namespace

std::string to_string(ScoreTarget t) { return t == ScoreTarget::mixture ? "mixture" : "component"; }

ScoreTarget score_target_from_string(const std::string& s) {
  if (s == "mixture") return ScoreTarget::mixture;
  if (s == "component") return ScoreTarget::component;
  throw ConfigError("unknown score target '" + s + "' (expected mixture|component)");
}

void TrainConfig::validate(const diffusion::NoiseSchedule& schedule) const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (n_iterations < 0) throw ConfigError("train: n_iterations must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    throw ConfigError("train: invalid Adam moment parameters");
  if (!(t_min > 0.0) || t_min >= schedule.horizon()) throw ConfigError("train: t_min must lie in (0, T)");
  for (int h : hidden)
    if (h < 1) throw ConfigError("train: hidden widths must be positive");
  embedding.validate();
}

Adam::Adam(const MlpParams& like, double lr, double beta1, double beta2, double epsilon)
    : m_(MlpParams::zeros_like(like)), v_(MlpParams::zeros_like(like)), lr_(lr), beta1_(beta1), beta2_(beta2),
      eps_(epsilon) {}

void Adam::step(MlpParams& params, const MlpParams& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m.array() = beta1_ * m.array() + (1.0 - beta1_) * g.array();
    v.array() = beta2_ * v.array() + (1.0 - beta2_) * g.array().square();
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grads.layers[l].weight, m_.layers[l].weight, v_.layers[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, m_.layers[l].bias, v_.layers[l].bias);
  }
}

ScoreNetSpec init_score_net(int d, const diffusion::NoiseSchedule& schedule, const TrainConfig& cfg) {
  cfg.validate(schedule);
  Rng rng(cfg.seed, kInitStream);
  ScoreNetSpec net;
  net.params = MlpParams::init(layer_dims(d, cfg.embedding, cfg.hidden), cfg.activation, rng);
  net.embedding = cfg.embedding;
  net.schedule = schedule;
  net.output = cfg.output;
  return net;
}

TrainResult train_score(const diffusion::MixtureMarginal& target, const TrainConfig& cfg, ScoreNetSpec init) {
  const auto& schedule = target.schedule();
  cfg.validate(schedule);
  init.validate();
  if (init.dim() != target.dim()) throw ConfigError("train: network dimension does not match the data");

  TrainResult result{std::move(init), {}};
  ScoreNetSpec& net = result.net;
  Adam adam(net.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
  const int d = target.dim();
  const double T = schedule.horizon();
  std::vector<double> t(B);
  Eigen::MatrixXd x(d, static_cast<Eigen::Index>(B)), psi(d, static_cast<Eigen::Index>(B));
  result.loss_history.reserve(static_cast<std::size_t>(cfg.n_iterations));

  for (long it = 0; it < cfg.n_iterations; ++it) {
    const std::uint64_t iter_key = derive_seed(cfg.seed, static_cast<std::uint64_t>(it));
    parallel_chunks(B, 32, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t j = lo; j < hi; ++j) {
        Rng rng(iter_key, j);
        const auto col = static_cast<Eigen::Index>(j);
        t[j] = rng.uniform(cfg.t_min, T);
        const std::size_t s = static_cast<std::size_t>(rng.below(target.components()));
        x.col(col) = target.sample_component(s, t[j], rng);
        if (cfg.target == ScoreTarget::mixture) {
          psi.col(col) = target.score(t[j], x.col(col));
        } else {
          const Eigen::VectorXd mean = schedule.mean_factor(t[j]) * target.dataset().samples.col(static_cast<Eigen::Index>(s));
          psi.col(col) = (x.col(col) - mean).cwiseQuotient(target.variance_at(t[j]));
        }
      }
    });
    LossGrad lg;
    try {
      lg = loss_and_grad(net, t, x, psi, cfg.weighted);
    } catch (const NumericalError&) {
      throw NumericalError("train: non-finite loss at iteration " + std::to_string(it));
    }
    result.loss_history.push_back(lg.loss);
    adam.step(net.params, lg.grads);
  }
  return result;
}

TrainResult train_score(const diffusion::MixtureMarginal& target, const TrainConfig& cfg) {
  return train_score(target, cfg, init_score_net(target.dim(), target.schedule(), cfg));
}

TrainResult train_score(const diffusion::Dataset& data, const diffusion::NoiseSchedule& schedule,
                        const TrainConfig& cfg) {
  data.validate();
  return train_score(diffusion::MixtureMarginal(schedule, data), cfg);
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "iteration,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < loss.size(); ++i) out << i << ',' << loss[i] << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lgdf::score_net
