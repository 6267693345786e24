#include <doctest.h>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "lgdf/core/binary_io.hpp"
#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"
#include "lgdf/score_net/checkpoint.hpp"
#include "lgdf/score_net/mlp.hpp"
#include "lgdf/score_net/score_net.hpp"
#include "lgdf/score_net/train.hpp"

using namespace lgdf;
using namespace lgdf::score_net;
using diffusion::Dataset;
using diffusion::NoiseSchedule;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// B(t) of the linear 0.1 -> 20 schedule on [0, 1], written out by hand.
double std_B(double t) { return 0.1 * t + 0.5 * 19.9 * t * t; }

double single_gaussian_score(double t, double x, double mu) {
  const double a = std::exp(-0.5 * std_B(t));
  return (x - a * mu) / (1.0 - a * a);
}

ScoreNetSpec random_net(const std::vector<int>& hidden, Activation act, OutputScaling out, std::uint64_t seed) {
  ScoreNetSpec net;
  net.embedding = {3, 2.0};
  net.output = out;
  Rng rng(seed);
  net.params = MlpParams::init(layer_dims(1, net.embedding, hidden), act, rng);
  return net;
}

double& param_ref(MlpParams& p, std::size_t idx) {
  for (auto& l : p.layers) {
    if (idx < static_cast<std::size_t>(l.weight.size())) return l.weight.data()[idx];
    idx -= static_cast<std::size_t>(l.weight.size());
    if (idx < static_cast<std::size_t>(l.bias.size())) return l.bias.data()[idx];
    idx -= static_cast<std::size_t>(l.bias.size());
  }
  throw std::out_of_range("param index");
}

double max_abs(const MlpParams& p) {
  double m = 0.0;
  for (const auto& l : p.layers) m = std::max({m, l.weight.cwiseAbs().maxCoeff(), l.bias.cwiseAbs().maxCoeff()});
  return m;
}

struct Batch {
  std::vector<double> t;
  MatrixXd x, target;
};

Batch random_batch(int n, std::uint64_t seed) {
  Rng rng(seed, 1);
  Batch b{std::vector<double>(n), MatrixXd(1, n), MatrixXd(1, n)};
  for (int j = 0; j < n; ++j) {
    b.t[j] = rng.uniform(0.05, 1.0);
    b.x(0, j) = rng.normal();
    b.target(0, j) = rng.normal();
  }
  return b;
}

}  // namespace

TEST_SUITE("time embedding") {
  TEST_CASE("t = 0 gives zero sines and unit cosines") {
    const TimeEmbedding emb{5, 3.0};
    const VectorXd e = emb.embed(0.0);
    REQUIRE(e.size() == 10);
    CHECK(e.head(5).cwiseAbs().maxCoeff() == 0.0);
    CHECK((e.tail(5).array() == 1.0).all());
  }

  TEST_CASE("base frequency has the base period") {
    const TimeEmbedding emb{4, 2.5};
    const VectorXd e0 = emb.embed(0.0), ep = emb.embed(2.5);
    CHECK(ep[0] == doctest::Approx(e0[0]).epsilon(1e-12).scale(1.0));
    CHECK(ep[4] == doctest::Approx(e0[4]).epsilon(1e-12));
    CHECK(emb.frequency(0) == doctest::Approx(2.0 * std::numbers::pi / 2.5));
    CHECK(emb.frequency(2) == doctest::Approx(2.0 * emb.frequency(0)));
  }

  TEST_CASE("distinct grid times give distinct embeddings") {
    const TimeEmbedding emb;
    std::vector<VectorXd> es;
    for (int k = 1; k < 1000; ++k) es.push_back(emb.embed(k / 1000.0));
    double min_gap = 1e9;
    for (std::size_t i = 0; i + 1 < es.size(); ++i) min_gap = std::min(min_gap, (es[i + 1] - es[i]).norm());
    CHECK(min_gap > 1e-4);
  }

  TEST_CASE("invalid configuration") {
    CHECK_THROWS_AS(TimeEmbedding({0, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(TimeEmbedding({2, 0.0}).validate(), ConfigError);
    CHECK_THROWS_AS(TimeEmbedding().embed(-0.1), DomainError);
  }
}

TEST_SUITE("forward score") {
  TEST_CASE("zero parameters give zero output") {
    ScoreNetSpec net = random_net({8, 8}, Activation::silu, OutputScaling::direct, 1);
    net.params = MlpParams::zeros_like(net.params);
    Rng rng(2);
    for (int k = 0; k < 20; ++k) {
      const VectorXd x = VectorXd::Constant(1, 10.0 * rng.normal());
      CHECK(forward_score(net, rng.uniform(), x)[0] == 0.0);
    }
  }

  TEST_CASE("single linear layer is affine in x") {
    ScoreNetSpec net;
    net.embedding = {2, 1.0};
    net.output = OutputScaling::direct;
    net.params.layers.push_back({MatrixXd(1, 5), VectorXd::Constant(1, 0.25)});
    net.params.layers[0].weight << 1.0, 0.5, -0.5, 2.0, 3.0;
    const double t = 0.3;
    const double w0 = 2.0 * std::numbers::pi * t, w1 = w0 * std::sqrt(2.0);
    const double offset = 0.5 * std::sin(w0) - 0.5 * std::sin(w1) + 2.0 * std::cos(w0) + 3.0 * std::cos(w1) + 0.25;
    for (double x : {-3.0, 0.0, 1.5, 7.0})
      CHECK(forward_score(net, t, VectorXd::Constant(1, x))[0] == doctest::Approx(x + offset).epsilon(1e-13));
  }

  TEST_CASE("sigma reparametrisation divides by sigma_t") {
    ScoreNetSpec net = random_net({6}, Activation::tanh, OutputScaling::direct, 3);
    const VectorXd x = VectorXd::Constant(1, 0.7);
    const double raw = forward_score(net, 0.2, x)[0];
    net.output = OutputScaling::sigma;
    CHECK(forward_score(net, 0.2, x)[0] == doctest::Approx(raw / std::sqrt(-std::expm1(-std_B(0.2)))).epsilon(1e-13));
  }

  TEST_CASE("denoiser output") {
    ScoreNetSpec net = random_net({6}, Activation::silu, OutputScaling::direct, 9);
    const VectorXd x = VectorXd::Constant(1, -0.4);
    const double raw = forward_score(net, 0.3, x)[0];
    net.output = OutputScaling::denoiser;
    const double a = std::exp(-0.5 * std_B(0.3));
    CHECK(forward_score(net, 0.3, x)[0] == doctest::Approx((-0.4 - a * raw) / (1.0 - a * a)).epsilon(1e-12));
  }

  TEST_CASE("dimension mismatch") {
    const ScoreNetSpec net = random_net({4}, Activation::silu, OutputScaling::direct, 4);
    CHECK_THROWS_AS(forward_score(net, 0.5, VectorXd::Zero(2)), ConfigError);
    ScoreNetSpec bad = net;
    bad.embedding.n_frequencies = 5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("NetScore agrees with forward_score") {
    const ScoreNetSpec net = random_net({5, 5}, Activation::silu, OutputScaling::sigma, 5);
    const NetScore model(net);
    MatrixXd x(1, 3);
    x << -1.0, 0.0, 2.0;
    const MatrixXd out = model.score_batch(0.4, x);
    for (int j = 0; j < 3; ++j) CHECK(out(0, j) == doctest::Approx(forward_score(net, 0.4, VectorXd(x.col(j)))[0]).epsilon(1e-14));
  }
}

TEST_SUITE("loss and gradient") {
  TEST_CASE("exact targets give zero loss and zero gradient") {
    const ScoreNetSpec net = random_net({6, 6}, Activation::silu, OutputScaling::sigma, 6);
    Batch b = random_batch(7, 6);
    b.target = forward_score(net, b.t, b.x);
    const LossGrad lg = loss_and_grad(net, b.t, b.x, b.target);
    CHECK(lg.loss == 0.0);
    CHECK(max_abs(lg.grads) == 0.0);
  }

  TEST_CASE("gradient matches central differences on random nets") {
    const double h = 1e-6;
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
      const Activation act = trial % 2 ? Activation::tanh : Activation::silu;
      const auto out = static_cast<OutputScaling>(trial % 3);
      const bool weighted = trial % 4 == 1;
      ScoreNetSpec net = random_net({5}, act, out, 100 + trial);
      const Batch b = random_batch(4, 100 + trial);
      const LossGrad lg = loss_and_grad(net, b.t, b.x, b.target, weighted);
      MlpParams g = lg.grads;
      for (std::size_t i = 0; i < net.params.parameter_count(); ++i) {
        double& p = param_ref(net.params, i);
        const double p0 = p;
        p = p0 + h;
        const double up = loss_and_grad(net, b.t, b.x, b.target, weighted).loss;
        p = p0 - h;
        const double dn = loss_and_grad(net, b.t, b.x, b.target, weighted).loss;
        p = p0;
        const double fd = (up - dn) / (2.0 * h);
        const double an = param_ref(g, i);
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}));
      }
    }
    CHECK(worst < 1e-5);
  }

  TEST_CASE("duplicating the batch leaves loss and gradients unchanged") {
    const ScoreNetSpec net = random_net({6}, Activation::silu, OutputScaling::sigma, 7);
    const Batch b = random_batch(5, 7);
    Batch bb{b.t, MatrixXd(1, 10), MatrixXd(1, 10)};
    bb.t.insert(bb.t.end(), b.t.begin(), b.t.end());
    bb.x << b.x, b.x;
    bb.target << b.target, b.target;
    const LossGrad a = loss_and_grad(net, b.t, b.x, b.target);
    const LossGrad c = loss_and_grad(net, bb.t, bb.x, bb.target);
    CHECK(c.loss == doctest::Approx(a.loss).epsilon(1e-14));
    MlpParams ga = a.grads, gc = c.grads;
    for (std::size_t i = 0; i < ga.parameter_count(); ++i)
      CHECK(param_ref(gc, i) == doctest::Approx(param_ref(ga, i)).epsilon(1e-12));
  }

  TEST_CASE("errors") {
    const ScoreNetSpec net = random_net({4}, Activation::silu, OutputScaling::direct, 8);
    CHECK_THROWS_AS(loss_and_grad(net, {}, MatrixXd(1, 0), MatrixXd(1, 0)), ArgumentError);
    Batch b = random_batch(3, 8);
    b.target(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(loss_and_grad(net, b.t, b.x, b.target), NumericalError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("zero iterations return the initial parameters") {
    Dataset ds{MatrixXd::Constant(1, 1, 0.5), ""};
    TrainConfig cfg;
    cfg.n_iterations = 0;
    cfg.hidden = {16};
    const auto init = init_score_net(1, NoiseSchedule::standard(), cfg);
    const auto res = train_score(ds, NoiseSchedule::standard(), cfg);
    CHECK(res.net.params == init.params);
    CHECK(res.loss_history.empty());
  }

  TEST_CASE("invalid configuration") {
    Dataset ds{MatrixXd::Constant(1, 1, 0.5), ""};
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(train_score(ds, NoiseSchedule::standard(), cfg), ConfigError);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train_score(ds, NoiseSchedule::standard(), cfg), ConfigError);
    CHECK_THROWS_AS(train_score(Dataset{MatrixXd(1, 0), ""}, NoiseSchedule::standard(), TrainConfig{}), ArgumentError);
  }

  TEST_CASE("fixed seed gives identical loss history for any thread count") {
    Dataset ds{MatrixXd(1, 3), ""};
    ds.samples << -1.0, 0.2, 1.0;
    TrainConfig cfg;
    cfg.n_iterations = 40;
    cfg.batch_size = 70;
    cfg.hidden = {16, 16};
    cfg.seed = 11;
    set_thread_count(1);
    const auto a = train_score(ds, NoiseSchedule::standard(), cfg);
    set_thread_count(3);
    const auto b = train_score(ds, NoiseSchedule::standard(), cfg);
    set_thread_count(0);
    CHECK(a.loss_history == b.loss_history);
    CHECK(a.net.params == b.net.params);
    cfg.seed = 12;
    CHECK(train_score(ds, NoiseSchedule::standard(), cfg).loss_history != a.loss_history);
  }

  TEST_CASE("single Gaussian: trained net approximates the exact score") {
    const double mu = 0.5;
    Dataset ds{MatrixXd::Constant(1, 1, mu), ""};
    TrainConfig cfg;
    cfg.n_iterations = 5000;
    cfg.hidden = {64, 64};
    cfg.output = OutputScaling::denoiser;
    cfg.seed = 21;
    const auto res = train_score(ds, NoiseSchedule::standard(), cfg);

    Rng rng(99);
    double num = 0.0, den = 0.0;
    for (int k = 0; k < 4000; ++k) {
      const double t = rng.uniform(cfg.t_min, 1.0);
      const double a = std::exp(-0.5 * std_B(t));
      const double x = a * mu + std::sqrt(1.0 - a * a) * rng.normal();
      const double exact = single_gaussian_score(t, x, mu);
      const double err = forward_score(res.net, t, VectorXd::Constant(1, x))[0] - exact;
      num += err * err;
      den += exact * exact;
    }
    const double rel = std::sqrt(num / den);
    MESSAGE("relative L2 score error " << rel);
    CHECK(rel < 0.1);

    auto smoothed = [&](std::size_t upto) {
      double ema = res.loss_history[0];
      for (std::size_t i = 1; i <= upto; ++i) ema = 0.99 * ema + 0.01 * res.loss_history[i];
      return ema;
    };
    CHECK(smoothed(4999) < smoothed(100));
  }

  TEST_CASE("sigma-scaled net stays bounded near t_min") {
    const double mu = 0.5;
    Dataset ds{MatrixXd::Constant(1, 1, mu), ""};
    TrainConfig cfg;
    cfg.n_iterations = 2000;
    cfg.hidden = {32, 32};
    cfg.output = OutputScaling::sigma;
    cfg.seed = 22;
    const auto res = train_score(ds, NoiseSchedule::standard(), cfg);
    Rng rng(98);
    double max_scaled = 0.0;
    for (double t : {1e-3, 2e-3, 5e-3}) {
      const double a = std::exp(-0.5 * std_B(t)), s = std::sqrt(1.0 - a * a);
      for (int k = 0; k < 200; ++k) {
        const double x = a * mu + s * rng.normal();
        max_scaled = std::max(max_scaled, std::abs(s * forward_score(res.net, t, VectorXd::Constant(1, x))[0]));
      }
    }
    MESSAGE("max |sigma_t * score| " << max_scaled);
    CHECK(std::isfinite(max_scaled));
    CHECK(max_scaled < 10.0);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "lgdf_test_ckpt";
    std::filesystem::create_directories(dir);
    ScoreNetSpec net = random_net({7, 3}, Activation::tanh, OutputScaling::sigma, 31);
    net.schedule = NoiseSchedule::constant(2.0, 3.0);
    write_score_net(dir / "net.bin", net);
    const ScoreNetSpec back = read_score_net(dir / "net.bin");
    CHECK(back.params == net.params);
    CHECK(back.embedding == net.embedding);
    CHECK(back.output == OutputScaling::sigma);
    CHECK(back.schedule.kind() == diffusion::ScheduleKind::constant);
    CHECK(back.schedule.horizon() == 3.0);

    // first weight is stored right after the header
    io::BinaryReader r(dir / "net.bin");
    r.expect_magic();
    CHECK(r.u32() == 1);
    CHECK(r.u32() == 3);
    CHECK(r.u32() == 7);
    CHECK(r.u32() == 7);
    for (int k = 0; k < 4; ++k) r.u32();
    CHECK(r.f64() == net.params.layers[0].weight(0, 0));
    CHECK(r.f64() == net.params.layers[0].weight(0, 1));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("corrupt files") {
    const auto path = std::filesystem::temp_directory_path() / "lgdf_test_bad.bin";
    {
      std::ofstream out(path, std::ios::binary);
      out << "NOPE0000";
    }
    CHECK_THROWS_AS(read_params(path), IoError);
    CHECK_THROWS_AS(read_params(path.string() + ".missing"), IoError);
    std::filesystem::remove(path);
  }
}
