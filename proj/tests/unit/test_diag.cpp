#include <doctest.h>

#include <cmath>

#include "lgdf/core/error.hpp"
#include "lgdf/core/rng.hpp"
#include "lgdf/diag/metrics.hpp"
#include "lgdf/diag/uturn.hpp"
#include "lgdf/diffusion/sde.hpp"
#include "oracles.hpp"

using namespace lgdf;
using namespace lgdf::diag;
using diffusion::Dataset;
using diffusion::MixtureMarginal;
using diffusion::NoiseSchedule;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double uniform_cdf(double x) { return std::clamp(x, 0.0, 1.0); }

Dataset pair_dataset(double m) {
  Dataset ds{MatrixXd::Zero(2, 2), ""};
  ds.samples(0, 0) = m;
  ds.samples(0, 1) = -m;
  return ds;
}

MatrixXd normal_ensemble(int d, int n, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  MatrixXd x(d, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < d; ++k) x(k, j) = rng.normal() + shift;
  return x;
}

}  // namespace

TEST_SUITE("ks") {
  TEST_CASE("samples at the reference quantiles") {
    for (int n : {1, 5, 40}) {
      std::vector<double> s;
      for (int i = 1; i <= n; ++i) s.push_back((i - 0.5) / n);
      CHECK(ks_statistic(s, uniform_cdf) == doctest::Approx(0.5 / n).epsilon(1e-12));
    }
  }

  TEST_CASE("single sample at the median") {
    CHECK(ks_statistic({0.0}, standard_normal_cdf) == doctest::Approx(0.5));
  }

  TEST_CASE("draws from the reference") {
    Rng rng(4);
    std::vector<double> s(10000);
    for (double& v : s) v = rng.normal();
    CHECK(ks_statistic(s, standard_normal_cdf) < 0.02);
    CHECK(ks_statistic(s, standard_normal_cdf) == doctest::Approx(oracle::ks_one_sample(s, oracle::normal_cdf)));
  }

  TEST_CASE("two-sample form") {
    Rng rng(5);
    std::vector<double> a(300), b(500);
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = 0.3 + rng.normal();
    CHECK(ks_statistic(a, a) == 0.0);
    CHECK(ks_statistic(a, b) == doctest::Approx(oracle::ks_two_sample(a, b)).epsilon(1e-14));
    std::vector<double> ties{1, 1, 2, 2, 2}, other{1, 2, 2, 3};
    CHECK(ks_statistic(ties, other) == doctest::Approx(oracle::ks_two_sample(ties, other)));
  }

  TEST_CASE("empty input") {
    CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, standard_normal_cdf), ArgumentError);
    CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, std::vector<double>{1.0}), ArgumentError);
  }
}

TEST_SUITE("distribution metrics") {
  TEST_CASE("identical ensembles") {
    const MatrixXd a = normal_ensemble(3, 500, 1);
    const auto m = distribution_metrics(a, a);
    CHECK(m.ks.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.mean_diff.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.cov_diff.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.kl.cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("independent draws of the same law") {
    const auto m = distribution_metrics(normal_ensemble(1, 10000, 2), normal_ensemble(1, 10000, 3));
    CHECK(m.ks[0] < 0.03);
    // the histogram estimate is biased upwards; its mean over pairs stays below 0.01
    double kl = 0.0;
    for (std::uint64_t s = 0; s < 20; ++s)
      kl += histogram_kl(coordinate(normal_ensemble(1, 10000, 100 + s), 0), coordinate(normal_ensemble(1, 10000, 200 + s), 0));
    CHECK(kl / 20 < 0.01);
  }

  TEST_CASE("shifted copy") {
    const MatrixXd a = normal_ensemble(2, 1000, 4);
    const MatrixXd b = a.array() + 1.0;
    const auto m = distribution_metrics(a, b);
    CHECK(m.mean_diff[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.mean_diff[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m.cov_diff.cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("histogram KL of unit-shifted Gaussians") {
    // KL(N(0,1) || N(1,1)) = 1/2
    std::vector<double> a = coordinate(normal_ensemble(1, 100000, 5), 0);
    std::vector<double> b = coordinate(normal_ensemble(1, 100000, 6, 1.0), 0);
    CHECK(histogram_kl(a, b) == doctest::Approx(0.5).epsilon(0.1));
  }

  TEST_CASE("dimension mismatch") {
    CHECK_THROWS_AS(distribution_metrics(MatrixXd::Zero(2, 3), MatrixXd::Zero(3, 3)), ArgumentError);
    CHECK_THROWS_AS(distribution_metrics(MatrixXd::Zero(2, 0), MatrixXd::Zero(2, 3)), ArgumentError);
  }
}

TEST_SUITE("autocorrelation") {
  const auto ou = NoiseSchedule::constant(1.0, 60.0);

  Dataset centred() {
    Dataset ds{MatrixXd(2, 4), ""};
    ds.samples << 1, -1, 1, -1, 1, -1, -1, 1;
    return ds;
  }

  TEST_CASE("one at t = 0") {
    const MixtureMarginal m(ou, centred());
    CHECK(forward_autocorrelation(m, {0.0}, 100, 1)[0] == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("matches exp(-t/2) for constant beta") {
    const MixtureMarginal m(ou, centred());
    const std::size_t n = 20000;
    const std::vector<double> grid{0.1, 0.5, 1.0, 2.0, 4.0};
    const auto c = forward_autocorrelation(m, grid, n, 2);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      // C = a + sigma sum(x0.z) / sum|x0|^2 with |x0|^2 = 2
      const double a = std::exp(-grid[k] / 2), se = std::sqrt((1 - a * a) / (2.0 * n));
      CHECK(std::abs(c[k] - a) < 3 * se);
    }
  }

  TEST_CASE("decorrelated when B >= 20 and non-increasing in t") {
    const MixtureMarginal m(ou, centred());
    const std::size_t n = 20000;
    std::vector<double> grid;
    for (int k = 0; k <= 25; ++k) grid.push_back(0.04 * k * k);
    const auto c = forward_autocorrelation(m, grid, n, 3);
    const double se_max = std::sqrt(1.0 / (2.0 * n));
    CHECK(std::abs(c.back()) < 3 * se_max);
    for (std::size_t k = 1; k < c.size(); ++k) CHECK(c[k] <= c[k - 1] + 3 * std::sqrt(2.0) * se_max);
  }

  TEST_CASE("degenerate dataset") {
    const MixtureMarginal m(ou, Dataset{MatrixXd::Zero(2, 3), ""});
    CHECK_THROWS_AS(forward_autocorrelation(m, {0.5}, 10, 1), DomainError);
    CHECK_THROWS_AS(forward_autocorrelation(MixtureMarginal(ou, centred()), {0.5}, 1, 1), ArgumentError);
  }
}

TEST_SUITE("weighted score norm") {
  TEST_CASE("single Gaussian at the origin gives one for every t") {
    const MixtureMarginal m(NoiseSchedule::standard(), Dataset{MatrixXd::Zero(1, 1), ""});
    for (double t : {0.002, 0.05, 0.3, 1.0}) {
      const Estimate e = weighted_score_norm(m, t, 20000, 7);
      // x^2 / sigma^2 is chi-squared with one degree of freedom: variance 2
      CHECK(std::abs(e.value - 1.0) < 3.0 * std::sqrt(2.0 / 20000));
      CHECK(e.std_error == doctest::Approx(std::sqrt(2.0 / 20000)).epsilon(0.1));
    }
  }

  TEST_CASE("spread-out samples: below one while components overlap, one at large t") {
    Dataset ds{MatrixXd(1, 5), ""};
    ds.samples << -2, -1, 0, 1, 2;
    const MixtureMarginal m(NoiseSchedule::standard(), ds);
    std::vector<double> v;
    for (double t : {0.01, 0.05, 0.15, 0.3, 1.0}) {
      const Estimate e = weighted_score_norm(m, t, 4000, 8);
      // Fisher information of a Gaussian convolution is at most d / sigma^2
      CHECK(e.value <= 1.0 + 3.0 * e.std_error);
      v.push_back(e.value);
    }
    CHECK(std::abs(v.front() - 1.0) < 0.1);
    CHECK(v[2] < 0.8);
    CHECK(std::abs(v.back() - 1.0) < 0.1);
    CHECK(v[2] < v.back());
  }

  TEST_CASE("t = 0 is singular") {
    const MixtureMarginal m(NoiseSchedule::standard(), Dataset{MatrixXd::Zero(1, 1), ""});
    CHECK_THROWS_AS(weighted_score_norm(m, 0.0, 10, 1), DomainError);
  }
}

TEST_SUITE("uturn time") {
  UturnScan quick_scan() {
    UturnScan s;
    for (int k = 1; k <= 20; ++k) s.t_grid.push_back(0.05 * k);
    s.n_paths = s.n_probe = s.n_ks = 2000;
    return s;
  }

  TEST_CASE("single sample at the origin passes early") {
    const MixtureMarginal m(NoiseSchedule::standard(), Dataset{MatrixXd::Zero(2, 1), ""});
    const auto r = recommend_uturn_time(m, {}, quick_scan(), 1);
    CHECK_FALSE(r.no_pass);
    CHECK(r.recommended_t <= 0.15);
    CHECK(std::isnan(r.autocorr[0]));
    for (double k : r.ks_to_gaussian) CHECK(k >= 0.0);
  }

  TEST_CASE("separated pair needs a later time") {
    const auto scan = quick_scan();
    const auto single = recommend_uturn_time(
        MixtureMarginal(NoiseSchedule::standard(), Dataset{MatrixXd::Zero(2, 1), ""}), {}, scan, 1);
    const auto pair = recommend_uturn_time(MixtureMarginal(NoiseSchedule::standard(), pair_dataset(3.0)), {}, scan, 1);
    CHECK_FALSE(pair.no_pass);
    CHECK(pair.recommended_t > single.recommended_t);
  }

  TEST_CASE("recommended time grows with the spread") {
    double prev = 0.0;
    for (double m : {0.25, 1.0, 2.0, 4.0}) {
      const auto r = recommend_uturn_time(MixtureMarginal(NoiseSchedule::standard(), pair_dataset(m)), {}, quick_scan(), 2);
      CHECK(r.recommended_t >= prev);
      prev = r.recommended_t;
    }
  }

  TEST_CASE("unreachable thresholds") {
    UturnThresholds th;
    th.autocorr_max = 0.0;
    const MixtureMarginal m(NoiseSchedule::standard(), pair_dataset(1.0));
    const auto r = recommend_uturn_time(m, th, quick_scan(), 3);
    CHECK(r.no_pass);
    CHECK(r.recommended_t == 1.0);
    const auto j = to_json(r);
    CHECK(j.at("no_pass").get<bool>());
    CHECK(j.at("t_candidates").size() == 20);
    CHECK(j.at("autocorr").size() == 20);
    CHECK(j.contains("weighted_score_norm"));
    CHECK(j.contains("ks_to_gaussian"));
  }
}

TEST_SUITE("uturn sampling") {
  const auto sched = NoiseSchedule::standard();

  TEST_CASE("early U-turn returns the originating sample") {
    Dataset ds{MatrixXd(2, 3), ""};
    ds.samples << 1.0, -1.0, 0.5, 0.0, 1.0, -1.5;
    const MixtureMarginal m(sched, ds);
    const diffusion::ReverseConfig cfg;
    const auto r = uturn_ensemble(m, m, cfg, cfg.t_min, 200, 9);
    for (int i = 0; i < 200; ++i) CHECK((r.outputs.col(i) - ds.samples.col(static_cast<Eigen::Index>(r.origins[i]))).norm() < 1e-2);
    const auto one = uturn_sample(m, m, cfg, cfg.t_min, 9, 17);
    CHECK(one.origin == r.origins[17]);
    CHECK((one.output - r.outputs.col(17)).norm() < 1e-12);
  }

  TEST_CASE("late U-turn on a symmetric pair forgets the origin") {
    const MixtureMarginal m(sched, pair_dataset(2.0));
    diffusion::ReverseConfig cfg;
    cfg.steps = 200;
    const int n = 2000;
    const auto r = uturn_ensemble(m, m, cfg, 1.0, n, 10);
    int other = 0;
    for (int i = 0; i < n; ++i) {
      const double origin_x = m.dataset().samples(0, static_cast<Eigen::Index>(r.origins[i]));
      if (r.outputs(0, i) * origin_x < 0) ++other;
    }
    const double frac = static_cast<double>(other) / n;
    CHECK(std::abs(frac - 0.5) < 3.0 * std::sqrt(0.25 / n));
  }

  TEST_CASE("round-trip distance grows with t_u") {
    Dataset ds{MatrixXd(1, 4), ""};
    ds.samples << -1.5, -0.5, 0.5, 1.5;
    const MixtureMarginal m(sched, ds);
    diffusion::ReverseConfig cfg;
    cfg.steps = 200;
    const int n = 1000;
    double prev_mean = 0.0, prev_se = 0.0;
    for (double tu : {0.01, 0.1, 0.3, 1.0}) {
      const auto r = uturn_ensemble(m, m, cfg, tu, n, 11);
      std::vector<double> dist(n);
      for (int i = 0; i < n; ++i) dist[i] = std::abs(r.outputs(0, i) - ds.samples(0, static_cast<Eigen::Index>(r.origins[i])));
      const auto ms = oracle::mean_se(dist);
      CHECK(ms.mean >= prev_mean - 3.0 * std::hypot(ms.se, prev_se));
      prev_mean = ms.mean;
      prev_se = ms.se;
    }
  }

  TEST_CASE("t_u outside (0, T]") {
    const MixtureMarginal m(sched, pair_dataset(1.0));
    CHECK_THROWS_AS(uturn_ensemble(m, m, {}, 0.0, 4, 1), DomainError);
    CHECK_THROWS_AS(uturn_ensemble(m, m, {}, 1.5, 4, 1), DomainError);
  }
}

TEST_SUITE("collapse") {
  TEST_CASE("trajectory ending on a training sample") {
    const Dataset ds = pair_dataset(1.0);
    std::vector<diffusion::PathState> traj{{1.0, VectorXd::Constant(2, 3.0)}, {0.5, VectorXd::Zero(2)},
                                           {0.0, ds.sample(1)}};
    const auto c = collapse_diagnostic(traj, ds);
    CHECK(c.memorized);
    CHECK(c.min_dist_to_trainset.back() == 0.0);
    REQUIRE(c.match_index.has_value());
    CHECK(*c.match_index == 1);
    CHECK(c.min_dist_to_trainset[1] == doctest::Approx(1.0));
    CHECK(to_json(c).at("match_index").get<int>() == 1);
  }

  TEST_CASE("trajectory staying away") {
    const Dataset ds = pair_dataset(1.0);
    std::vector<diffusion::PathState> traj{{1.0, VectorXd::Constant(2, 3.0)}, {0.0, VectorXd::Zero(2)}};
    const auto c = collapse_diagnostic(traj, ds);
    CHECK_FALSE(c.memorized);
    CHECK_FALSE(c.match_index.has_value());
    CHECK(to_json(c).at("match_index").is_null());
    CHECK_THROWS_AS(collapse_diagnostic({}, ds), ArgumentError);
  }

  TEST_CASE("exact-score reverse run on one sample collapses onto it") {
    Dataset ds{MatrixXd(2, 1), ""};
    ds.samples << 0.7, -0.3;
    const auto sched = NoiseSchedule::standard();
    const MixtureMarginal m(sched, ds);
    const auto traj = diffusion::reverse_sde_trajectory(m, sched, {}, 12);
    const auto c = collapse_diagnostic(traj, ds, 0.05);
    CHECK(c.memorized);
    CHECK(*c.match_index == 0);
    // distance shrinks over the final stretch
    const auto& d = c.min_dist_to_trainset;
    CHECK(d.back() <= d[d.size() - 50]);
  }
}
