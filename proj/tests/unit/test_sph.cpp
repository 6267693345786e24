#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"
#include "lgdf/sph/fields.hpp"
#include "lgdf/sph/kernel.hpp"
#include "lgdf/sph/sph.hpp"
#include "lgdf/sph/sph_io.hpp"

using namespace lgdf;
using namespace lgdf::sph;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

constexpr double pi = std::numbers::pi;

// Composite Simpson on [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

SphParams lattice_params(int dims, std::size_t n_side, double h_over_dx) {
  SphParams p;
  p.dims = dims;
  p.n_particles = dims == 2 ? n_side * n_side : n_side * n_side * n_side;
  p.box_L = 1.0;
  p.h = h_over_dx / static_cast<double>(n_side);
  p.sound_c = 10.0;
  p.dt = 0.1 * p.h / p.sound_c;
  return p;
}

ParticleSet random_particles(const SphParams& p, std::uint64_t seed, double v_scale) {
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(p.n_particles);
  ParticleSet s{MatrixXd(p.dims, n), MatrixXd(p.dims, n), VectorXd::Constant(n, p.rho0)};
  for (Eigen::Index j = 0; j < n; ++j)
    for (int k = 0; k < p.dims; ++k) {
      s.positions(k, j) = rng.uniform(0.0, p.box_L);
      s.velocities(k, j) = v_scale * rng.normal();
    }
  return s;
}

bool interior(const ParticleSet& s, std::size_t i, double margin) {
  for (int k = 0; k < s.dims(); ++k) {
    const double x = s.positions(k, static_cast<Eigen::Index>(i));
    if (x < margin || x > 1.0 - margin) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("kernel") {
  TEST_CASE("compact support and central values") {
    for (int d : {1, 2, 3}) {
      CHECK(kernel_w(0.4, 0.2, d) == 0.0);
      CHECK(kernel_w(0.5, 0.2, d) == 0.0);
    }
    CHECK(kernel_w(0.0, 0.5, 3) == doctest::Approx(1.0 / (pi * 0.125)).epsilon(1e-15));
    CHECK(kernel_w(0.0, 0.5, 2) == doctest::Approx(10.0 / (7.0 * pi * 0.25)).epsilon(1e-15));
    CHECK(kernel_w(0.0, 0.5, 1) == doctest::Approx(2.0 / 3.0 / 0.5).epsilon(1e-15));
  }

  TEST_CASE("integrates to one") {
    const double h = 0.37;
    auto radial = [&](int d) {
      // surface measure of the unit sphere in d dimensions
      const double s = d == 1 ? 2.0 : (d == 2 ? 2.0 * pi : 4.0 * pi);
      auto f = [&](double r) { return s * std::pow(r, d - 1) * kernel_w(r, h, d); };
      return simpson(f, 0.0, h, 2000) + simpson(f, h, 2.0 * h, 2000);
    };
    for (int d : {1, 2, 3}) CHECK(std::abs(radial(d) - 1.0) < 1e-6);

    // 2D Cartesian quadrature as a second, coordinate-based check
    const int n = 800;
    const double a = 2.0 * h, step = 2.0 * a / n;
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double x = -a + (i + 0.5) * step, y = -a + (j + 0.5) * step;
        total += kernel_w(std::hypot(x, y), h, 2) * step * step;
      }
    CHECK(std::abs(total - 1.0) < 1e-4);
  }

  TEST_CASE("gradient matches finite differences") {
    Rng rng(1);
    const double h = 0.3, eps = 1e-6;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const int d = 2 + trial % 2;
      VectorXd r(d);
      for (int k = 0; k < d; ++k) r[k] = rng.uniform(-0.6, 0.6);
      if (r.norm() >= 2 * h || r.norm() < 1e-3) continue;
      if (std::abs(r.norm() - h) < 1e-4) continue;
      const VectorXd g = kernel_grad(r, h);
      for (int k = 0; k < d; ++k) {
        VectorXd rp = r, rm = r;
        rp[k] += eps;
        rm[k] -= eps;
        const double fd = (kernel_w(rp.norm(), h, d) - kernel_w(rm.norm(), h, d)) / (2 * eps);
        worst = std::max(worst, std::abs(g[k] - fd) / std::max(std::abs(fd), 1e-2 * g.norm()));
      }
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("gradient at the origin and antisymmetry") {
    CHECK(kernel_grad(VectorXd::Zero(3), 0.2).norm() == 0.0);
    VectorXd r(3);
    r << 0.1, -0.05, 0.02;
    CHECK(kernel_grad(-r, 0.2) == -kernel_grad(r, 0.2));
  }

  TEST_CASE("invalid arguments") {
    CHECK_THROWS_AS(kernel_w(0.1, 0.0, 2), ArgumentError);
    CHECK_THROWS_AS(kernel_w(0.1, -1.0, 3), ArgumentError);
    CHECK_THROWS_AS(kernel_grad(VectorXd::Ones(2), 0.0), ArgumentError);
    CHECK_THROWS_AS(kernel_w(-0.1, 1.0, 2), ArgumentError);
  }
}

TEST_SUITE("density and pressure") {
  TEST_CASE("isolated and non-overlapping particles see only themselves") {
    SphParams p;
    p.dims = 2;
    p.h = 0.05;
    p.mass = 0.3;
    ParticleSet s{MatrixXd(2, 2), MatrixXd::Zero(2, 2), VectorXd::Ones(2)};
    s.positions << 0.2, 0.6, 0.5, 0.5;
    const auto nl = find_neighbors_brute(s, p);
    const VectorXd rho = density_summation(s, p, nl);
    CHECK(rho[0] == doctest::Approx(0.3 * kernel_w(0.0, 0.05, 2)).epsilon(1e-15));
    CHECK(rho[1] == rho[0]);

    ParticleSet one{MatrixXd::Constant(3, 1, 0.5), MatrixXd::Zero(3, 1), VectorXd::Ones(1)};
    p.dims = 3;
    CHECK(density_summation(one, p, find_neighbors_brute(one, p))[0] ==
          doctest::Approx(0.3 * kernel_w(0.0, 0.05, 3)).epsilon(1e-15));
  }

  TEST_CASE("uniform lattice reproduces rho0") {
    for (auto [dims, side, hdx] : {std::tuple{2, std::size_t{64}, 1.3}, std::tuple{3, std::size_t{16}, 1.15}}) {
      SphParams p = lattice_params(dims, side, hdx);
      p.rho0 = 2.5;
      const ParticleSet s = make_lattice(p);
      const auto nl = find_neighbors(s, p, CellGrid(s.positions, p.box_L, p.support()));
      const VectorXd rho = density_summation(s, p, nl);
      const double dev = (rho.array() / p.rho0 - 1.0).abs().maxCoeff();
      MESSAGE(dims << "D lattice: " << nl.count(0) << " neighbours, max density deviation " << dev);
      CHECK(dev < 0.01);
      CHECK((rho.array() > 0.0).all());
    }
  }

  TEST_CASE("equation of state") {
    SphParams p;
    p.rho0 = 1000.0;
    p.sound_c = 20.0;
    p.gamma = 7.0;
    CHECK(eos_pressure(1000.0, p) == 0.0);
    const double eps = 1e-3;
    CHECK(eos_pressure(1000.0 * (1 + eps), p) == doctest::Approx(400.0 * 1000.0 * eps).epsilon(0.005));
    p.gamma = 1.0;
    CHECK(eos_pressure(1010.0, p) == doctest::Approx(400.0 * 10.0).epsilon(1e-12));
    CHECK_THROWS_AS(eos_pressure(0.0, p), ArgumentError);
    CHECK_THROWS_AS(eos_pressure(-1.0, p), ArgumentError);
  }

  TEST_CASE("internal energy derivative is P / rho^2") {
    for (double g : {1.0, 1.4, 7.0}) {
      SphParams p;
      p.rho0 = 1.3;
      p.sound_c = 3.0;
      p.gamma = g;
      CHECK(eos_internal_energy(p.rho0, p) == doctest::Approx(0.0).scale(1.0));
      for (double rho : {1.1, 1.3, 1.45}) {
        const double h = 1e-6;
        const double fd = (eos_internal_energy(rho + h, p) - eos_internal_energy(rho - h, p)) / (2 * h);
        const double exact = eos_pressure(rho, p) / (rho * rho);
        CHECK(std::abs(fd - exact) < 1e-6 * (1.0 + std::abs(exact)));
      }
    }
  }
}

TEST_SUITE("viscosity") {
  SphParams params() {
    SphParams p;
    p.h = 0.1;
    p.sound_c = 5.0;
    p.alpha_visc = 1.0;
    p.beta_visc = 2.0;
    return p;
  }

  TEST_CASE("receding and tangential pairs") {
    const auto p = params();
    CHECK(artificial_viscosity({0.05, 0, 0}, {1.0, 0, 0}, 1.0, 1.0, p) == 0.0);
    CHECK(artificial_viscosity({0.05, 0, 0}, {0.0, 1.0, 0}, 1.0, 1.0, p) == 0.0);
  }

  TEST_CASE("head-on approach by hand") {
    const auto p = params();
    // x_ij = (0.1, 0), v_ij = (-2, 0): v.x = -0.2, |x|^2 + 0.01 h^2 = 0.0101
    const double mu = 0.1 * -0.2 / 0.0101;
    const double expected = (-1.0 * 5.0 * mu + 2.0 * mu * mu) / 1.5;
    const double pi_ij = artificial_viscosity({0.1, 0, 0}, {-2.0, 0, 0}, 1.0, 2.0, p);
    CHECK(pi_ij == doctest::Approx(expected).epsilon(1e-14));
    CHECK(pi_ij > 0.0);
    CHECK(artificial_viscosity({-0.1, 0, 0}, {2.0, 0, 0}, 2.0, 1.0, p) == pi_ij);
  }
}

TEST_SUITE("acceleration") {
  TEST_CASE("uniform lattice at rest feels no force") {
    SphParams p = lattice_params(2, 32, 1.3);
    const ParticleSet s0 = make_lattice(p);
    const Simulation sim(p, s0, {}, 1);
    const double amax = sim.accelerations().cwiseAbs().maxCoeff();
    CHECK(amax < 1e-10 * p.sound_c * p.sound_c / p.h);
  }

  TEST_CASE("two particles exchange opposite forces") {
    SphParams p;
    p.dims = 3;
    p.h = 0.1;
    ParticleSet s{MatrixXd(3, 2), MatrixXd(3, 2), VectorXd(2)};
    s.positions << 0.5, 0.58, 0.5, 0.53, 0.5, 0.47;
    s.velocities << 0.3, -0.2, 0.1, 0.4, 0.0, -0.1;
    const auto nl = find_neighbors_brute(s, p);
    s.densities = density_summation(s, p, nl);
    s.densities[1] *= 1.1;
    const Forcing none({}, 3, p.box_L, 0);
    const MatrixXd a = acceleration(s, p, none, nl);
    CHECK(a.col(0).norm() > 0.0);
    CHECK((p.mass * a.col(0)) == (-p.mass * a.col(1)));
  }

  TEST_CASE("forcing alone") {
    SphParams p;
    p.dims = 2;
    p.h = 0.05;
    ParticleSet s{MatrixXd(2, 1), MatrixXd::Zero(2, 1), VectorXd::Ones(1)};
    s.positions << 0.3, 0.7;
    ForcingSpec f;
    f.kind = ForcingKind::taylor_green;
    f.amplitude = 0.8;
    const Forcing tg(f, 2, 1.0, 0);
    const auto nl = find_neighbors_brute(s, p);
    s.densities = density_summation(s, p, nl);
    const MatrixXd a = acceleration(s, p, tg, nl);
    const double k = 2 * pi;
    CHECK(a(0, 0) == doctest::Approx(0.8 * std::sin(k * 0.3) * std::cos(k * 0.7)).epsilon(1e-15));
    CHECK(a(1, 0) == doctest::Approx(-0.8 * std::cos(k * 0.3) * std::sin(k * 0.7)).epsilon(1e-15));
  }

  TEST_CASE("cell list equals brute force") {
    for (int dims : {2, 3}) {
      SphParams p;
      p.dims = dims;
      p.n_particles = 512;
      p.h = dims == 2 ? 0.03 : 0.08;
      p.mass = 1.0 / 512;
      ParticleSet s = random_particles(p, 7 + dims, 0.5);
      const auto nb = find_neighbors_brute(s, p);
      const auto nc = find_neighbors(s, p, CellGrid(s.positions, p.box_L, p.support()));
      REQUIRE(nb.items.size() == nc.items.size());
      s.densities = density_summation(s, p, nb);
      CHECK(density_summation(s, p, nc) == s.densities);
      const Forcing none({}, dims, 1.0, 0);
      const MatrixXd ab = acceleration(s, p, none, nb);
      const MatrixXd ac = acceleration(s, p, none, nc);
      CHECK((ab - ac).cwiseAbs().maxCoeff() <= 1e-14 * ab.cwiseAbs().maxCoeff());
    }
  }

  TEST_CASE("small box where neighbouring cells coincide") {
    SphParams p;
    p.dims = 2;
    p.n_particles = 60;
    p.h = 0.24;
    ParticleSet s = random_particles(p, 3, 0.1);
    const auto nb = find_neighbors_brute(s, p);
    const auto nc = find_neighbors(s, p, CellGrid(s.positions, p.box_L, p.support()));
    CHECK(nb.offsets == nc.offsets);
    for (std::size_t k = 0; k < nb.items.size(); ++k) CHECK(nb.items[k].j == nc.items[k].j);
  }
}

TEST_SUITE("integration") {
  TEST_CASE("lattice at rest stays put") {
    SphParams p = lattice_params(2, 24, 1.3);
    const ParticleSet s0 = make_lattice(p);
    Simulation sim(p, s0, {}, 1);
    sim.run(50);
    MatrixXd d = sim.particles().positions - s0.positions;
    for (double& v : d.reshaped()) v -= p.box_L * std::round(v / p.box_L);
    CHECK(d.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(sim.particles().velocities.cwiseAbs().maxCoeff() < 1e-10);
  }

  TEST_CASE("free particle under uniform forcing") {
    SphParams p;
    p.dims = 2;
    p.h = 0.05;
    p.dt = 0.25 * 0.25 * 0.05 / (p.sound_c + 10.0);
    p.dt = std::ldexp(1.0, -12);
    ParticleSet s{MatrixXd::Constant(2, 1, 0.5), MatrixXd::Zero(2, 1), VectorXd::Ones(1)};
    ForcingSpec f;
    f.kind = ForcingKind::uniform;
    f.amplitude = 0.5;
    Simulation sim(p, s, f, 1);
    sim.run(100);
    CHECK(sim.particles().velocities(0, 0) == 0.5 * 100 * p.dt);
    CHECK(sim.particles().velocities(1, 0) == 0.0);
  }

  TEST_CASE("momentum is conserved without forcing") {
    SphParams p = lattice_params(2, 20, 1.3);
    ParticleSet s = make_lattice(p);
    Rng rng(5);
    for (double& v : s.velocities.reshaped()) v = 0.3 * rng.normal();
    s.velocities.colwise() -= s.velocities.rowwise().mean();
    for (double& x : s.positions.reshaped()) x += 0.1 * p.h * rng.normal();
    Simulation sim(p, s, {}, 1);
    const double scale = p.mass * p.sound_c * p.n_particles;
    VectorXd prev = sim.total_momentum();
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      sim.step();
      worst = std::max(worst, (sim.total_momentum() - prev).norm() / scale);
      prev = sim.total_momentum();
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("Galilean boost leaves accelerations unchanged") {
    SphParams p = lattice_params(2, 16, 1.3);
    ParticleSet s = make_lattice(p);
    Rng rng(6);
    // dyadic velocities so that adding the boost is exact
    for (double& v : s.velocities.reshaped()) v = std::ldexp(static_cast<double>(rng.below(64)) - 32.0, -6);
    for (double& x : s.positions.reshaped()) x += 0.1 * p.h * rng.normal();
    const Simulation a(p, s, {}, 1);
    ParticleSet boosted = s;
    boosted.velocities.row(0).array() += 0.75;
    boosted.velocities.row(1).array() -= 1.5;
    const Simulation b(p, boosted, {}, 1);
    CHECK(a.accelerations() == b.accelerations());
  }

  TEST_CASE("results do not depend on the worker count") {
    SphParams p = lattice_params(2, 16, 1.3);
    ParticleSet s = make_lattice(p);
    Rng rng(8);
    for (double& v : s.velocities.reshaped()) v = 0.2 * rng.normal();
    ForcingSpec f;
    f.kind = ForcingKind::stochastic;
    f.amplitude = 0.5;
    set_thread_count(1);
    Simulation a(p, s, f, 3);
    a.run(20);
    set_thread_count(4);
    Simulation b(p, s, f, 3);
    b.run(20);
    set_thread_count(0);
    CHECK(a.particles().positions == b.particles().positions);
    CHECK(a.particles().velocities == b.particles().velocities);
  }

  TEST_CASE("viscous decay does not gain energy") {
    SphParams p = lattice_params(2, 32, 1.3);
    ParticleSet s = make_lattice(p);
    const double k = 2 * pi, u0 = 0.5;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(s.size()); ++j) {
      const double x = s.positions(0, j), y = s.positions(1, j);
      s.velocities(0, j) = u0 * std::sin(k * x) * std::cos(k * y);
      s.velocities(1, j) = -u0 * std::cos(k * x) * std::sin(k * y);
    }
    p.dt = 0.2 * p.h / (p.sound_c + u0);
    Simulation sim(p, s, {}, 1);
    const double eddy = 1.0 / u0;
    const int steps_per_check = std::max(1, static_cast<int>(0.05 * eddy / p.dt));
    double prev = sim.kinetic_energy() + sim.internal_energy();
    const double e0 = prev;
    for (int c = 0; c < 10; ++c) {
      sim.run(static_cast<std::uint64_t>(steps_per_check));
      const double e = sim.kinetic_energy() + sim.internal_energy();
      CHECK(e <= prev + 1e-3 * e0);
      prev = e;
    }
    CHECK(prev < e0);
  }

  TEST_CASE("CFL violation") {
    SphParams p = lattice_params(2, 8, 1.3);
    p.dt = p.h / p.sound_c;
    Simulation warn(p, make_lattice(p), {}, 1);
    warn.step();
    CHECK(warn.cfl_violations() == 1);
    Simulation strict(p, make_lattice(p), {}, 1, CflPolicy{0.25, true});
    CHECK_THROWS_AS(strict.step(), NumericalError);
  }

  TEST_CASE("invalid parameters") {
    SphParams p = lattice_params(2, 8, 1.3);
    p.box_L = 3.0 * p.h;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = lattice_params(2, 8, 1.3);
    p.gamma = 0.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = lattice_params(2, 8, 1.3);
    p.n_particles = 10;
    CHECK_THROWS_AS(make_lattice(p), ConfigError);
    ForcingSpec f;
    f.amplitude = -1.0;
    CHECK_THROWS_AS(f.validate(2), ConfigError);
  }

  TEST_CASE("stochastic forcing is solenoidal with the requested strength") {
    ForcingSpec f;
    f.kind = ForcingKind::stochastic;
    f.amplitude = 2.0;
    f.k_max_forced = 2;
    double mean_sq = 0.0, max_div = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      Forcing force(f, 2, 1.0, static_cast<std::uint64_t>(r));
      Rng rng(1000 + r);
      const Vector3d x(rng.uniform(), rng.uniform(), 0.0);
      mean_sq += force.at(x).squaredNorm() / reps;
      const double e = 1e-5;
      const double div = (force.at(x + Vector3d(e, 0, 0))[0] - force.at(x - Vector3d(e, 0, 0))[0] +
                          force.at(x + Vector3d(0, e, 0))[1] - force.at(x - Vector3d(0, e, 0))[1]) /
                         (2 * e);
      max_div = std::max(max_div, std::abs(div));
    }
    CHECK(max_div < 1e-6);
    // 200 draws of a sum of many modes: loose band around A^2
    CHECK(mean_sq == doctest::Approx(4.0).epsilon(0.3));
  }
}

TEST_SUITE("fields") {
  TEST_CASE("uniform translation") {
    SphParams p = lattice_params(2, 24, 1.3);
    ParticleSet s = make_lattice(p);
    s.velocities.row(0).setConstant(0.3);
    s.velocities.row(1).setConstant(-1.2);
    const Simulation sim(p, s, {}, 1);
    for (const auto& m : estimate_vgt(sim.particles(), p, sim.neighbors())) CHECK(m.cwiseAbs().maxCoeff() == 0.0);
    const VelocityGrid g = grid_interpolate(sim.particles(), p, 10);
    CHECK(g.empty.empty());
    CHECK((g.values.row(0).array() - 0.3).abs().maxCoeff() < 1e-14);
    CHECK((g.values.row(1).array() + 1.2).abs().maxCoeff() < 1e-14);
  }

  TEST_CASE("linear fields are recovered in the interior") {
    for (int dims : {2, 3}) {
      SphParams p = dims == 2 ? lattice_params(2, 40, 1.3) : lattice_params(3, 14, 1.2);
      ParticleSet s = make_lattice(p);
      MatrixXd A(dims, dims);
      if (dims == 2)
        A << 0.4, -1.1, 0.7, -0.4;
      else
        A << 0.5, 0.2, -0.3, 0.1, -0.8, 0.6, -0.4, 0.9, 0.3;
      s.velocities = A * s.positions;
      const auto nl = find_neighbors(s, p, CellGrid(s.positions, p.box_L, p.support()));
      s.densities = density_summation(s, p, nl);
      const auto m = estimate_vgt(s, p, nl);
      double worst = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (interior(s, i, 2.5 * p.h)) worst = std::max(worst, (m[i] - A).norm() / A.norm());
      MESSAGE(dims << "D worst relative VGT error " << worst);
      CHECK(worst < 0.05);

      const VelocityGrid g = grid_interpolate(s, p, 8);
      double gworst = 0.0;
      for (std::size_t idx = 0; idx < g.points(); ++idx) {
        const Vector3d x = g.point(idx);
        bool inside = true;
        for (int k = 0; k < dims; ++k) inside = inside && x[k] > 2.5 * p.h && x[k] < 1 - 2.5 * p.h;
        if (!inside) continue;
        const VectorXd exact = A * x.head(dims);
        gworst = std::max(gworst, (g.values.col(static_cast<Eigen::Index>(idx)) - exact).norm() / (A.norm() * 0.5));
      }
      CHECK(gworst < 0.05);
    }
  }

  TEST_CASE("rigid rotation") {
    SphParams p = lattice_params(2, 40, 1.3);
    ParticleSet s = make_lattice(p);
    const double omega = 0.7;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(s.size()); ++j) {
      s.velocities(0, j) = -omega * (s.positions(1, j) - 0.5);
      s.velocities(1, j) = omega * (s.positions(0, j) - 0.5);
    }
    const auto nl = find_neighbors(s, p, CellGrid(s.positions, p.box_L, p.support()));
    s.densities = density_summation(s, p, nl);
    const auto m = estimate_vgt(s, p, nl);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!interior(s, i, 2.5 * p.h)) continue;
      const MatrixXd skew = 0.5 * (m[i] - m[i].transpose());
      const MatrixXd sym = 0.5 * (m[i] + m[i].transpose());
      CHECK(skew(1, 0) == doctest::Approx(omega).epsilon(0.05));
      CHECK(sym.norm() < 0.05 * omega);
    }
  }

  TEST_CASE("single particle on a grid point") {
    SphParams p;
    p.dims = 2;
    p.h = 0.1;
    ParticleSet s{MatrixXd(2, 1), MatrixXd(2, 1), VectorXd::Ones(1)};
    s.positions << 0.125, 0.375;  // grid point (0, 1) of an 4 x 4 grid
    s.velocities << 2.0, -3.0;
    const VelocityGrid g = grid_interpolate(s, p, 4);
    CHECK(g.values(0, 4) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(g.values(1, 4) == doctest::Approx(-3.0).epsilon(1e-15));
    CHECK(!g.empty.empty());
    for (std::size_t idx : g.empty) CHECK(g.values.col(static_cast<Eigen::Index>(idx)).norm() == 0.0);
    CHECK_THROWS_AS(grid_interpolate(s, p, 3), ArgumentError);
  }

  TEST_CASE("spectrum of zero and of a single mode") {
    const int n = 16;
    CHECK(energy_spectrum(MatrixXd::Zero(2, n * n), n, 2) == std::vector<double>(energy_spectrum(MatrixXd::Zero(2, n * n), n, 2).size(), 0.0));
    for (int dims : {2, 3}) {
      const int total = dims == 2 ? n * n : n * n * n;
      const double A = 1.7;
      const int k0 = 3;
      MatrixXd u = MatrixXd::Zero(dims, total);
      VelocityGrid g{n, dims, 1.0, MatrixXd(), {}};
      for (int idx = 0; idx < total; ++idx) u(1, idx) = A * std::sin(2 * pi * k0 * g.point(idx)[0]);
      const auto e = energy_spectrum(u, n, dims);
      for (std::size_t k = 0; k < e.size(); ++k) {
        if (k == static_cast<std::size_t>(k0))
          CHECK(e[k] == doctest::Approx(A * A / 4).epsilon(1e-12));
        else
          CHECK(e[k] < 1e-25);
      }
    }
  }

  TEST_CASE("Parseval") {
    const int n = 12;
    Rng rng(9);
    MatrixXd u(3, n * n * n);
    for (double& v : u.reshaped()) v = rng.normal();
    const auto e = energy_spectrum(u, n, 3);
    double sum = 0.0;
    for (double v : e) sum += v;
    CHECK(sum == doctest::Approx(0.5 * u.colwise().squaredNorm().mean()).epsilon(1e-10));
  }
}

TEST_SUITE("sph io") {
  TEST_CASE("snapshot, grid and manifest round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "lgdf_test_sph";
    std::filesystem::create_directories(dir);
    SphParams p = lattice_params(2, 8, 1.3);
    ParticleSet s = make_lattice(p);
    Rng rng(2);
    for (double& v : s.velocities.reshaped()) v = rng.normal();
    const Snapshot snap{p, 0.125, s};
    write_snapshot(dir / "s.bin", snap);
    const Snapshot back = read_snapshot(dir / "s.bin");
    CHECK(back.t == 0.125);
    CHECK(back.params.h == p.h);
    CHECK(back.params.mass == p.mass);
    CHECK(back.particles.positions == s.positions);
    CHECK(back.particles.velocities == s.velocities);
    CHECK(back.particles.densities == s.densities);

    const VelocityGrid g = grid_interpolate(s, p, 4);
    write_grid(dir / "g.bin", snap, g);
    const GridFile gf = read_grid(dir / "g.bin");
    CHECK(gf.grid.n == 4);
    CHECK(gf.grid.values == g.values);
    CHECK_THROWS_AS(read_snapshot(dir / "g.bin"), IoError);

    const auto j = trajectory_manifest({{"s.bin", "g.bin", 0.125, 10}, {"t.bin", "", 0.25, 20}});
    const auto entries = parse_trajectory_manifest(j);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].grid == "g.bin");
    CHECK(entries[1].grid.empty());
    CHECK(entries[1].step == 20);
    std::filesystem::remove_all(dir);
  }
}
