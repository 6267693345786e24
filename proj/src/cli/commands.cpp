#include "lgdf/cli/commands.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#include "lgdf/cli/config.hpp"
#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"
#include "lgdf/core/rng.hpp"
#include "lgdf/diag/metrics.hpp"
#include "lgdf/diag/uturn.hpp"
#include "lgdf/diffusion/dataset.hpp"
#include "lgdf/diffusion/mixture.hpp"
#include "lgdf/diffusion/sde.hpp"
#include "lgdf/scalar/pairs.hpp"
#include "lgdf/score_net/checkpoint.hpp"
#include "lgdf/score_net/score_net.hpp"
#include "lgdf/score_net/train.hpp"
#include "lgdf/sph/fields.hpp"
#include "lgdf/sph/sph.hpp"
#include "lgdf/sph/sph_io.hpp"
#include "lgdf/vgt/algebra.hpp"
#include "lgdf/vgt/dynamics.hpp"

namespace lgdf::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using diffusion::Dataset;
using diffusion::MixtureMarginal;
using diffusion::NoiseSchedule;
using diffusion::Whitening;

namespace {

const std::set<std::string> kTopLevel{"seed", "threads",  "out",   "mixture", "sph",  "dataset", "diffusion",
                                      "score_net", "train", "sample", "uturn", "vgt", "scalar"};

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vec_json(const Eigen::VectorXd& v) {
  auto j = json::array();
  for (double x : v) j.push_back(num(x));
  return j;
}

json mat_json(const Eigen::MatrixXd& m) {
  auto j = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) j.push_back(vec_json(m.row(i).transpose()));
  return j;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

NoiseSchedule parse_schedule(Block b) {
  const auto kind = b.get<std::string>("kind", "linear");
  const double T = b.get<double>("T", 1.0);
  NoiseSchedule s = NoiseSchedule::standard();
  if (kind == "linear") {
    const double lo = b.get<double>("beta_min", 0.1), hi = b.get<double>("beta_max", 20.0);
    s = with_context(b.path(), [&] { return NoiseSchedule::linear(lo, hi, T); });
  } else if (kind == "constant") {
    const double beta = b.get<double>("beta", 1.0);
    s = with_context(b.path(), [&] { return NoiseSchedule::constant(beta, T); });
  } else {
    throw ConfigError(b.field("kind") + ": expected linear or constant, got '" + kind + "'");
  }
  b.finish();
  return s;
}

struct MixtureSpec {
  Eigen::MatrixXd means;  // d x K
  Eigen::VectorXd variance;
};

MixtureSpec parse_mixture(Block& b) {
  MixtureSpec m;
  m.means = b.matrix("means").transpose();
  const auto d = m.means.rows();
  m.variance = Eigen::VectorXd::Zero(d);
  if (b.has("variance")) {
    const auto& v = b.raw("variance");
    if (v.is_number()) {
      m.variance.setConstant(v.get<double>());
    } else {
      m.variance = b.vector("variance");
      if (m.variance.size() != d) throw ConfigError(b.field("variance") + ": needs one entry per coordinate");
    }
  }
  if (!(m.variance.array() >= 0.0).all() || !m.variance.allFinite())
    throw ConfigError(b.field("variance") + ": must be finite and non-negative");
  if (!m.means.allFinite()) throw ConfigError(b.field("means") + ": must be finite");
  return m;
}

MixtureMarginal mixture_marginal(const NoiseSchedule& s, const MixtureSpec& m) {
  Dataset means{m.means, "mixture means"};
  if ((m.variance.array() == 0.0).all()) return MixtureMarginal(s, means);
  return MixtureMarginal(s, means, m.variance);
}

MixtureMarginal dataset_marginal(const NoiseSchedule& s, Dataset data, const std::optional<Eigen::VectorXd>& var,
                                 const std::string& field) {
  if (!var) return MixtureMarginal(s, std::move(data));
  if (var->size() != data.dim()) throw ConfigError(field + ": needs one entry per dataset coordinate");
  return with_context(field, [&] { return MixtureMarginal(s, std::move(data), *var); });
}

json provenance_json(const Dataset& d) {
  return json::parse(d.provenance, nullptr, false);
}

Whitening whitening_of(const Dataset& d) {
  const json p = provenance_json(d);
  if (p.is_object() && p.contains("whitening") && p["whitening"].is_object()) {
    const auto mean = p["whitening"]["mean"].get<std::vector<double>>();
    const auto scale = p["whitening"]["scale"].get<std::vector<double>>();
    Whitening w;
    w.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    w.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    if (w.mean.size() != d.dim() || w.scale.size() != d.dim())
      throw IoError("dataset whitening record does not match its dimension");
    return w;
  }
  return Whitening::identity(d.dim());
}

Dataset load_dataset(const std::string& path) {
  Dataset d = diffusion::read_dataset(path);
  try {
    d.validate();
  } catch (const ArgumentError& e) {
    throw IoError(path + ": " + e.what());
  }
  return d;
}

// ---------------------------------------------------------------- gen-mixture

void cmd_gen_mixture(const RunContext& ctx, Block& root, RunManifest& man) {
  Block b = root.child("mixture");
  const MixtureSpec spec = parse_mixture(b);
  const auto S = b.require<std::size_t>("n_samples");
  b.finish();
  if (S < 1) throw ConfigError("mixture.n_samples: must be at least 1");

  const auto d = spec.means.rows();
  const auto K = static_cast<std::uint64_t>(spec.means.cols());
  const Eigen::VectorXd sd = spec.variance.cwiseSqrt();
  Dataset ds;
  ds.samples.resize(d, static_cast<Eigen::Index>(S));
  parallel_chunks(S, 256, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng rng(ctx.seed, i);
      const auto k = static_cast<Eigen::Index>(rng.below(K));
      for (Eigen::Index c = 0; c < d; ++c)
        ds.samples(c, static_cast<Eigen::Index>(i)) = spec.means(c, k) + sd[c] * rng.normal();
    }
  });
  ds.provenance =
      json{{"source", "gen-mixture"}, {"means", mat_json(spec.means.transpose())}, {"variance", vec_json(spec.variance)}}
          .dump();
  diffusion::write_dataset(ctx.out / "dataset.bin", ds);
  man.add_file(ctx.out, "dataset.bin");
  man.metrics = {{"n_samples", S}, {"dim", d}, {"sample_mean", vec_json(ds.samples.rowwise().mean())}};
}

// -------------------------------------------------------------------- sph-run

void cmd_sph_run(const RunContext& ctx, Block& root, RunManifest& man) {
  Block b = root.child("sph");
  sph::SphParams p;
  p.n_particles = b.require<std::size_t>("n_particles");
  p.dims = b.get<int>("dims", 2);
  p.box_L = b.get<double>("box_L", 1.0);
  if (p.dims != 2 && p.dims != 3) throw ConfigError("sph.dims: must be 2 or 3");
  if (b.has("h") && b.has("h_over_dx")) throw ConfigError("sph.h: give either h or h_over_dx, not both");
  const double n_side = std::round(std::pow(static_cast<double>(p.n_particles), 1.0 / p.dims));
  p.h = b.has("h") ? b.get<double>("h", 0.0) : b.get<double>("h_over_dx", 1.3) * p.box_L / std::max(n_side, 1.0);
  p.rho0 = b.get<double>("rho0", p.rho0);
  p.sound_c = b.get<double>("sound_c", p.sound_c);
  p.gamma = b.get<double>("gamma", p.gamma);
  p.alpha_visc = b.get<double>("alpha_visc", p.alpha_visc);
  p.beta_visc = b.get<double>("beta_visc", p.beta_visc);
  p.dt = b.get<double>("dt", p.dt);
  const auto steps = b.get<std::size_t>("steps", 0);
  const auto every = b.get<std::size_t>("snapshot_every", 0);
  const int grid_n = b.get<int>("grid_n", 0);
  const auto search_name = b.get<std::string>("neighbor_search", "cells");

  Block fb = b.child("forcing");
  sph::ForcingSpec forcing;
  forcing.kind = with_context("sph.forcing.kind", [&] { return sph::forcing_kind_from_string(fb.get<std::string>("kind", "none")); });
  forcing.amplitude = fb.get<double>("amplitude", 0.0);
  forcing.k_max_forced = fb.get<int>("k_max_forced", forcing.k_max_forced);
  forcing.ou_correlation_time = fb.get<double>("ou_correlation_time", forcing.ou_correlation_time);
  if (fb.has("direction")) {
    const Eigen::VectorXd dir = fb.vector("direction");
    if (dir.size() != p.dims) throw ConfigError("sph.forcing.direction: needs " + std::to_string(p.dims) + " entries");
    forcing.direction.setZero();
    forcing.direction.head(p.dims) = dir;
  }
  fb.finish();

  Block ib = b.child("initial_velocity");
  const auto init_kind = ib.get<std::string>("kind", "none");
  const double init_amp = ib.get<double>("amplitude", 0.0);
  ib.finish();
  if (init_kind != "none" && init_kind != "taylor_green" && init_kind != "random")
    throw ConfigError("sph.initial_velocity.kind: expected none, taylor_green or random");

  Block cb = b.child("cfl");
  sph::CflPolicy cfl;
  cfl.safety = cb.get<double>("safety", cfl.safety);
  cfl.abort = cb.get<bool>("abort", cfl.abort);
  cb.finish();
  b.finish();

  if (search_name != "cells" && search_name != "brute")
    throw ConfigError("sph.neighbor_search: expected cells or brute");
  if (grid_n != 0 && grid_n < 4) throw ConfigError("sph.grid_n: must be 0 or at least 4");
  if (!(cfl.safety > 0.0)) throw ConfigError("sph.cfl.safety: must be positive");
  sph::ParticleSet particles = with_context("sph", [&] { return sph::make_lattice(p); });
  with_context("sph", [&] { p.validate(); });
  with_context("sph", [&] { forcing.validate(p.dims); });

  const double k = 2.0 * std::numbers::pi / p.box_L;
  if (init_kind == "taylor_green") {
    for (Eigen::Index j = 0; j < particles.positions.cols(); ++j) {
      const double x = particles.positions(0, j), y = particles.positions(1, j);
      const double zf = p.dims == 3 ? std::cos(k * particles.positions(2, j)) : 1.0;
      particles.velocities(0, j) = init_amp * std::sin(k * x) * std::cos(k * y) * zf;
      particles.velocities(1, j) = -init_amp * std::cos(k * x) * std::sin(k * y) * zf;
    }
  } else if (init_kind == "random") {
    Rng rng(ctx.seed, 1);
    for (double& v : particles.velocities.reshaped()) v = init_amp * rng.normal();
    particles.velocities.colwise() -= particles.velocities.rowwise().mean();
  }

  sph::Simulation sim(p, particles, forcing, ctx.seed, cfl,
                      search_name == "cells" ? sph::NeighborSearch::cells : sph::NeighborSearch::brute);
  std::vector<sph::TrajectoryEntry> entries;
  json energies = json::array();
  auto snapshot = [&] {
    char name[64];
    std::snprintf(name, sizeof name, "snap_%06llu.bin", static_cast<unsigned long long>(sim.steps()));
    const sph::Snapshot snap{sim.params(), sim.time(), sim.particles()};
    sph::write_snapshot(ctx.out / name, snap);
    man.add_file(ctx.out, name);
    sph::TrajectoryEntry e{name, "", sim.time(), sim.steps()};
    if (grid_n > 0) {
      char gname[64];
      std::snprintf(gname, sizeof gname, "grid_%06llu.bin", static_cast<unsigned long long>(sim.steps()));
      sph::write_grid(ctx.out / gname, snap, sph::grid_interpolate(sim.particles(), sim.params(), grid_n));
      man.add_file(ctx.out, gname);
      e.grid = gname;
    }
    entries.push_back(e);
    energies.push_back({{"step", sim.steps()},
                        {"t", sim.time()},
                        {"kinetic_energy", sim.kinetic_energy()},
                        {"internal_energy", sim.internal_energy()}});
  };

  snapshot();
  for (std::size_t s = 1; s <= steps; ++s) {
    sim.step();
    if ((every > 0 && s % every == 0) || s == steps) snapshot();
  }
  write_json(ctx.out / "trajectory.json", sph::trajectory_manifest(entries));
  man.add_file(ctx.out, "trajectory.json");
  man.metrics = {{"params", sph::to_json(sim.params())},
                 {"snapshots", energies},
                 {"cfl_violations", sim.cfl_violations()},
                 {"steps", sim.steps()}};
}

// --------------------------------------------------------------- make-dataset

void cmd_make_dataset(const RunContext& ctx, Block& root, RunManifest& man) {
  Block b = root.child("dataset");
  const fs::path trajectory = b.require<std::string>("trajectory");
  const auto kind = b.get<std::string>("kind", "patches");
  const int grid_n = b.get<int>("grid_n", 32);
  const int patch = b.get<int>("patch", 16);
  const auto skip = b.get<std::size_t>("skip", 0);
  const bool whiten = b.get<bool>("whiten", true);
  b.finish();
  if (kind != "patches" && kind != "vgt_invariants") throw ConfigError("dataset.kind: expected patches or vgt_invariants");
  if (kind == "patches") {
    if (grid_n < 4) throw ConfigError("dataset.grid_n: must be at least 4");
    if (patch < 1 || grid_n % patch != 0) throw ConfigError("dataset.patch: must be positive and divide dataset.grid_n");
  }

  const auto entries = sph::parse_trajectory_manifest(read_json(trajectory));
  if (entries.size() <= skip)
    throw ArgumentError("dataset: insufficient snapshots (" + std::to_string(entries.size()) + " listed, skip " +
                        std::to_string(skip) + ")");
  const auto dir = trajectory.parent_path();

  std::vector<Eigen::VectorXd> rows;
  std::size_t per_snapshot = 0;
  int dims = 0;
  for (std::size_t e = skip; e < entries.size(); ++e) {
    const sph::Snapshot snap = sph::read_snapshot(dir / entries[e].snapshot);
    dims = snap.params.dims;
    const std::size_t before = rows.size();
    if (kind == "patches") {
      if (dims != 2) throw ConfigError("dataset.kind: patches need a 2D SPH run");
      const sph::VelocityGrid g = sph::grid_interpolate(snap.particles, snap.params, grid_n);
      const int per_side = grid_n / patch;
      const int p2 = patch * patch;
      for (int py = 0; py < per_side; ++py)
        for (int px = 0; px < per_side; ++px) {
          Eigen::VectorXd v(dims * p2);
          for (int c = 0; c < dims; ++c)
            for (int iy = 0; iy < patch; ++iy)
              for (int ix = 0; ix < patch; ++ix)
                v[c * p2 + iy * patch + ix] = g.values(c, (px * patch + ix) + grid_n * (py * patch + iy));
          rows.push_back(std::move(v));
        }
    } else {
      const auto& pr = snap.params;
      const auto nl = sph::find_neighbors(snap.particles, pr, sph::CellGrid(snap.particles.positions, pr.box_L, pr.support()));
      for (const auto& m : sph::estimate_vgt(snap.particles, pr, nl)) {
        vgt::Mat3 M = vgt::Mat3::Zero();
        M.topLeftCorner(dims, dims) = m;
        const auto l = vgt::invariants(vgt::split_sym_skew(M));
        rows.push_back(Eigen::Map<const Eigen::VectorXd>(l.data(), 5));
      }
    }
    per_snapshot = rows.size() - before;
  }

  Dataset ds;
  ds.samples.resize(rows.front().size(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) ds.samples.col(static_cast<Eigen::Index>(i)) = rows[i];
  json whitening = nullptr;
  if (whiten) {
    const Whitening w = with_context("dataset.whiten", [&] { return Whitening::fit(ds.samples); });
    ds.samples = w.apply(ds.samples);
    whitening = {{"mean", vec_json(w.mean)}, {"scale", vec_json(w.scale)}};
    write_json(ctx.out / "whitening.json", whitening);
  }
  const std::size_t n_snap = entries.size() - skip;
  ds.provenance = json{{"source", "make-dataset"},
                       {"kind", kind},
                       {"dims", dims},
                       {"grid_n", grid_n},
                       {"patch", patch},
                       {"snapshots", n_snap},
                       {"per_snapshot", per_snapshot},
                       {"whitening", whitening}}
                      .dump();
  diffusion::write_dataset(ctx.out / "dataset.bin", ds);
  man.add_file(ctx.out, "dataset.bin");
  if (whiten) man.add_file(ctx.out, "whitening.json");
  man.metrics = {{"n_samples", ds.count()}, {"dim", ds.dim()}, {"snapshots", n_snap}, {"per_snapshot", per_snapshot}};
}

// ---------------------------------------------------------------------- train

score_net::TrainConfig parse_train_config(Block b, const NoiseSchedule& schedule, std::uint64_t seed) {
  score_net::TrainConfig c;
  c.learning_rate = b.get<double>("learning_rate", c.learning_rate);
  c.beta1 = b.get<double>("beta1", c.beta1);
  c.beta2 = b.get<double>("beta2", c.beta2);
  c.epsilon = b.get<double>("epsilon", c.epsilon);
  c.batch_size = b.get<int>("batch_size", c.batch_size);
  c.n_iterations = b.get<long>("n_iterations", c.n_iterations);
  c.t_min = b.get<double>("t_min", c.t_min);
  c.weighted = b.get<bool>("weighted", c.weighted);
  c.hidden = b.get<std::vector<int>>("hidden", c.hidden);
  with_context(b.path(), [&] {
    c.output = score_net::output_scaling_from_string(b.get<std::string>("output", to_string(c.output)));
    c.target = score_net::score_target_from_string(b.get<std::string>("target", to_string(c.target)));
    c.activation = score_net::activation_from_string(b.get<std::string>("activation", to_string(c.activation)));
  });
  Block e = b.child("embedding");
  c.embedding.n_frequencies = e.get<int>("n_frequencies", c.embedding.n_frequencies);
  c.embedding.base_period = e.get<double>("base_period", c.embedding.base_period);
  e.finish();
  b.finish();
  c.seed = seed;
  with_context(b.path(), [&] { c.validate(schedule); });
  return c;
}

void cmd_train(const RunContext& ctx, Block& root, RunManifest& man) {
  Block t = root.child("train");
  const auto path = t.require<std::string>("dataset");
  const auto var = t.has("component_var") ? std::optional(t.vector("component_var")) : std::nullopt;
  t.finish();
  const NoiseSchedule schedule = parse_schedule(root.child("diffusion"));
  const auto cfg = parse_train_config(root.child("score_net"), schedule, ctx.seed);

  const Dataset data = load_dataset(path);
  const MixtureMarginal target = dataset_marginal(schedule, data, var, "train.component_var");
  const auto result = score_net::train_score(target, cfg);
  score_net::write_score_net(ctx.out / "score_net.bin", result.net);
  score_net::write_loss_csv(ctx.out / "loss.csv", result.loss_history);
  man.add_file(ctx.out, "score_net.bin");
  man.add_file(ctx.out, "score_net.bin.json");
  man.add_file(ctx.out, "loss.csv");

  const auto& h = result.loss_history;
  auto tail_mean = [&](bool head) {
    const std::size_t w = std::min<std::size_t>(100, h.size());
    double s = 0.0;
    for (std::size_t i = 0; i < w; ++i) s += head ? h[i] : h[h.size() - 1 - i];
    return w ? s / static_cast<double>(w) : std::nan("");
  };
  man.metrics = {{"iterations", h.size()},
                 {"dataset_size", data.count()},
                 {"initial_loss_mean100", num(tail_mean(true))},
                 {"final_loss_mean100", num(tail_mean(false))}};
}

// --------------------------------------------------------------------- sample

std::vector<double> mean_spectrum(const Eigen::MatrixXd& samples, int patch, int dims) {
  std::vector<double> acc;
  if (samples.cols() == 0) return acc;
  const int p2 = patch * patch;
  for (Eigen::Index j = 0; j < samples.cols(); ++j) {
    const Eigen::VectorXd col = samples.col(j);
    const Eigen::MatrixXd values = Eigen::Map<const Eigen::MatrixXd>(col.data(), p2, dims).transpose();
    const auto e = sph::energy_spectrum(values, patch, dims);
    if (acc.empty()) acc.assign(e.size(), 0.0);
    for (std::size_t k = 0; k < e.size(); ++k) acc[k] += e[k] / static_cast<double>(samples.cols());
  }
  return acc;
}

void cmd_sample(const RunContext& ctx, Block& root, RunManifest& man) {
  Block s = root.child("sample");
  const auto mode = s.get<std::string>("mode", "exact-score");
  const auto n = s.require<std::size_t>("n");
  diffusion::ReverseConfig rc;
  rc.steps = s.get<int>("steps", rc.steps);
  rc.t_min = s.get<double>("t_min", rc.t_min);
  rc.final_denoise = s.get<bool>("final_denoise", rc.final_denoise);
  const auto dataset_path = s.optional<std::string>("dataset");
  const auto target = s.get<std::string>("target", "dataset");
  const auto checkpoint = s.optional<std::string>("checkpoint");
  const auto t_u = s.optional<double>("uturn");
  const auto var = s.has("component_var") ? std::optional(s.vector("component_var")) : std::nullopt;
  Block cb = s.child("collapse");
  const auto n_collapse = cb.get<std::size_t>("n_trajectories", 4);
  const double eps = cb.get<double>("epsilon", 0.05);
  cb.finish();
  const auto spectra = s.optional<bool>("spectra");
  s.finish();

  if (mode != "exact-score" && mode != "checkpoint") throw ConfigError("sample.mode: expected exact-score or checkpoint");
  if (target != "dataset" && target != "mixture") throw ConfigError("sample.target: expected dataset or mixture");
  if (mode == "checkpoint" && !checkpoint) throw ConfigError("sample.checkpoint: required in checkpoint mode");
  if (mode == "exact-score" && target == "dataset" && !dataset_path)
    throw ConfigError("sample.dataset: required for the exact score of a dataset");
  if (t_u && mode == "checkpoint" && !dataset_path) throw ConfigError("sample.dataset: required for U-turns");
  if (!(eps > 0.0)) throw ConfigError("sample.collapse.epsilon: must be positive");

  std::optional<MixtureSpec> mix;
  if (mode == "exact-score" && target == "mixture") {
    Block mb = root.child("mixture");
    mix = parse_mixture(mb);
    mb.get<std::size_t>("n_samples", 0);
    mb.finish();
  }
  std::optional<NoiseSchedule> schedule;
  if (mode == "exact-score") schedule = parse_schedule(root.child("diffusion"));

  std::optional<Dataset> data;
  if (dataset_path) data = load_dataset(*dataset_path);
  std::optional<score_net::ScoreNetSpec> net;
  if (checkpoint) {
    net = score_net::read_score_net(*checkpoint);
    if (mode == "checkpoint") schedule = net->schedule;
  }
  with_context("sample", [&] { rc.validate(*schedule); });

  std::optional<MixtureMarginal> marginal;
  if (mix) marginal = mixture_marginal(*schedule, *mix);
  else if (data) marginal = dataset_marginal(*schedule, *data, var, "sample.component_var");

  std::unique_ptr<diffusion::ScoreModel> net_model;
  if (mode == "checkpoint") net_model = std::make_unique<score_net::NetScore>(*net);
  const diffusion::ScoreModel& model = net_model ? *net_model : static_cast<const diffusion::ScoreModel&>(*marginal);
  const int d = model.dim();
  if (data && data->dim() != d) throw ConfigError("sample.dataset: dimension differs from the model");

  const Whitening white = data ? whitening_of(*data) : Whitening::identity(d);
  json diag = {{"n_requested", n}, {"mode", mode}};

  Eigen::MatrixXd generated;
  if (t_u) {
    const auto r = with_context("sample.uturn", [&] { return diag::uturn_ensemble(*marginal, model, rc, *t_u, n, ctx.seed); });
    generated = r.outputs;
    double max_dist = 0.0, mean_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dist = (r.outputs.col(static_cast<Eigen::Index>(i)) - marginal->dataset().sample(r.origins[i])).norm();
      max_dist = std::max(max_dist, dist);
      mean_dist += dist / static_cast<double>(n);
    }
    diag["uturn"] = {{"t_u", *t_u}, {"max_origin_distance", num(n ? max_dist : 0.0)}, {"mean_origin_distance", num(mean_dist)}};
    diag["failures"] = json::array();
  } else {
    Eigen::MatrixXd start(d, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng(derive_seed(ctx.seed, 1), i);
      for (int c = 0; c < d; ++c) start(c, static_cast<Eigen::Index>(i)) = rng.normal();
    }
    const auto r = diffusion::reverse_from(model, *schedule, rc, start, schedule->horizon(), derive_seed(ctx.seed, 2),
                                           diffusion::FailurePolicy::record);
    auto failures = json::array();
    generated.resize(d, static_cast<Eigen::Index>(n - r.failed));
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!r.failures[i].empty()) {
        failures.push_back({{"index", i}, {"message", r.failures[i]}});
        continue;
      }
      generated.col(col++) = r.samples.col(static_cast<Eigen::Index>(i));
    }
    diag["failures"] = failures;
  }
  diag["n_generated"] = generated.cols();

  if (marginal && n_collapse > 0 && n > 0 && !t_u) {
    auto collapse = json::array();
    for (std::size_t i = 0; i < std::min(n, n_collapse); ++i) {
      try {
        const auto traj = diffusion::reverse_sde_trajectory(model, *schedule, rc, derive_seed(ctx.seed, 3), i);
        collapse.push_back(diag::to_json(diag::collapse_diagnostic(traj, marginal->dataset(), eps)));
      } catch (const NumericalError& e) {
        collapse.push_back({{"error", e.what()}});
      }
    }
    diag["collapse"] = collapse;
  }

  const Eigen::MatrixXd physical = generated.cols() > 0 ? white.invert(generated) : generated;
  if (data && physical.cols() >= 2) {
    const Eigen::MatrixXd gt = white.invert(data->samples);
    diag["metrics"] = diag::to_json(diag::distribution_metrics(gt, physical));
  }
  const json prov = data ? provenance_json(*data) : json();
  const bool is_patch = prov.is_object() && prov.value("kind", "") == "patches";
  if (spectra.value_or(is_patch)) {
    if (!is_patch) throw ConfigError("sample.spectra: the dataset does not hold velocity patches");
    const int patch = prov.at("patch").get<int>(), dims = prov.at("dims").get<int>();
    diag["spectra"] = {{"generated", mean_spectrum(physical, patch, dims)},
                       {"ground_truth", mean_spectrum(white.invert(data->samples), patch, dims)}};
  }

  Dataset out{physical, json{{"source", "sample"}, {"mode", mode}, {"uturn", t_u ? json(*t_u) : json(nullptr)}}.dump()};
  diffusion::write_dataset(ctx.out / "samples.bin", out);
  write_json(ctx.out / "diagnostics.json", diag);
  man.add_file(ctx.out, "samples.bin");
  man.add_file(ctx.out, "diagnostics.json");
  man.metrics = {{"n_generated", physical.cols()}, {"n_failed", diag["failures"].size()}};
  if (diag.contains("metrics")) man.metrics["max_ks"] = diag["metrics"]["max_ks"];
  if (diag.contains("uturn")) man.metrics["uturn"] = diag["uturn"];
}

// ----------------------------------------------------------------- uturn-scan

void cmd_uturn_scan(const RunContext& ctx, Block& root, RunManifest& man) {
  Block u = root.child("uturn");
  const auto dataset_path = u.optional<std::string>("dataset");
  const auto target = u.get<std::string>("target", "dataset");
  const auto var = u.has("component_var") ? std::optional(u.vector("component_var")) : std::nullopt;
  Block tb = u.child("thresholds");
  diag::UturnThresholds th;
  th.autocorr_max = tb.get<double>("autocorr_max", th.autocorr_max);
  th.ks_max = tb.get<double>("ks_max", th.ks_max);
  th.norm_band = tb.get<double>("norm_band", th.norm_band);
  tb.finish();
  diag::UturnScan scan;
  scan.t_grid = u.get<std::vector<double>>("t_grid", {});
  scan.t_min = u.get<double>("t_min", scan.t_min);
  scan.n_paths = u.get<std::size_t>("n_paths", scan.n_paths);
  scan.n_probe = u.get<std::size_t>("n_probe", scan.n_probe);
  scan.n_ks = u.get<std::size_t>("n_ks", scan.n_ks);
  u.finish();
  if (target != "dataset" && target != "mixture") throw ConfigError("uturn.target: expected dataset or mixture");
  if (target == "dataset" && !dataset_path) throw ConfigError("uturn.dataset: required");
  if (!(th.autocorr_max > 0.0)) throw ConfigError("uturn.thresholds.autocorr_max: must be positive");
  if (!(th.norm_band > 0.0)) throw ConfigError("uturn.thresholds.norm_band: must be positive");
  const NoiseSchedule schedule = parse_schedule(root.child("diffusion"));

  std::optional<MixtureMarginal> marginal;
  if (target == "mixture") {
    Block mb = root.child("mixture");
    const auto mix = parse_mixture(mb);
    mb.get<std::size_t>("n_samples", 0);
    mb.finish();
    marginal = mixture_marginal(schedule, mix);
  } else {
    marginal = dataset_marginal(schedule, load_dataset(*dataset_path), var, "uturn.component_var");
  }
  const auto report = with_context("uturn", [&] { return diag::recommend_uturn_time(*marginal, th, scan, ctx.seed); });
  write_json(ctx.out / "uturn_report.json", diag::to_json(report));
  man.add_file(ctx.out, "uturn_report.json");
  man.metrics = {{"recommended_t", report.recommended_t}, {"no_pass", report.no_pass}};
}

// ------------------------------------------------------------------------ vgt

vgt::Mat3 mat3(Block& b, const std::string& key) {
  const Eigen::MatrixXd m = b.matrix(key);
  if (m.rows() != 3 || m.cols() != 3) throw ConfigError(b.field(key) + ": expected a 3x3 matrix");
  return m;
}

std::optional<std::array<double, 2>> range(Block& b, const std::string& key) {
  if (!b.has(key)) return std::nullopt;
  const auto v = b.require<std::vector<double>>(key);
  if (v.size() != 2 || !(v[1] > v[0])) throw ConfigError(b.field(key) + ": expected [lo, hi] with hi > lo");
  return std::array{v[0], v[1]};
}

vgt::ReEnsembleConfig parse_re(Block b) {
  vgt::ReEnsembleConfig c;
  c.run.dt = b.get<double>("dt", c.run.dt);
  c.run.t_max = b.get<double>("t_max", c.run.t_max);
  c.run.integrator = with_context(b.field("integrator"), [&] {
    return vgt::integrator_from_string(b.get<std::string>("integrator", "rk4"));
  });
  c.run.blowup_norm = b.get<double>("blowup_norm", c.run.blowup_norm);
  c.run.record_every = b.get<std::size_t>("record_every", c.run.record_every);
  c.n_samples = b.get<std::size_t>("n_samples", c.n_samples);
  c.initial_norm = b.get<double>("initial_norm", c.initial_norm);
  if (b.has("initial")) c.initial = mat3(b, "initial");
  c.n_bins = b.get<std::size_t>("n_bins", c.n_bins);
  b.finish();
  with_context(b.path(), [&] { c.validate(); });
  return c;
}

vgt::TetradEnsembleConfig parse_tetrad(Block b) {
  vgt::TetradEnsembleConfig c;
  auto& p = c.params;
  p.alpha = b.get<double>("alpha", p.alpha);
  p.noise_M = b.get<double>("noise_M", p.noise_M);
  p.noise_g = b.get<double>("noise_g", p.noise_g);
  p.dt = b.get<double>("dt", p.dt);
  p.eig_floor = b.get<double>("eig_floor", p.eig_floor);
  p.freeze_g = b.get<bool>("freeze_g", p.freeze_g);
  p.blowup_norm = b.get<double>("blowup_norm", p.blowup_norm);
  p.max_floor_fraction = b.get<double>("max_floor_fraction", p.max_floor_fraction);
  c.n_samples = b.get<std::size_t>("n_samples", c.n_samples);
  c.n_steps = b.get<std::size_t>("n_steps", c.n_steps);
  c.sample_every = b.get<std::size_t>("sample_every", c.sample_every);
  if (b.has("initial_M")) c.initial.M = mat3(b, "initial_M");
  if (b.has("initial_g")) c.initial.g = mat3(b, "initial_g");
  c.n_bins = b.get<std::size_t>("n_bins", c.n_bins);
  c.q_range = range(b, "q_range");
  c.r_range = range(b, "r_range");
  b.finish();
  with_context(b.path(), [&] { c.validate(); });
  return c;
}

void cmd_vgt(const RunContext& ctx, Block& root, RunManifest& man) {
  Block v = root.child("vgt");
  const auto model = v.require<std::string>("model");
  if (model != "re" && model != "tetrad") throw ConfigError("vgt.model: expected re or tetrad");
  std::optional<vgt::ReEnsembleConfig> re;
  std::optional<vgt::TetradEnsembleConfig> tetrad;
  if (model == "re" || v.has("re")) re = parse_re(v.child("re"));
  if (model == "tetrad" || v.has("tetrad")) tetrad = parse_tetrad(v.child("tetrad"));
  v.finish();

  json stats;
  if (model == "re") {
    const auto r = vgt::re_ensemble(*re, ctx.seed);
    stats = vgt::to_json(r);
    vgt::write_qr_histogram_csv(ctx.out / "qr_histogram.csv", r.histogram);
    std::ofstream ev(ctx.out / "singularities.csv");
    if (!ev) throw IoError("cannot write singularities.csv");
    ev << "trajectory,t,norm\n" << std::setprecision(17);
    for (const auto& [i, e] : r.singularities) ev << i << ',' << e.t << ',' << e.norm << '\n';
    ev.close();
    man.metrics = {{"n_singular", r.singularities.size()},
                   {"max_vieillefosse_drift", num(r.max_vieillefosse_drift)},
                   {"max_abs_trace", num(r.max_abs_trace)}};
  } else {
    const auto r = vgt::tetrad_ensemble(*tetrad, ctx.seed);
    stats = vgt::to_json(r);
    vgt::write_qr_histogram_csv(ctx.out / "qr_histogram.csv", r.histogram);
    man.metrics = {{"n_completed", r.n_completed},
                   {"n_blowup", r.n_blowup},
                   {"n_unstable", r.n_unstable},
                   {"max_M_change", num(r.max_M_change)}};
  }
  stats["model"] = model;
  write_json(ctx.out / "vgt_stats.json", stats);
  man.add_file(ctx.out, "vgt_stats.json");
  man.add_file(ctx.out, "qr_histogram.csv");
  if (model == "re") man.add_file(ctx.out, "singularities.csv");
}

// --------------------------------------------------------------------- scalar

void cmd_scalar(const RunContext& ctx, Block& root, RunManifest& man) {
  Block s = root.child("scalar");
  const json echo = root.raw("scalar");
  scalar::PairCorrelationConfig cfg;
  Block fb = s.child("flow");
  cfg.flow.box_L = fb.get<double>("box_L", cfg.flow.box_L);
  cfg.flow.n_max = fb.get<int>("n_max", cfg.flow.n_max);
  cfg.flow.xi = fb.get<double>("xi", cfg.flow.xi);
  cfg.flow.u_rms = fb.get<double>("u_rms", cfg.flow.u_rms);
  cfg.flow.correlation_time = fb.get<double>("correlation_time", cfg.flow.correlation_time);
  cfg.flow.frozen = fb.get<bool>("frozen", cfg.flow.frozen);
  if (fb.has("mean_velocity")) {
    const Eigen::VectorXd u = fb.vector("mean_velocity");
    if (u.size() != 2) throw ConfigError("scalar.flow.mean_velocity: expected 2 entries");
    cfg.flow.mean_velocity = u;
  }
  fb.finish();
  Block cb = s.child("chi");
  cfg.chi.corr_scale_L = cb.get<double>("corr_scale_L", cfg.chi.corr_scale_L);
  cfg.chi.chi0 = cb.get<double>("chi0", cfg.chi.chi0);
  cb.finish();
  cfg.kappa = s.get<double>("kappa", cfg.kappa);
  cfg.ensemble_n = s.get<std::size_t>("ensemble_n", cfg.ensemble_n);
  cfg.dt = s.get<double>("dt", cfg.dt);
  cfg.max_t = s.get<double>("max_t", cfg.max_t);
  const auto r_sep = s.require<std::vector<double>>("r_sep");
  const bool write_times = s.get<bool>("write_hitting_times", false);
  s.finish();
  with_context("scalar", [&] { cfg.validate(); });
  if (r_sep.empty()) throw ConfigError("scalar.r_sep: must list at least one separation");
  for (std::size_t i = 0; i < r_sep.size(); ++i)
    if (!(r_sep[i] >= 0.0 && r_sep[i] <= cfg.chi.corr_scale_L))
      throw ConfigError("scalar.r_sep[" + std::to_string(i) + "]: must lie in [0, chi.corr_scale_L]");

  auto results = json::array();
  auto estimates = json::array();
  bool any_unreliable = false;
  for (std::size_t i = 0; i < r_sep.size(); ++i) {
    const auto r = scalar::pair_correlation_estimate(cfg, r_sep[i], ctx.seed);
    results.push_back(scalar::to_json(r));
    estimates.push_back(num(r.estimate));
    any_unreliable = any_unreliable || r.unreliable;
    if (write_times) {
      const std::string name = "hitting_times_" + std::to_string(i) + ".csv";
      scalar::write_hitting_times_csv(ctx.out / name, r);
      man.add_file(ctx.out, name);
    }
  }
  write_json(ctx.out / "pair_correlation.json",
             {{"results", results}, {"estimator", "chi0 * E[T(r_sep -> L)]"}, {"config", echo}});
  man.add_file(ctx.out, "pair_correlation.json");
  man.metrics = {{"estimates", estimates}, {"any_unreliable", any_unreliable}};
}

using CommandFn = void (*)(const RunContext&, Block&, RunManifest&);

const std::vector<std::pair<std::string, CommandFn>>& table() {
  static const std::vector<std::pair<std::string, CommandFn>> t{
      {"gen-mixture", cmd_gen_mixture}, {"sph-run", cmd_sph_run}, {"make-dataset", cmd_make_dataset},
      {"train", cmd_train},             {"sample", cmd_sample},   {"uturn-scan", cmd_uturn_scan},
      {"vgt", cmd_vgt},                 {"scalar", cmd_scalar}};
  return t;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, fn] : table()) n.push_back(name);
    return n;
  }();
  return names;
}

RunManifest run_command(const RunContext& ctx) {
  CommandFn fn = nullptr;
  for (const auto& [name, f] : table())
    if (name == ctx.command) fn = f;
  if (!fn) throw ConfigError("unknown command '" + ctx.command + "'");
  if (!ctx.config.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : ctx.config.items())
    if (!kTopLevel.count(key)) throw ConfigError("unknown config key: " + key);
  if (ctx.out.empty()) throw ConfigError("out: no output directory given");

  set_thread_count(ctx.threads);
  std::error_code ec;
  fs::create_directories(ctx.out, ec);
  if (ec) throw IoError("cannot create " + ctx.out.string() + ": " + ec.message());

  RunManifest man;
  man.command = ctx.command;
  man.seed = ctx.seed;
  man.threads = thread_count();
  man.config = ctx.config;
  man.config["seed"] = ctx.seed;
  man.config["threads"] = ctx.threads;
  man.config["out"] = ctx.out.string();
  man.started_at = utc_timestamp();
  Block root(ctx.config, "");
  fn(ctx, root, man);
  man.finished_at = utc_timestamp();
  write_manifest(ctx.out / "manifest.json", man);
  return man;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const DomainError*>(&e) || dynamic_cast<const nlohmann::json::exception*>(&e))
    return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 4;
  return 1;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"lgdf: Lagrangian generative diffusion experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir, seed_text, threads_text, manifest_path;
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed_text, "root seed (u64)");
    sub->add_option("--threads", threads_text, "worker threads (0 = hardware)");
  }
  auto* verify = app.add_subcommand("verify", "check a run manifest against the files on disk");
  verify->add_option("manifest", manifest_path)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (verify->parsed()) {
      const auto bad = verify_manifest(manifest_path);
      for (const auto& f : bad) std::cerr << "mismatch: " << f << '\n';
      if (bad.empty()) std::cout << "ok\n";
      return bad.empty() ? 0 : 4;
    }
    RunContext ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot read config " + config_path);
    try {
      ctx.config = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError(config_path + ": " + e.what());
    }
    Block top(ctx.config, "");
    auto parse_u64 = [](const std::string& s, const char* what) {
      try {
        std::size_t pos = 0;
        const auto v = std::stoull(s, &pos);
        if (pos != s.size() || s.front() == '-') throw std::invalid_argument(s);
        return static_cast<std::uint64_t>(v);
      } catch (const std::exception&) {
        throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" + s + "'");
      }
    };
    ctx.seed = seed_text.empty() ? top.get<std::uint64_t>("seed", 0) : parse_u64(seed_text, "--seed");
    ctx.out = out_dir.empty() ? fs::path(top.get<std::string>("out", "")) : fs::path(out_dir);
    unsigned threads = top.get<unsigned>("threads", 0);
    if (const char* env = std::getenv("LGDF_THREADS"); env && *env)
      threads = static_cast<unsigned>(parse_u64(env, "LGDF_THREADS"));
    if (!threads_text.empty()) threads = static_cast<unsigned>(parse_u64(threads_text, "--threads"));
    ctx.threads = threads;
    const RunManifest man = run_command(ctx);
    std::cout << "wrote " << (ctx.out / "manifest.json").string() << " (" << man.files.size() << " files)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  }
}

}  // namespace lgdf::cli
