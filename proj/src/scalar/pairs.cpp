#include "lgdf/scalar/pairs.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "lgdf/core/error.hpp"
#include "lgdf/core/parallel.hpp"

namespace lgdf::scalar {

void FlowSpec::validate() const {
  if (!(box_L > 0.0)) throw ConfigError("flow.box_L must be positive");
  if (n_max < 1) throw ConfigError("flow.n_max must be at least 1");
  if (!std::isfinite(xi)) throw ConfigError("flow.xi must be finite");
  if (!(u_rms >= 0.0)) throw ConfigError("flow.u_rms must be non-negative");
  if (!(correlation_time > 0.0)) throw ConfigError("flow.correlation_time must be positive");
  if (!mean_velocity.allFinite()) throw ConfigError("flow.mean_velocity must be finite");
}

SyntheticFlow::SyntheticFlow(const FlowSpec& spec, Rng& rng)
    : box_L_(spec.box_L), tau_(spec.correlation_time), frozen_(spec.frozen), mean_(spec.mean_velocity) {
  spec.validate();
  const double k0 = 2.0 * std::numbers::pi / spec.box_L;
  double norm = 0.0;
  for (int nx = 0; nx <= spec.n_max; ++nx)
    for (int ny = -spec.n_max; ny <= spec.n_max; ++ny) {
      if (nx == 0 && ny <= 0) continue;
      const double n = std::hypot(nx, ny);
      if (n > spec.n_max) continue;
      const Vec2 k = k0 * Vec2(nx, ny);
      const double kk = k.norm();
      modes_.push_back({k, std::pow(kk, -1.0 - spec.xi / 2.0), 0.0, 0.0});
      norm += std::pow(kk, -spec.xi);
    }
  const double c = spec.u_rms / std::sqrt(norm);
  for (auto& m : modes_) {
    m.amplitude *= c;
    m.a = rng.normal();
    m.b = rng.normal();
  }
}

SyntheticFlow::SyntheticFlow(const FlowSpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  *this = SyntheticFlow(spec, rng);
}

SyntheticFlow::SyntheticFlow(std::vector<FlowMode> modes, double box_L, double correlation_time, bool frozen,
                             Vec2 mean_velocity)
    : modes_(std::move(modes)), box_L_(box_L), tau_(correlation_time), frozen_(frozen), mean_(mean_velocity) {
  if (!(box_L > 0.0)) throw ArgumentError("SyntheticFlow: box_L must be positive");
  if (!frozen && !(correlation_time > 0.0)) throw ArgumentError("SyntheticFlow: correlation_time must be positive");
}

double SyntheticFlow::streamfunction(const Vec2& r) const {
  double psi = 0.0;
  for (const auto& m : modes_) {
    const double ph = m.k.dot(r);
    psi += m.amplitude * (m.a * std::cos(ph) + m.b * std::sin(ph));
  }
  return psi;
}

Vec2 SyntheticFlow::velocity(const Vec2& r) const {
  Vec2 v = mean_;
  for (const auto& m : modes_) {
    const double ph = m.k.dot(r);
    // d psi / d r = A (-a sin + b cos) k
    const double g = m.amplitude * (m.b * std::cos(ph) - m.a * std::sin(ph));
    v[0] += g * m.k[1];
    v[1] -= g * m.k[0];
  }
  return v;
}

void SyntheticFlow::advance(double dt, Rng& rng) {
  t_ += dt;
  if (frozen_ || modes_.empty()) return;
  const double decay = std::exp(-dt / tau_);
  const double kick = std::sqrt(-std::expm1(-2.0 * dt / tau_));
  for (auto& m : modes_) {
    m.a = decay * m.a + kick * rng.normal();
    m.b = decay * m.b + kick * rng.normal();
  }
}

PairNoise draw_pair_noise(Rng& rng) {
  PairNoise z;
  z.z1[0] = rng.normal();
  z.z1[1] = rng.normal();
  z.z2[0] = rng.normal();
  z.z2[1] = rng.normal();
  return z;
}

PairState advance_pair(const PairState& pair, const SyntheticFlow& flow, double kappa, double dt, const PairNoise& noise) {
  if (!(dt > 0.0)) throw ArgumentError("advance_pair: dt must be positive");
  if (!(kappa >= 0.0)) throw ArgumentError("advance_pair: kappa must be non-negative");
  const double s = std::sqrt(2.0 * kappa * dt);
  PairState out;
  out.rho1 = pair.rho1 + flow.velocity(pair.rho1) * dt + s * noise.z1;
  out.rho2 = pair.rho2 + flow.velocity(pair.rho2) * dt + s * noise.z2;
  out.t = pair.t + dt;
  return out;
}

void HitConfig::validate() const {
  if (!(target > 0.0)) throw ArgumentError("hitting_time: target must be positive");
  if (!(kappa >= 0.0)) throw ArgumentError("hitting_time: kappa must be non-negative");
  if (!(dt > 0.0)) throw ArgumentError("hitting_time: dt must be positive");
  if (!(max_t > 0.0)) throw ArgumentError("hitting_time: max_t must be positive");
}

namespace {

bool reached(double sep, const HitConfig& cfg) {
  return cfg.direction == HitDirection::grow_to ? sep >= cfg.target : sep <= cfg.target;
}

}  // namespace

std::optional<double> hitting_time(PairState pair, SyntheticFlow flow, const HitConfig& cfg, Rng& rng) {
  cfg.validate();
  if (reached(pair.separation(), cfg)) return 0.0;
  const auto n = static_cast<std::size_t>(std::ceil(cfg.max_t / cfg.dt - 1e-9));
  for (std::size_t k = 1; k <= n; ++k) {
    pair = advance_pair(pair, flow, cfg.kappa, cfg.dt, draw_pair_noise(rng));
    flow.advance(cfg.dt, rng);
    if (!pair.rho1.allFinite() || !pair.rho2.allFinite()) throw NumericalError("hitting_time: non-finite position");
    if (reached(pair.separation(), cfg)) return static_cast<double>(k) * cfg.dt;
  }
  return std::nullopt;
}

std::optional<double> hitting_time(double r0, SyntheticFlow flow, const HitConfig& cfg, Rng& rng) {
  cfg.validate();
  if (!(r0 >= 0.0)) throw ArgumentError("hitting_time: r0 must be non-negative");
  if (reached(r0, cfg)) return 0.0;
  const Vec2 mid(rng.uniform(0.0, flow.box_L()), rng.uniform(0.0, flow.box_L()));
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const Vec2 e(std::cos(angle), std::sin(angle));
  PairState pair{mid + 0.5 * r0 * e, mid - 0.5 * r0 * e, 0.0};
  return hitting_time(pair, std::move(flow), cfg, rng);
}

std::optional<double> hitting_time(double r0, const SyntheticFlow& flow, const HitConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return hitting_time(r0, flow, cfg, rng);
}

void ChiSpec::validate() const {
  if (!(corr_scale_L > 0.0)) throw ConfigError("chi.corr_scale_L must be positive");
  if (!std::isfinite(chi0)) throw ConfigError("chi.chi0 must be finite");
}

void PairCorrelationConfig::validate() const {
  flow.validate();
  chi.validate();
  if (!(kappa >= 0.0)) throw ConfigError("kappa must be non-negative");
  if (ensemble_n < 1) throw ConfigError("ensemble_n must be at least 1");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (kappa == 0.0 && flow.u_rms == 0.0) throw ConfigError("kappa and flow.u_rms are both zero: pairs never move");
}

double PairCorrelationConfig::default_max_t() const {
  const double L = chi.corr_scale_L;
  if (kappa > 0.0) return 100.0 * L * L / (4.0 * kappa * 2.0);
  return 1000.0 * flow.box_L / flow.u_rms;
}

PairCorrelationResult pair_correlation_estimate(const PairCorrelationConfig& cfg, double r_sep, std::uint64_t seed) {
  cfg.validate();
  if (!(r_sep >= 0.0 && r_sep <= cfg.chi.corr_scale_L))
    throw ArgumentError("pair_correlation_estimate: r_sep must lie in [0, L]");

  PairCorrelationResult res;
  res.r_sep = r_sep;
  res.n = cfg.ensemble_n;
  res.max_t = cfg.max_t > 0.0 ? cfg.max_t : cfg.default_max_t();
  res.hitting_times.resize(cfg.ensemble_n);
  const HitConfig hc{cfg.chi.corr_scale_L, cfg.kappa, cfg.dt, res.max_t, HitDirection::grow_to};

  parallel_chunks(cfg.ensemble_n, 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      Rng rng(seed, i);
      SyntheticFlow flow(cfg.flow, rng);
      res.hitting_times[i] = hitting_time(r_sep, std::move(flow), hc, rng);
    }
  });

  double sum = 0.0, sum2 = 0.0;
  std::size_t n_ok = 0;
  for (const auto& t : res.hitting_times) {
    if (!t) {
      ++res.n_timeout;
      continue;
    }
    ++n_ok;
    sum += *t;
  }
  res.unreliable = 2 * res.n_timeout > res.n;
  if (n_ok == 0) {
    res.mean_time = res.estimate = res.std_error = std::numeric_limits<double>::quiet_NaN();
    return res;
  }
  res.mean_time = sum / static_cast<double>(n_ok);
  for (const auto& t : res.hitting_times)
    if (t) sum2 += (*t - res.mean_time) * (*t - res.mean_time);
  const double se = n_ok > 1 ? std::sqrt(sum2 / static_cast<double>(n_ok - 1) / static_cast<double>(n_ok)) : 0.0;
  res.estimate = cfg.chi.chi0 * res.mean_time;
  res.std_error = std::abs(cfg.chi.chi0) * se;
  return res;
}

nlohmann::json to_json(const PairCorrelationResult& r) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"r_sep", r.r_sep},       {"estimate", num(r.estimate)}, {"stderr", num(r.std_error)},
          {"mean_time", num(r.mean_time)}, {"max_t", r.max_t},      {"n", r.n},
          {"n_timeout", r.n_timeout}, {"unreliable", r.unreliable}};
}

void write_hitting_times_csv(const std::filesystem::path& path, const PairCorrelationResult& r) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "pair,time,timeout\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.hitting_times.size(); ++i) {
    const auto& t = r.hitting_times[i];
    out << i << ',' << (t ? *t : r.max_t) << ',' << (t ? 0 : 1) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lgdf::scalar
