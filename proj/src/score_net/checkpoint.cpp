#include "lgdf/score_net/checkpoint.hpp"

#include <fstream>
#include <json.hpp>

#include "lgdf/core/binary_io.hpp"
#include "lgdf/core/error.hpp"

namespace lgdf::score_net {
namespace {

constexpr std::uint32_t kVersion = 1;

std::filesystem::path sidecar(const std::filesystem::path& path) { return path.string() + ".json"; }

}  // namespace

void write_params(const std::filesystem::path& path, const MlpParams& params) {
  params.validate();
  io::BinaryWriter w(path);
  w.magic();
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    w.u32(static_cast<std::uint32_t>(l.weight.cols()));
    w.u32(static_cast<std::uint32_t>(l.weight.rows()));
  }
  for (const auto& l : params.layers) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = l.weight;
    w.f64s({rm.data(), static_cast<std::size_t>(rm.size())});
    w.f64s({l.bias.data(), static_cast<std::size_t>(l.bias.size())});
  }
  w.close();
}

MlpParams read_params(const std::filesystem::path& path, Activation act) {
  io::BinaryReader r(path);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw IoError(path.string() + ": unsupported parameter file version " + std::to_string(version));
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 1024) throw IoError(path.string() + ": implausible layer count");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(n_layers);
  for (auto& [in, out] : dims) {
    in = r.u32();
    out = r.u32();
  }
  MlpParams p;
  p.activation = act;
  for (const auto& [in, out] : dims) {
    const auto w = r.f64s(static_cast<std::size_t>(in) * out);
    const auto b = r.f64s(out);
    DenseLayer layer;
    layer.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), out, in);
    layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    p.layers.push_back(std::move(layer));
  }
  if (!r.at_end()) throw IoError(path.string() + ": trailing bytes after parameters");
  try {
    p.validate();
  } catch (const ArgumentError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return p;
}

void write_score_net(const std::filesystem::path& path, const ScoreNetSpec& net) {
  net.validate();
  write_params(path, net.params);
  const nlohmann::json meta = {
      {"activation", to_string(net.params.activation)},
      {"embedding", {{"n_frequencies", net.embedding.n_frequencies}, {"base_period", net.embedding.base_period}}},
      {"output", to_string(net.output)},
      {"schedule",
       {{"kind", diffusion::to_string(net.schedule.kind())},
        {"beta_min", net.schedule.beta_min()},
        {"beta_max", net.schedule.beta_max()},
        {"T", net.schedule.horizon()}}},
  };
  std::ofstream out(sidecar(path));
  if (!out) throw IoError("cannot open " + sidecar(path).string() + " for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + sidecar(path).string());
}

ScoreNetSpec read_score_net(const std::filesystem::path& path) {
  std::ifstream in(sidecar(path));
  if (!in) throw IoError("cannot open " + sidecar(path).string());
  ScoreNetSpec net;
  try {
    const auto meta = nlohmann::json::parse(in);
    const auto& s = meta.at("schedule");
    const auto kind = diffusion::schedule_kind_from_string(s.at("kind").get<std::string>());
    net.schedule = kind == diffusion::ScheduleKind::constant
                       ? diffusion::NoiseSchedule::constant(s.at("beta_min").get<double>(), s.at("T").get<double>())
                       : diffusion::NoiseSchedule::linear(s.at("beta_min").get<double>(),
                                                          s.at("beta_max").get<double>(), s.at("T").get<double>());
    net.embedding.n_frequencies = meta.at("embedding").at("n_frequencies").get<int>();
    net.embedding.base_period = meta.at("embedding").at("base_period").get<double>();
    net.output = output_scaling_from_string(meta.at("output").get<std::string>());
    net.params = read_params(path, activation_from_string(meta.at("activation").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(sidecar(path).string() + ": " + e.what());
  }
  net.validate();
  return net;
}

}  // namespace lgdf::score_net
