#include "lgdf/diffusion/dataset.hpp"

#include <span>

#include "lgdf/core/binary_io.hpp"
#include "lgdf/core/error.hpp"

namespace lgdf::diffusion {
namespace {
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindDataset = 1;
}  // namespace

void Dataset::validate() const {
  if (samples.rows() < 1) throw ArgumentError("dataset: dimension must be >= 1");
  if (samples.cols() < 1) throw ArgumentError("dataset: need at least one sample");
  if (!samples.allFinite()) throw ArgumentError("dataset: non-finite sample value");
}

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  io::BinaryWriter w(path);
  w.magic();
  w.u32(kVersion);
  w.u32(kKindDataset);
  w.u64(static_cast<std::uint64_t>(data.samples.rows()));
  w.u64(static_cast<std::uint64_t>(data.samples.cols()));
  w.str(data.provenance);
  w.f64s(std::span<const double>(data.samples.data(), static_cast<std::size_t>(data.samples.size())));
  w.close();
}

Dataset read_dataset(const std::filesystem::path& path) {
  io::BinaryReader r(path);
  r.expect_magic();
  if (r.u32() != kVersion) throw IoError("unsupported dataset version in " + path.string());
  if (r.u32() != kKindDataset) throw IoError("not a dataset file: " + path.string());
  const auto d = r.u64();
  const auto s = r.u64();
  Dataset out;
  out.provenance = r.str();
  const auto values = r.f64s(d * s);
  out.samples = Eigen::Map<const Eigen::MatrixXd>(values.data(), static_cast<Eigen::Index>(d),
                                                  static_cast<Eigen::Index>(s));
  return out;
}

Whitening Whitening::fit(const Eigen::MatrixXd& samples) {
  if (samples.cols() < 1) throw ArgumentError("whitening: empty sample set");
  Whitening w;
  w.mean = samples.rowwise().mean();
  const Eigen::MatrixXd centered = samples.colwise() - w.mean;
  w.scale = (centered.array().square().rowwise().sum() / static_cast<double>(samples.cols())).sqrt();
  for (Eigen::Index k = 0; k < w.scale.size(); ++k) {
    if (!(w.scale[k] > 0.0))
      throw ArgumentError("whitening: coordinate " + std::to_string(k) + " has zero variance");
  }
  return w;
}

Whitening Whitening::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

Eigen::MatrixXd Whitening::apply(const Eigen::MatrixXd& x) const {
  if (x.rows() != mean.size()) throw ArgumentError("whitening: dimension mismatch");
  return (x.colwise() - mean).array().colwise() / scale.array();
}

Eigen::MatrixXd Whitening::invert(const Eigen::MatrixXd& z) const {
  if (z.rows() != mean.size()) throw ArgumentError("whitening: dimension mismatch");
  return (z.array().colwise() * scale.array()).matrix().colwise() + mean;
}

Dataset Whitening::apply(const Dataset& data) const {
  return {apply(data.samples), data.provenance};
}

}  // namespace lgdf::diffusion
