#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>

namespace lgdf::diffusion {

/// S ground-truth samples in d dimensions. Stored one sample per column, so
/// the memory layout equals the S x d row-major layout of the file format.
struct Dataset {
  Eigen::MatrixXd samples;  // d x S
  std::string provenance;

  int dim() const { return static_cast<int>(samples.rows()); }
  std::size_t count() const { return static_cast<std::size_t>(samples.cols()); }
  Eigen::VectorXd sample(std::size_t s) const { return samples.col(static_cast<Eigen::Index>(s)); }

  /// Throws ArgumentError when empty or non-finite.
  void validate() const;
};

/// Dataset file:
///   "LGDF" | u32 version=1 | u32 kind=1 | u64 d | u64 S | str provenance |
///   S*d f64 (row-major, little-endian)
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

/// Per-coordinate affine map x -> (x - mean) / scale to zero mean and unit
/// (population) variance.
struct Whitening {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  /// Throws ArgumentError if any coordinate has zero spread.
  static Whitening fit(const Eigen::MatrixXd& samples);
  static Whitening identity(int dim);

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const;
  Dataset apply(const Dataset& data) const;
};

}  // namespace lgdf::diffusion
