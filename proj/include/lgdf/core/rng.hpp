#pragma once

#include <cstdint>
#include <span>

namespace lgdf {

/// 64-bit finalizer of SplitMix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Combines a root seed and a stream index into a stream key.
///
///   key = mix64(mix64(root) ^ (0x9E3779B97F4A7C15 * (stream + 1)))
///
/// Nested derivation (e.g. per-iteration then per-sample) is done by feeding
/// the result back in as the root.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return mix64(mix64(root) ^ (0x9E3779B97F4A7C15ULL * (stream + 1)));
}

/// Counter-based generator: the n-th 64-bit draw of a stream is
///
///   out(n) = mix64(key ^ mix64(n * 0xD1B54A32D192ED03 + 0x8CB92BA72F3D8DD7))
///
/// so any draw is reproducible from (root seed, stream, counter) without
/// replaying the stream. Uniform doubles use the top 53 bits; normals use
/// the Box-Muller transform on two consecutive uniforms and return the
/// cosine branch first, then the cached sine branch.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(derive_seed(seed, stream)) {}

  std::uint64_t next_u64() noexcept {
    const std::uint64_t n = counter_++;
    return mix64(key_ ^ mix64(n * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  double normal() noexcept;

  void fill_normal(std::span<double> out) noexcept {
    for (double& v : out) v = normal();
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lgdf
