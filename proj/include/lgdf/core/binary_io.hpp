#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace lgdf::io {

/// Every binary file starts with these four bytes.
inline constexpr char kMagic[4] = {'L', 'G', 'D', 'F'};

/// Little-endian binary writer. Throws IoError on open or write failure.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void magic();
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> v);
  /// u32 length prefix followed by the raw bytes.
  void str(const std::string& s);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  /// Throws IoError if the next four bytes are not the magic.
  void expect_magic();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  std::string str();
  bool at_end();

 private:
  void read_raw(void* dst, std::size_t n);

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace lgdf::io
