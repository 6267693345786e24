#include "lgdf/core/binary_io.hpp"

#include <bit>
#include <cstring>

#include "lgdf/core/error.hpp"

namespace lgdf::io {
namespace {

template <class T>
T to_le(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open for writing: " + path.string());
}

void BinaryWriter::magic() { out_.write(kMagic, 4); }

void BinaryWriter::u32(std::uint32_t v) {
  v = to_le(v);
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void BinaryWriter::u64(std::uint64_t v) {
  v = to_le(v);
  out_.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void BinaryWriter::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  u64(bits);
}

void BinaryWriter::f64s(std::span<const double> v) {
  if constexpr (std::endian::native == std::endian::little) {
    out_.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
  } else {
    for (double x : v) f64(x);
  }
}

void BinaryWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open for reading: " + path.string());
}

void BinaryReader::read_raw(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (!in_) throw IoError("truncated file: " + path_.string());
}

void BinaryReader::expect_magic() {
  char m[4];
  read_raw(m, 4);
  if (std::memcmp(m, kMagic, 4) != 0) throw IoError("bad magic in " + path_.string());
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  read_raw(&v, sizeof v);
  return to_le(v);
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  read_raw(&v, sizeof v);
  return to_le(v);
}

double BinaryReader::f64() {
  const std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::vector<double> BinaryReader::f64s(std::size_t n) {
  std::vector<double> v(n);
  if constexpr (std::endian::native == std::endian::little) {
    read_raw(v.data(), n * sizeof(double));
  } else {
    for (auto& x : v) x = f64();
  }
  return v;
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  std::string s(n, '\0');
  if (n > 0) read_raw(s.data(), n);
  return s;
}

bool BinaryReader::at_end() { return in_.peek() == std::char_traits<char>::eof(); }

}  // namespace lgdf::io
