#ifndef S3C_SRC_BINARY_IO_HPP
#define S3C_SRC_BINARY_IO_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace s3c::detail {

// Little-endian scalar encoding for the on-disk formats.
template <typename T>
void write_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) return false;
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  std::memcpy(&value, bytes.data(), sizeof(T));
  return true;
}

inline bool read_magic(std::istream& in, const char (&magic)[5]) {
  char got[4];
  return in.read(got, 4) && std::memcmp(got, magic, 4) == 0;
}

}  // namespace s3c::detail

#endif  // S3C_SRC_BINARY_IO_HPP
