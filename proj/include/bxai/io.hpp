// Little-endian binary stream helpers shared by the dataset/model/library
// file formats.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bxai::io {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

static_assert(std::endian::native == std::endian::little,
              "big-endian hosts need byte swapping in io.hpp");

template <class T>
void write_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  static_assert(std::is_trivially_copyable_v<T>);
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("unexpected end of file");
  return v;
}

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("unexpected end of file");
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4];
  read_bytes(is, buf, 4);
  if (std::memcmp(buf, magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected ") + magic);
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) {
  write_bytes(os, magic, 4);
}

template <class T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  if (!v.empty()) write_bytes(os, v.data(), v.size() * sizeof(T));
}

template <class T>
void read_vec(std::istream& is, std::vector<T>& v, std::size_t n) {
  v.resize(n);
  if (n) read_bytes(is, v.data(), n * sizeof(T));
}

}  // namespace bxai::io
