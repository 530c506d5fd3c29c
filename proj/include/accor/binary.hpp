#pragma once

// Little-endian scalar encoding shared by the dataset and checkpoint files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace accor::binary {

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_arithmetic_v<T>);
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  const U bits = std::bit_cast<U>(value);
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(T));
}

/// Decodes a little- or big-endian value from raw bytes.
template <typename T>
T decode(const unsigned char* bytes, bool big_endian = false) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const std::size_t shift = big_endian ? 8 * (sizeof(T) - 1 - i) : 8 * i;
    bits |= static_cast<U>(static_cast<U>(bytes[i]) << shift);
  }
  return std::bit_cast<T>(bits);
}

template <typename T>
void encode(T value, unsigned char* out, bool big_endian = false) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const std::size_t shift = big_endian ? 8 * (sizeof(T) - 1 - i) : 8 * i;
    out[i] = static_cast<unsigned char>((bits >> shift) & 0xFF);
  }
}

/// Reads a little-endian value; returns false on a short read.
template <typename T>
bool get(std::istream& is, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  value = decode<T>(bytes);
  return true;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline bool get_string(std::istream& is, std::string& s, std::uint32_t max_len = 1u << 24) {
  std::uint32_t len = 0;
  if (!get(is, len) || len > max_len) return false;
  s.resize(len);
  return static_cast<bool>(is.read(s.data(), len));
}

}  // namespace accor::binary
