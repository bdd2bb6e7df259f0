#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "sake/errors.hpp"

// Little-endian scalar I/O shared by the checkpoint, dataset and codec formats.
namespace sake::binio {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

inline void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void write_magic(std::ostream& out, std::string_view magic) { out.write(magic.data(), magic.size()); }

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw ContractViolation(std::string("truncated file while reading ") + what);
  }
}

inline std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, "u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint8_t read_u8(std::istream& in) {
  char c;
  read_exact(in, &c, 1, "u8");
  return static_cast<std::uint8_t>(c);
}

inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

inline void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  read_exact(in, got.data(), got.size(), "magic");
  if (got != magic) {
    throw ContractViolation("bad magic: expected " + std::string(magic) + ", got " + got);
  }
}

}  // namespace sake::binio
