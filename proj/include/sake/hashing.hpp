#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sake/tensor.hpp"

namespace sake {

// c bits packed little-endian: bit b lives in byte b / 8 at position b % 8.
struct BinaryCode {
  std::size_t bits = 0;
  std::vector<std::uint8_t> bytes;

  static BinaryCode from_bits(std::span<const std::uint8_t> bits);
  bool bit(std::size_t b) const { return (bytes[b / 8] >> (b % 8)) & 1u; }
  bool operator==(const BinaryCode&) const = default;
};

struct ItqCodec {
  std::size_t dim = 0;    // M
  std::size_t bits = 0;   // c
  std::vector<double> mean;        // [M]
  std::vector<double> projection;  // W, [M, c] row-major
  std::vector<double> rotation;    // R, [c, c] row-major
  std::size_t iterations = 0;
  // ||B - V W R||_F^2 at every round, before the rotation update.
  std::vector<double> quantization_loss;
  // Set when the PCA rank forced a shorter code.
  std::string warning;

  // (x - mean) W R
  std::vector<double> project(std::span<const float> feature) const;
};

// Fits ITQ on n x M training features: mean-centre, PCA to c dimensions, then
// alternate B = sign(V W R) and the orthogonal Procrustes update of R.
ItqCodec itq_fit(const Tensor<float>& features, std::size_t bits, std::size_t iterations = 50,
                 std::uint64_t seed = 0);

// Bit b is 1 iff the projected coordinate b is >= 0.
BinaryCode encode(const ItqCodec& codec, std::span<const float> feature);

std::size_t hamming_distance(const BinaryCode& a, const BinaryCode& b);

// "SAKEITQ1", u32 M, u32 c, then mean, W, R as little-endian f32.
void save_codec(const ItqCodec& codec, const std::filesystem::path& path);
ItqCodec load_codec(const std::filesystem::path& path);

// u32 count, u32 bits, then ceil(bits / 8) bytes per code.
void save_codes(std::span<const BinaryCode> codes, const std::filesystem::path& path);
std::vector<BinaryCode> load_codes(const std::filesystem::path& path);

}  // namespace sake
