#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sake/model.hpp"
#include "sake/rng.hpp"
#include "sake/taxonomy.hpp"
#include "sake/tensor.hpp"

namespace sake {

struct Sample {
  int class_id = 0;
  Domain modality = Domain::kPhoto;
  std::uint32_t sample_id = 0;
  std::vector<float> pixels;  // side * side, row-major, in [0, 1]

  bool operator==(const Sample&) const = default;
};

struct SplitSpec {
  std::vector<int> original_classes;
  std::vector<int> source_classes;
  std::vector<int> target_classes;
  std::size_t original_photos = 60;    // per original class
  std::size_t source_photos = 60;      // per source class
  std::size_t source_sketches = 30;    // per source class
  std::size_t gallery_photos = 50;     // per target class
  std::size_t query_sketches = 20;     // per target class
  std::size_t side = 32;
  std::uint64_t seed = 0;

  // Certifies C^S and C^T disjoint and C^O and C^T disjoint; throws
  // SplitViolation naming the first offending class.
  void validate() const;
};

// Sample id bases per split, so that (class, sample_id) is unique even when a
// class appears in both the original and source splits.
inline constexpr std::uint32_t kOriginalIdBase = 0;
inline constexpr std::uint32_t kSourceIdBase = 10000;
inline constexpr std::uint32_t kTargetIdBase = 20000;

struct Dataset {
  SplitSpec spec;
  std::vector<Sample> original;        // photos of C^O
  std::vector<Sample> source;          // photos + sketches of C^S
  std::vector<Sample> target_query;    // sketches of C^T
  std::vector<Sample> target_gallery;  // photos of C^T
};

// Leaf names the renderer knows how to draw.
bool has_recipe(const std::string& node_name);

// Renders one image; photo and sketch of the same (class, sample_id) share the
// latent shape parameters.
std::vector<float> render_sample(const std::string& node_name, int class_id, std::uint32_t sample_id,
                                 Domain modality, std::size_t side, std::uint64_t seed);

Dataset generate_dataset(const SplitSpec& spec, const Taxonomy& tax, const ClassMap& classes);

struct AugmentConfig {
  int max_shift = 2;
  double flip_probability = 0.5;
  double noise_sigma = 0.02;
};

// Random shift (border-replicated), horizontal flip and additive noise, clamped to [0, 1].
std::vector<float> augment(std::span<const float> image, std::size_t side, Rng& rng,
                           const AugmentConfig& cfg = {});

// Stacks samples into [N, 1, side, side].
Tensor<float> stack_images(std::span<const Sample> samples, std::size_t side);
std::vector<Domain> modalities(std::span<const Sample> samples);

// Split archive: "SAKEDAT1", u32 count, u32 height, u32 width, then per sample
// u32 class_id, u8 modality, u32 sample_id, f32 pixels (all little-endian).
void write_split(const std::filesystem::path& path, std::span<const Sample> samples, std::size_t side);
std::vector<Sample> read_split(const std::filesystem::path& path, std::size_t* side = nullptr);

// Writes manifest.json and one archive per split into dir.
void write_dataset(const Dataset& data, const ClassMap& classes, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

nlohmann::json make_manifest(const Dataset& data, const ClassMap& classes);

// Re-derives the disjointness certificates and per-class counts from a manifest
// and the archives next to it. Throws SplitViolation or ContractViolation.
void validate_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir);

}  // namespace sake
