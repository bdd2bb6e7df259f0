#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sake/datagen.hpp"
#include "sake/model.hpp"
#include "sake/taxonomy.hpp"
#include "sake/training.hpp"

namespace sake {

// Everything a pipeline run depends on. Serialized as one flat JSON object
// with dotted keys ("loss.lambda2", "split.target_classes", ...).
struct RunConfig {
  // Drives data generation, initialization, batching, probing and ITQ.
  std::uint64_t seed = 1;
  std::string output_dir = "run";
  // Empty paths select the built-in toy taxonomy and class map.
  std::string taxonomy_edges;
  std::string taxonomy_classes;

  SplitSpec split;
  ModelConfig model;
  TrainConfig pretrain = default_pretrain_config();
  TrainConfig train;
  ProbeConfig probe = default_probe_config();
  std::size_t itq_bits = 64;
  std::size_t itq_iterations = 50;
  std::vector<std::size_t> eval_ks{100, 200};

  // Throws ConfigError (bad values) or SplitViolation (overlapping classes).
  void validate() const;

  nlohmann::json to_json() const;
  // Starts from the defaults; every key present must be known and well typed.
  static RunConfig from_json(const nlohmann::json& flat);
  static RunConfig load(const std::filesystem::path& path);

  // Copies of the sub-configs with the run seed and derived sizes filled in.
  SplitSpec resolved_split() const;
  ModelConfig resolved_model() const;  // heads left at 0; set by training
  TrainConfig resolved_pretrain() const;
  TrainConfig resolved_train() const;
  ProbeConfig resolved_probe() const;
};

// Default split over the 40 built-in classes: 20 original, 10 source, 6 target.
RunConfig default_run_config();

// Applies "key=value" to a flat config object. The value is read as JSON when
// it parses as JSON, else as a plain string.
void apply_override(nlohmann::json& flat, const std::string& assignment);

// Sorted list of every key a config may contain.
std::vector<std::string> config_keys();

struct TaxonomyBundle {
  Taxonomy taxonomy;
  ClassMap classes;
};
TaxonomyBundle load_taxonomy(const RunConfig& cfg);

std::string tool_version();

}  // namespace sake
