#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sake/datagen.hpp"
#include "sake/hashing.hpp"
#include "sake/model.hpp"

namespace sake {

enum class Metric { kCosine, kHamming };

Metric parse_metric(const std::string& name);
std::string metric_name(Metric m);

// 1 - u.v / (|u| |v|). Throws ContractViolation for a zero vector.
double cosine_distance(std::span<const float> u, std::span<const float> v);

using Representation = std::variant<std::vector<float>, BinaryCode>;

struct Item {
  std::uint32_t id = 0;
  int class_id = 0;
  Representation rep;
};

struct RankedEntry {
  std::uint32_t id = 0;
  double distance = 0.0;
  bool relevant = false;
};

struct RankedList {
  std::uint32_t query_id = 0;
  std::vector<RankedEntry> entries;  // distance ascending, ties by ascending id
  std::size_t total_relevant = 0;

  std::vector<std::uint8_t> relevance() const;
};

// Ranks the whole gallery against the query. Items whose id equals skip_id are
// left out (used when queries are drawn from the gallery itself).
RankedList rank(const Item& query, std::span<const Item> gallery, Metric metric, long long skip_id = -1);

// Non-interpolated AP: (1 / R) * sum over relevant positions k of precision@k.
// Throws ContractViolation for R = 0.
double average_precision(std::span<const std::uint8_t> relevance, std::size_t total_relevant);
// AP over the top K with R replaced by min(R, K).
double average_precision_at(std::span<const std::uint8_t> relevance, std::size_t total_relevant, std::size_t k);
// Relevant fraction of the top min(K, n).
double precision_at_k(std::span<const std::uint8_t> relevance, std::size_t k);

struct MetricReport {
  std::string metric;
  double map_all = 0.0;
  std::map<std::size_t, double> map_at;        // K -> mAP@K
  std::map<std::size_t, double> precision_at;  // K -> Prec@K
  std::map<int, double> per_class_ap;          // target class -> mean AP@all
  std::size_t query_count = 0;
  std::size_t excluded_queries = 0;  // queries without any relevant gallery item

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Every query and gallery class must be in target_classes (ZeroShotViolation
// otherwise). Per-query results are reduced in query order.
MetricReport evaluate(std::span<const Item> queries, std::span<const Item> gallery, Metric metric,
                      std::span<const std::size_t> ks, const std::set<int>& target_classes,
                      bool skip_self = false);

// Embeddings of samples, with their modality as the domain bit.
Tensor<float> embed_samples(const ModelParams& params, std::span<const Sample> samples);

std::vector<Item> make_items(std::span<const Sample> samples, const Tensor<float>& embeddings,
                             const ItqCodec* codec);

// id, class, modality, then M columns.
void write_embeddings_csv(const std::filesystem::path& path, std::span<const Sample> samples,
                          const Tensor<float>& embeddings);

struct TercileGroup {
  std::vector<int> classes;
  double mean_delta = 0.0;
  double mean_confidence = 0.0;
  double mean_lch = 0.0;
};

struct TercileSummary {
  TercileGroup groups[3];  // low, medium, high improvement
  std::vector<int> dropped;  // remainder classes left out (highest ids)
  bool degenerate = false;   // some deltas tie, so class ids decided the order
  bool confidence_increasing = false;
  bool lch_increasing = false;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

// Sorts classes by improvement (ties by class id) and splits them into three
// equal groups after dropping the n mod 3 classes with the highest ids.
TercileSummary analyze_improvement_groups(const std::map<int, double>& deltas,
                                          const std::map<int, double>& teacher_confidence,
                                          const std::map<int, double>& lch_similarity);

}  // namespace sake
