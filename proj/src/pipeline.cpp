#include "sake/pipeline.hpp"

#include <algorithm>

#include "sake/errors.hpp"
#include "sake/ops.hpp"

namespace sake {

MetricReport evaluate_model(const ModelParams& params, const Dataset& data, QueryKind queries, Metric metric,
                            std::span<const std::size_t> ks, const ItqCodec* codec) {
  if (metric == Metric::kHamming && codec == nullptr) {
    throw ContractViolation("the hamming metric needs a codec");
  }
  if (metric == Metric::kCosine) codec = nullptr;
  const std::set<int> targets(data.spec.target_classes.begin(), data.spec.target_classes.end());
  const auto gallery = make_items(data.target_gallery, embed_samples(params, data.target_gallery), codec);
  if (queries == QueryKind::kPhoto) {
    return evaluate(gallery, gallery, metric, ks, targets, true);
  }
  const auto query = make_items(data.target_query, embed_samples(params, data.target_query), codec);
  return evaluate(query, gallery, metric, ks, targets, false);
}

ItqCodec fit_codec(const ModelParams& params, const Dataset& data, std::size_t bits, std::size_t iterations,
                   std::uint64_t seed) {
  return itq_fit(embed_samples(params, data.source), bits, iterations, seed);
}

std::map<int, double> teacher_confidence(const ModelParams& teacher, std::span<const Sample> samples) {
  if (samples.empty()) throw ContractViolation("teacher_confidence: no samples");
  const std::vector<Domain> photo(samples.size(), Domain::kPhoto);
  const Tensor<float> logits =
      original_logits_batch(teacher, stack_images(samples, teacher.config.input_side), photo);
  std::map<int, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto p = softmax<float>(logits.row(i));
    auto& a = acc[samples[i].class_id];
    a.first += *std::max_element(p.begin(), p.end());
    a.second += 1;
  }
  std::map<int, double> out;
  for (const auto& [c, a] : acc) out[c] = a.first / static_cast<double>(a.second);
  return out;
}

std::map<int, double> nearest_original_lch(const Taxonomy& tax, const ClassMap& classes,
                                           std::span<const int> target_classes,
                                           std::span<const int> original_classes) {
  if (original_classes.empty()) throw ContractViolation("nearest_original_lch: no original classes");
  std::map<int, double> out;
  for (int t : target_classes) {
    double best = -1e300;
    for (int o : original_classes) best = std::max(best, lch_similarity(tax, classes.node(t), classes.node(o)));
    out[t] = best;
  }
  return out;
}

std::map<int, double> per_class_delta(const std::map<int, double>& before, const std::map<int, double>& after) {
  std::map<int, double> out;
  for (const auto& [c, v] : after) {
    auto it = before.find(c);
    if (it != before.end()) out[c] = v - it->second;
  }
  return out;
}

TrainResult train_student(const RunConfig& cfg, const Dataset& data, const ModelParams& teacher,
                          const TaxonomyBundle& tb) {
  const auto& sp = data.spec;
  const SimilarityMatrix a(tb.taxonomy, tb.classes, sp.source_classes, sp.original_classes);
  return finetune_sake(data.source, sp.source_classes, teacher, a, cfg.resolved_train());
}

}  // namespace sake
