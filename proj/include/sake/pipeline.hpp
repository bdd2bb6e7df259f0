#pragma once

// Glue shared by the command-line tool and the acceptance runner.

#include <map>
#include <set>
#include <span>
#include <vector>

#include "sake/config.hpp"
#include "sake/datagen.hpp"
#include "sake/hashing.hpp"
#include "sake/retrieval.hpp"
#include "sake/training.hpp"

namespace sake {

enum class QueryKind { kSketch, kPhoto };

// Sketch queries against the target gallery (zero-shot sketch retrieval), or
// gallery photos against the rest of the gallery (zero-shot photo retrieval).
MetricReport evaluate_model(const ModelParams& params, const Dataset& data, QueryKind queries, Metric metric,
                            std::span<const std::size_t> ks, const ItqCodec* codec = nullptr);

// ITQ fitted on embeddings of the source split (photos and sketches), so no
// target data leaks into the codec.
ItqCodec fit_codec(const ModelParams& params, const Dataset& data, std::size_t bits, std::size_t iterations,
                   std::uint64_t seed);

// Per class: mean over its samples (read as photos) of the teacher's top
// softmax probability on the original head.
std::map<int, double> teacher_confidence(const ModelParams& teacher, std::span<const Sample> samples);

// Per target class: highest LCh similarity to any original class.
std::map<int, double> nearest_original_lch(const Taxonomy& tax, const ClassMap& classes,
                                           std::span<const int> target_classes,
                                           std::span<const int> original_classes);

// after - before, per class present in both.
std::map<int, double> per_class_delta(const std::map<int, double>& before, const std::map<int, double>& after);

// Fine-tunes the configured student from a teacher.
TrainResult train_student(const RunConfig& cfg, const Dataset& data, const ModelParams& teacher,
                          const TaxonomyBundle& tb);

}  // namespace sake
