#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sake/adam.hpp"
#include "sake/datagen.hpp"
#include "sake/losses.hpp"
#include "sake/model.hpp"
#include "sake/taxonomy.hpp"

namespace sake {

// Fine-tuning step sizes for a desk-scale run of a few hundred steps; the
// decay ratio lr_initial / lr_final = 1000 matches AdamConfig's defaults.
inline AdamConfig finetune_adam() {
  AdamConfig a;
  a.lr_initial = 5e-3;
  a.lr_final = 5e-6;
  return a;
}

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 40;
  AdamConfig adam = finetune_adam();
  LossConfig loss;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

// Defaults for teacher pretraining on the original domain: a fresh network
// needs a larger step size than fine-tuning does.
TrainConfig default_pretrain_config();

struct ProbeConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 40;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

ProbeConfig default_probe_config();

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double total = 0.0;     // means over the epoch's steps
  double benchmark = 0.0;
  double sake = 0.0;
  std::size_t steps = 0;
};

struct TrainReport {
  std::string phase;  // "pretrain" or "finetune"
  std::vector<EpochStats> epochs;
  double train_accuracy = 0.0;
  // Teacher only: accuracy on the held-out fifth of the original photos.
  double heldout_accuracy = -1.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  nlohmann::json config;

  // Wall-clock time is left out unless asked for, so reports stay reproducible.
  nlohmann::json to_json(bool include_timing = false) const;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

// Deterministic 80/20 split of the original photos: per class, every fifth
// sample (by ascending sample id) is held out.
struct OriginalSplit {
  std::vector<Sample> train;
  std::vector<Sample> heldout;
};
OriginalSplit split_original(std::span<const Sample> original);

// Trains a fresh network (original head only) on photos of C^O. Head index m
// is the position of the class in original_classes. Throws TrainingDivergence
// if the training accuracy stays below 60%.
TrainResult pretrain_teacher(std::span<const Sample> train, std::span<const int> original_classes,
                             const ModelConfig& model, const TrainConfig& cfg,
                             std::span<const Sample> heldout = {});

// Fine-tunes a copy of the teacher on the source set with a fresh benchmark
// head. The teacher is consulted only when lambda_sake > 0.
TrainResult finetune_sake(std::span<const Sample> source, std::span<const int> source_classes,
                          const ModelParams& teacher, const SimilarityMatrix& similarity,
                          const TrainConfig& cfg);

struct ProbeResult {
  double accuracy = 0.0;  // top-1 on the held-out portion
  std::size_t train_count = 0;
  std::size_t eval_count = 0;
};

// Trains a linear classifier on frozen photo embeddings of the original split
// and reports held-out top-1 accuracy.
ProbeResult linear_probe(const ModelParams& params, std::span<const Sample> original,
                         std::span<const int> original_classes, const ProbeConfig& cfg);

// Fraction of samples whose argmax over the given head matches the label.
double head_accuracy(const ModelParams& params, std::span<const Sample> samples, std::span<const int> classes,
                     bool original_head);

nlohmann::json to_json(const TrainConfig& cfg);
nlohmann::json to_json(const ProbeConfig& cfg);

}  // namespace sake
