#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sake/autodiff.hpp"
#include "sake/model.hpp"
#include "sake/taxonomy.hpp"
#include "sake/tensor.hpp"

namespace sake {

struct LossConfig {
  double lambda_sake = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 0.3;
  bool apply_sake_to_sketches = true;
  // Distill towards softmax(t) alone, ignoring the similarity row.
  bool teacher_only = false;

  void validate() const;
};

// -log softmax(logits)[label]
double cross_entropy(std::span<const double> logits, std::size_t label);

// -sum_m q[m] log softmax(logits)[m]; q must be a probability vector.
double soft_cross_entropy(std::span<const double> logits, std::span<const double> q);

// q = softmax(lambda1 * t + lambda2 * a_row)
template <typename T>
std::vector<T> blend_teacher_signal(std::span<const T> teacher_logits, std::span<const double> a_row,
                                    double lambda1, double lambda2);

template <typename T>
struct TeacherSignal {
  std::vector<T> logits;  // t
  std::vector<T> qt;      // softmax(t)
  std::vector<T> q;       // semantic-aware blend
};

template <typename T>
TeacherSignal<T> teacher_signal(std::span<const T> teacher_logits, std::span<const double> a_row,
                                double lambda1, double lambda2);

// A training batch. labels index the benchmark head (positions in C^S).
template <typename T>
struct Batch {
  Tensor<T> images;  // [N, 1, S, S]
  std::vector<Domain> domains;
  std::vector<std::size_t> labels;
};

struct LossTerms {
  Var total;
  Var benchmark;
  Var sake;  // invalid when no teacher took part
  double total_value = 0.0;
  double benchmark_value = 0.0;
  double sake_value = 0.0;
  std::size_t sake_rows = 0;
};

// Teacher logits for a batch, always evaluated as photos (the teacher never saw
// another domain).
template <typename T>
Tensor<T> teacher_logits(const ModelParamsT<T>& teacher, const Tensor<T>& images);

// L = L_benchmark + lambda_sake * L_SAKE on the given tape. Without a teacher,
// or with no contributing rows, the SAKE term is absent and L = L_benchmark.
// Each term averages over its own contributing rows.
template <typename T>
LossTerms total_loss(Tape<T>& tape, const ModelConfig& config, const BoundParams& student,
                     const Batch<T>& batch, const Tensor<T>* teacher_logits,
                     const SimilarityMatrix* similarity, const LossConfig& cfg);

}  // namespace sake
