#include "sake/losses.hpp"

#include <cmath>
#include <string>

#include "sake/errors.hpp"
#include "sake/ops.hpp"

namespace sake {

void LossConfig::validate() const {
  if (!(lambda_sake >= 0.0 && lambda1 >= 0.0 && lambda2 >= 0.0)) {
    throw ContractViolation("loss weights must be non-negative");
  }
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ContractViolation("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  return log_sum_exp<double>(logits) - logits[label];
}

double soft_cross_entropy(std::span<const double> logits, std::span<const double> q) {
  if (q.size() != logits.size()) throw ContractViolation("soft_cross_entropy: length mismatch");
  double mass = 0;
  for (double v : q) {
    if (!(v >= 0.0)) throw ContractViolation("soft_cross_entropy: negative target mass");
    mass += v;
  }
  if (std::abs(mass - 1.0) > 1e-9) throw ContractViolation("soft_cross_entropy: target does not sum to 1");
  const double lse = log_sum_exp<double>(logits);
  double total = 0;
  for (std::size_t j = 0; j < q.size(); ++j) total += q[j] * (lse - logits[j]);
  return total;
}

template <typename T>
std::vector<T> blend_teacher_signal(std::span<const T> teacher_logits, std::span<const double> a_row,
                                    double lambda1, double lambda2) {
  if (teacher_logits.size() != a_row.size()) {
    throw ContractViolation("blend: teacher logits have " + std::to_string(teacher_logits.size()) +
                            " entries, similarity row has " + std::to_string(a_row.size()));
  }
  std::vector<T> mixed(teacher_logits.size());
  const T l1 = static_cast<T>(lambda1), l2 = static_cast<T>(lambda2);
  for (std::size_t m = 0; m < mixed.size(); ++m) {
    mixed[m] = l1 * teacher_logits[m] + l2 * static_cast<T>(a_row[m]);
  }
  return softmax<T>(mixed);
}

template <typename T>
TeacherSignal<T> teacher_signal(std::span<const T> teacher_logits, std::span<const double> a_row,
                                double lambda1, double lambda2) {
  TeacherSignal<T> s;
  s.logits.assign(teacher_logits.begin(), teacher_logits.end());
  s.qt = softmax<T>(teacher_logits);
  s.q = blend_teacher_signal<T>(teacher_logits, a_row, lambda1, lambda2);
  return s;
}

template <typename T>
Tensor<T> teacher_logits(const ModelParamsT<T>& teacher, const Tensor<T>& images) {
  Tape<T> tape;
  const BoundParams bound = bind(tape, teacher, false);
  const std::vector<Domain> photo(images.dim(0), Domain::kPhoto);
  const Var x = embed(tape, teacher.config, bound, tape.constant(images), photo);
  return tape.value(original_logits(tape, bound, x));
}

template <typename T>
LossTerms total_loss(Tape<T>& tape, const ModelConfig& config, const BoundParams& student,
                     const Batch<T>& batch, const Tensor<T>* teacher_out,
                     const SimilarityMatrix* similarity, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t n = batch.labels.size();
  if (n == 0 || batch.domains.size() != n || batch.images.dim(0) != n) {
    throw ContractViolation("total_loss: batch images, domains and labels disagree in length");
  }
  LossTerms terms;
  const Var x = embed(tape, config, student, tape.constant(batch.images), batch.domains);
  terms.benchmark = ops::cross_entropy(tape, benchmark_logits(tape, student, x), batch.labels);
  terms.benchmark_value = tape.value(terms.benchmark)[0];
  terms.total = terms.benchmark;

  if (teacher_out == nullptr) {
    terms.total_value = terms.benchmark_value;
    return terms;
  }
  if (similarity == nullptr) throw ContractViolation("total_loss: a teacher signal needs the similarity matrix");
  const std::size_t classes = config.num_original;
  if (teacher_out->rank() != 2 || teacher_out->dim(0) != n || teacher_out->dim(1) != classes ||
      similarity->cols() != classes) {
    throw ContractViolation("total_loss: teacher logits or similarity matrix do not match |C^O|");
  }

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (cfg.apply_sake_to_sketches || batch.domains[i] == Domain::kPhoto) rows.push_back(i);
  }
  if (rows.empty()) {
    terms.total_value = terms.benchmark_value;
    return terms;
  }
  Tensor<T> targets({rows.size(), classes});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    if (batch.labels[i] >= similarity->rows()) throw ContractViolation("total_loss: label outside C^S");
    const auto q = cfg.teacher_only ? softmax<T>(teacher_out->row(i))
                                    : blend_teacher_signal<T>(teacher_out->row(i), similarity->row(batch.labels[i]),
                                                              cfg.lambda1, cfg.lambda2);
    std::copy(q.begin(), q.end(), targets.row(r).begin());
  }
  Var logits = original_logits(tape, student, x);
  if (rows.size() != n) logits = ops::select_rows(tape, logits, std::span<const std::size_t>(rows));
  terms.sake = ops::soft_cross_entropy(tape, logits, targets);
  terms.sake_value = tape.value(terms.sake)[0];
  terms.sake_rows = rows.size();
  terms.total = ops::add(tape, terms.benchmark, ops::scale(tape, terms.sake, static_cast<T>(cfg.lambda_sake)));
  terms.total_value = tape.value(terms.total)[0];
  return terms;
}

#define SAKE_INSTANTIATE_LOSSES(T)                                                                   \
  template std::vector<T> blend_teacher_signal<T>(std::span<const T>, std::span<const double>, double, \
                                                  double);                                           \
  template TeacherSignal<T> teacher_signal<T>(std::span<const T>, std::span<const double>, double,   \
                                              double);                                               \
  template LossTerms total_loss<T>(Tape<T>&, const ModelConfig&, const BoundParams&, const Batch<T>&, \
                                   const Tensor<T>*, const SimilarityMatrix*, const LossConfig&);

SAKE_INSTANTIATE_LOSSES(float)
SAKE_INSTANTIATE_LOSSES(double)
SAKE_INSTANTIATE_LOSSES(long double)
#undef SAKE_INSTANTIATE_LOSSES

template Tensor<float> teacher_logits<float>(const ModelParamsT<float>&, const Tensor<float>&);
template Tensor<double> teacher_logits<double>(const ModelParamsT<double>&, const Tensor<double>&);

}  // namespace sake
