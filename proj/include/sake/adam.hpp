#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "sake/tensor.hpp"

namespace sake {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Classic L2: weight_decay * param is added to the gradient.
  double weight_decay = 5e-4;
  bool decay_biases = false;
  double lr_initial = 1e-4;
  double lr_final = 1e-7;

  void validate() const;
};

// A named, mutable view of one learnable tensor.
template <typename T>
struct ParamView {
  std::string_view name;
  Tensor<T>* tensor;
  bool is_bias;
};

template <typename T>
struct OptimizerState {
  AdamConfig config;
  std::size_t step_count = 0;
  std::size_t total_steps = 1;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
};

template <typename T>
OptimizerState<T> make_optimizer(const AdamConfig& config, std::size_t total_steps,
                                 std::span<const ParamView<T>> params);

// lr_initial * (lr_final / lr_initial)^(step / total_steps)
double scheduled_learning_rate(const AdamConfig& config, std::size_t step, std::size_t total_steps);

// One bias-corrected Adam update at lr(step_count); increments step_count.
template <typename T>
void adam_step(std::span<const ParamView<T>> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& state);

}  // namespace sake
