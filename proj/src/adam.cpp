#include "sake/adam.hpp"

#include <cmath>
#include <string>

#include "sake/errors.hpp"

namespace sake {

void AdamConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ContractViolation("adam: beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ContractViolation("adam: beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ContractViolation("adam: epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ContractViolation("adam: weight_decay must be non-negative");
  if (!(lr_initial > 0.0 && lr_final > 0.0)) throw ContractViolation("adam: learning rates must be positive");
  if (lr_final > lr_initial) throw ContractViolation("adam: lr_final must not exceed lr_initial");
}

double scheduled_learning_rate(const AdamConfig& config, std::size_t step, std::size_t total_steps) {
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.lr_initial * std::pow(config.lr_final / config.lr_initial, frac);
}

template <typename T>
OptimizerState<T> make_optimizer(const AdamConfig& config, std::size_t total_steps,
                                 std::span<const ParamView<T>> params) {
  config.validate();
  if (total_steps == 0) throw ContractViolation("adam: total_steps must be positive");
  OptimizerState<T> state;
  state.config = config;
  state.total_steps = total_steps;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.tensor->shape());
    state.second_moment.emplace_back(p.tensor->shape());
  }
  return state;
}

template <typename T>
void adam_step(std::span<const ParamView<T>> params, std::span<const Tensor<T>> grads,
               OptimizerState<T>& state) {
  const AdamConfig& cfg = state.config;
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ContractViolation("adam_step: parameter/gradient/state count mismatch");
  }
  if (state.step_count >= state.total_steps) {
    throw ContractViolation("adam_step: schedule exhausted after " +
                            std::to_string(state.total_steps) + " steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tensor->shape() != grads[i].shape()) {
      throw ContractViolation("adam_step: gradient shape mismatch for " + std::string(params[i].name));
    }
  }
  const double lr = scheduled_learning_rate(cfg, state.step_count, state.total_steps);
  const double t = static_cast<double>(state.step_count + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].tensor;
    const Tensor<T>& g = grads[i];
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    const double decay = (params[i].is_bias && !cfg.decay_biases) ? 0.0 : cfg.weight_decay;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]) + decay * static_cast<double>(p[j]);
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double step = lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.epsilon);
      p[j] = static_cast<T>(p[j] - step);
    }
  }
  ++state.step_count;
}

template OptimizerState<float> make_optimizer<float>(const AdamConfig&, std::size_t,
                                                     std::span<const ParamView<float>>);
template OptimizerState<double> make_optimizer<double>(const AdamConfig&, std::size_t,
                                                       std::span<const ParamView<double>>);
template void adam_step<float>(std::span<const ParamView<float>>, std::span<const Tensor<float>>,
                               OptimizerState<float>&);
template void adam_step<double>(std::span<const ParamView<double>>, std::span<const Tensor<double>>,
                                OptimizerState<double>&);

}  // namespace sake
