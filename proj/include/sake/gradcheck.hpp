#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sake/autodiff.hpp"
#include "sake/tensor.hpp"

namespace sake {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Casts a constant to the tape's scalar type; lets one fragment serve both tapes.
template <typename T>
Tensor<T> as_tape_tensor(const Tape<T>&, const Tensor<double>& t) {
  return t.template cast<T>();
}

// Compares tape gradients (double) with central differences (step h) for every
// entry of every parameter. The fragment must accept Tape<double>& and
// Tape<long double>& (a generic lambda works): the differences are evaluated in
// extended precision so roundoff in L(x+h) - L(x-h) does not swamp gradients
// near 1e-6. The default step balances h^2 truncation against extended-precision
// roundoff for losses of order one. Relative error is |a - n| / max(|a|, |n|, 1e-12).
template <typename Fragment>
GradCheckResult gradient_check(const Fragment& fragment, const std::vector<Tensor<double>>& params,
                               double h = 3e-5) {
  using Wide = long double;
  Tape<double> tape;
  std::vector<Var> vars;
  for (const auto& p : params) vars.push_back(tape.parameter(p));
  tape.backward(fragment(tape, std::span<const Var>(vars)));

  std::vector<Tensor<Wide>> wide;
  for (const auto& p : params) wide.push_back(p.template cast<Wide>());
  auto evaluate = [&]() {
    Tape<Wide> t;
    std::vector<Var> v;
    for (const auto& p : wide) v.push_back(t.constant(p));
    return t.value(fragment(t, std::span<const Var>(v)))[0];
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const Tensor<double> analytic = tape.grad(vars[pi]);
    for (std::size_t j = 0; j < params[pi].size(); ++j) {
      const Wide saved = wide[pi][j];
      wide[pi][j] = saved + h;
      const Wide up = evaluate();
      wide[pi][j] = saved - h;
      const Wide down = evaluate();
      wide[pi][j] = saved;
      const double numeric = static_cast<double>((up - down) / (2.0L * h));
      const double a = analytic[j];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      if (rel > result.max_relative_error) result = GradCheckResult{rel, pi, j, a, numeric};
    }
  }
  return result;
}

}  // namespace sake
