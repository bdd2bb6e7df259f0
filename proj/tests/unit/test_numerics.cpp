#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "sake/adam.hpp"
#include "sake/autodiff.hpp"
#include "sake/errors.hpp"
#include "sake/gradcheck.hpp"
#include "sake/ops.hpp"

using namespace sake;
using testing::random_offzero;
using testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-6;

// Weighted sum so that every output entry gets a distinct upstream gradient.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(tape.value(y).shape());
  for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
  return ops::sum(tape, ops::mul(tape, y, tape.constant(as_tape_tensor(tape, w))));
}

}  // namespace

TEST_CASE("tensor keeps data length equal to the shape product") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>(3)), ContractViolation);
  Tensor<float> m({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(m.at(1, 2) == 6);
  CHECK(m.row(1)[0] == 4);
  CHECK(m.reshaped({3, 2}).at(2, 1) == 6);
  CHECK_THROWS_AS(m.reshaped({4, 2}), ContractViolation);
}

TEST_CASE("rng streams are reproducible and keyed streams independent") {
  Rng a = Rng::keyed({1, 2, 3}), b = Rng::keyed({1, 2, 3}), c = Rng::keyed({1, 2, 4});
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(5) < 5);
  }
}

TEST_CASE("backward of sum(w*w) is 2w") {
  Tape<double> tape;
  const Var w = tape.parameter(Tensor<double>({2}, {1.0, 2.0}));
  tape.backward(ops::sum(tape, ops::mul(tape, w, w)));
  CHECK(tape.grad(w)[0] == 2.0);
  CHECK(tape.grad(w)[1] == 4.0);
}

TEST_CASE("leaves outside the loss graph get zero gradient") {
  Tape<double> tape;
  const Var w = tape.parameter(Tensor<double>({3}, {1.0, -2.0, 3.0}));
  const Var loss = tape.constant(Tensor<double>({1}, {5.0}));
  const Var other = tape.parameter(Tensor<double>({1}, {4.0}));
  const Var l2 = ops::add(tape, loss, ops::scale(tape, other, 0.0));
  tape.backward(l2);
  for (double g : tape.grad(w).values()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tape<double> tape;
  const Var w = tape.parameter(Tensor<double>({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(w), ContractViolation);
}

TEST_CASE("a non-finite intermediate raises a numeric error naming the op") {
  Tape<double> tape;
  const Var w = tape.parameter(Tensor<double>({1}, {std::numeric_limits<double>::max()}));
  try {
    ops::mul(tape, w, w);
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.op() == "mul");
  }
}

TEST_CASE("softmax sums to one and ignores a constant shift") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(7);
    for (double& v : x) v = rng.normal(0.0, 5.0);
    const auto p = softmax<double>(x);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    const double c = rng.normal(0.0, 100.0);
    std::vector<double> shifted = x;
    for (double& v : shifted) v += c;
    const auto q = softmax<double>(shifted);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
  }
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const std::vector<std::size_t> label{static_cast<std::size_t>(rng.below(4))};
    const auto r = gradient_check(
        [&](auto& t, std::span<const Var> p) { return ops::cross_entropy(t, p[0], label); },
        {random_tensor({1, 4}, rng)});
    CHECK(r.max_relative_error < kGradTol);
  }
}

TEST_CASE("linear layer and sigmoid gate pass gradient checks below 1e-7") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed + 100);
    const auto lin = gradient_check(
        [&](auto& t, std::span<const Var> p) {
          return weighted_sum(t, ops::linear(t, p[0], p[1], p[2]), seed);
        },
        {random_tensor({3, 5}, rng), random_tensor({4, 5}, rng), random_tensor({4}, rng)});
    CHECK(lin.max_relative_error < 1e-7);
    const auto sig = gradient_check(
        [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::sigmoid(t, p[0]), seed); },
        {random_tensor({3, 6}, rng)});
    CHECK(sig.max_relative_error < 1e-7);
  }
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed + 1000);
    auto check = [&](const char* name, const auto& f, std::vector<Tensor<double>> params) {
      const auto r = gradient_check(f, params);
      INFO(name << " seed " << seed << " error " << r.max_relative_error);
      CHECK(r.max_relative_error < kGradTol);
    };
    check("add", [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::add(t, p[0], p[1]), seed); },
          {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
    check("mul", [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::mul(t, p[0], p[1]), seed); },
          {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
    check("scale", [&](auto& t, std::span<const Var> p) {
            using V = typename std::remove_reference_t<decltype(t)>::value_type;
            return weighted_sum(t, ops::scale(t, p[0], V(-1.7)), seed);
          },
          {random_tensor({4}, rng)});
    check("relu", [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::relu(t, p[0]), seed); },
          {random_offzero({3, 4}, rng)});
    check("softmax_rows",
          [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::softmax_rows(t, p[0]), seed); },
          {random_tensor({3, 5}, rng)});
    check("conv2d",
          [&](auto& t, std::span<const Var> p) {
            return weighted_sum(t, ops::conv2d(t, p[0], p[1], p[2], 2, 1), seed);
          },
          {random_tensor({2, 2, 5, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)});
    check("conv2d stride 1",
          [&](auto& t, std::span<const Var> p) {
            return weighted_sum(t, ops::conv2d(t, p[0], p[1], p[2], 1, 0), seed);
          },
          {random_tensor({1, 1, 4, 4}, rng), random_tensor({2, 1, 3, 3}, rng), random_tensor({2}, rng)});
    check("global_avg_pool",
          [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::global_avg_pool(t, p[0]), seed); },
          {random_tensor({2, 3, 4, 4}, rng)});
    check("flatten", [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::flatten(t, p[0]), seed); },
          {random_tensor({2, 3, 2, 2}, rng)});
    check("concat_cols",
          [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::concat_cols(t, p[0], p[1]), seed); },
          {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)});
    check("channel_scale",
          [&](auto& t, std::span<const Var> p) {
            return weighted_sum(t, ops::channel_scale(t, p[0], p[1]), seed);
          },
          {random_tensor({2, 3, 3, 3}, rng), random_tensor({2, 3}, rng)});
    const std::vector<std::size_t> rows{2, 0, 2};
    check("select_rows",
          [&](auto& t, std::span<const Var> p) { return weighted_sum(t, ops::select_rows(t, p[0], rows), seed); },
          {random_tensor({3, 4}, rng)});
    const std::vector<std::size_t> labels{1, 0, 3};
    check("cross_entropy",
          [&](auto& t, std::span<const Var> p) { return ops::cross_entropy(t, p[0], labels); },
          {random_tensor({3, 4}, rng)});
    Tensor<double> q({3, 4});
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += q.at(r, c) = rng.uniform(0.05, 1.0);
      for (std::size_t c = 0; c < 4; ++c) q.at(r, c) /= s;
    }
    check("soft_cross_entropy",
          [&](auto& t, std::span<const Var> p) { return ops::soft_cross_entropy(t, p[0], as_tape_tensor(t, q)); },
          {random_tensor({3, 4}, rng)});
  }
}

TEST_CASE("ops reject mismatched shapes") {
  Tape<double> tape;
  const Var a = tape.constant(Tensor<double>({2, 3}));
  const Var b = tape.constant(Tensor<double>({3, 2}));
  CHECK_THROWS_AS(ops::add(tape, a, b), ContractViolation);
  CHECK_THROWS_AS(ops::linear(tape, a, tape.constant(Tensor<double>({2, 2})), tape.constant(Tensor<double>({2}))),
                  ContractViolation);
  const std::vector<std::size_t> bad{5, 0};
  CHECK_THROWS_AS(ops::cross_entropy(tape, a, bad), ContractViolation);
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;  // decay alone would move the weights
  Tensor<double> w({3}, {0.5, -1.0, 2.0}), b({2}, {0.1, 0.2});
  const Tensor<double> w0 = w, b0 = b;
  std::vector<ParamView<double>> views{{"w", &w, false}, {"b", &b, true}};
  auto state = make_optimizer<double>(cfg, 10, views);
  const std::vector<Tensor<double>> grads{Tensor<double>({3}), Tensor<double>({2})};
  for (int i = 0; i < 5; ++i) adam_step<double>(views, grads, state);
  CHECK(w == w0);
  CHECK(b == b0);
  CHECK(state.step_count == 5);
}

TEST_CASE("first adam step moves by lr * g / (g + eps)") {
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.lr_initial = 0.1;
  cfg.lr_final = 0.1;
  Tensor<double> p({1}, {0.0});
  std::vector<ParamView<double>> views{{"p", &p, false}};
  auto state = make_optimizer<double>(cfg, 1, views);
  adam_step<double>(views, std::vector<Tensor<double>>{Tensor<double>({1}, {1.0})}, state);
  CHECK(p[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(state.step_count == 1);
}

TEST_CASE("weight decay skips biases unless asked") {
  AdamConfig cfg;
  cfg.weight_decay = 0.5;
  Tensor<double> w({1}, {1.0}), b({1}, {1.0});
  std::vector<ParamView<double>> views{{"w", &w, false}, {"b", &b, true}};
  auto state = make_optimizer<double>(cfg, 4, views);
  const std::vector<Tensor<double>> zero{Tensor<double>({1}), Tensor<double>({1})};
  adam_step<double>(views, zero, state);
  CHECK(w[0] < 1.0);
  CHECK(b[0] == 1.0);
  cfg.decay_biases = true;
  Tensor<double> b2({1}, {1.0});
  std::vector<ParamView<double>> v2{{"b", &b2, true}};
  auto s2 = make_optimizer<double>(cfg, 4, v2);
  adam_step<double>(v2, std::vector<Tensor<double>>{Tensor<double>({1})}, s2);
  CHECK(b2[0] < 1.0);
}

TEST_CASE("learning-rate schedule hits both endpoints and decreases") {
  const AdamConfig cfg;  // 1e-4 -> 1e-7
  CHECK(scheduled_learning_rate(cfg, 0, 1000) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(scheduled_learning_rate(cfg, 1000, 1000) == doctest::Approx(1e-7).epsilon(1e-12));
  for (std::size_t s = 1; s <= 1000; ++s) {
    CHECK(scheduled_learning_rate(cfg, s, 1000) < scheduled_learning_rate(cfg, s - 1, 1000));
  }
}

TEST_CASE("adam rejects bad settings and shape mismatches") {
  AdamConfig cfg;
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = AdamConfig{};
  cfg.lr_final = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  Tensor<double> p({2});
  std::vector<ParamView<double>> views{{"p", &p, false}};
  auto state = make_optimizer<double>(AdamConfig{}, 3, views);
  CHECK_THROWS_AS(adam_step<double>(views, std::vector<Tensor<double>>{Tensor<double>({3})}, state),
                  ContractViolation);
}
