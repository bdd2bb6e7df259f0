#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sake/autodiff.hpp"
#include "sake/tensor.hpp"

// Differentiable ops over Tape<T>. Instantiated for float (training) and
// double (gradient checks). Layouts: images NCHW, matrices row-major [rows, cols],
// linear weights [out, in].
namespace sake::ops {

template <typename T> Var add(Tape<T>& tape, Var a, Var b);
template <typename T> Var mul(Tape<T>& tape, Var a, Var b);
template <typename T> Var scale(Tape<T>& tape, Var a, T factor);
template <typename T> Var sum(Tape<T>& tape, Var a);
template <typename T> Var relu(Tape<T>& tape, Var a);
template <typename T> Var sigmoid(Tape<T>& tape, Var a);

// Row-wise softmax of [N, K].
template <typename T> Var softmax_rows(Tape<T>& tape, Var a);

// y = x W^T + b; x [N, in], w [out, in], b [out].
template <typename T> Var linear(Tape<T>& tape, Var x, Var w, Var b);

// Square-kernel convolution; x [N, C, H, W], w [K, C, k, k], b [K].
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, std::size_t stride, std::size_t pad);

// [N, C, H, W] -> [N, C]
template <typename T> Var global_avg_pool(Tape<T>& tape, Var x);

// [N, ...] -> [N, prod(...)]
template <typename T> Var flatten(Tape<T>& tape, Var x);

// [N, p] ++ [N, q] -> [N, p + q]
template <typename T> Var concat_cols(Tape<T>& tape, Var a, Var b);

// Multiplies channel c of sample n by gate[n, c]; x [N, C, H, W], gate [N, C].
template <typename T> Var channel_scale(Tape<T>& tape, Var x, Var gate);

// Keeps the listed rows of [N, ...].
template <typename T>
Var select_rows(Tape<T>& tape, Var a, std::span<const std::size_t> rows);

// Mean over rows of -log softmax(logits)[label].
template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const std::size_t> labels);

// Mean over rows of -sum_m q[m] log softmax(logits)[m]. targets [N, K].
template <typename T>
Var soft_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& targets);

}  // namespace sake::ops

namespace sake {

// Numerically stable softmax (max-subtracted).
template <typename T> std::vector<T> softmax(std::span<const T> logits);

template <typename T> T log_sum_exp(std::span<const T> logits);

}  // namespace sake
