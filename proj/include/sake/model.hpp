#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sake/adam.hpp"
#include "sake/autodiff.hpp"
#include "sake/rng.hpp"
#include "sake/tensor.hpp"

namespace sake {

enum class Domain : std::uint8_t { kPhoto = 0, kSketch = 1 };

struct ModelConfig {
  std::size_t input_side = 32;
  // One 3x3 stride-2 conv block (+ CSE gate) per entry.
  std::vector<std::size_t> channels{16, 32, 32};
  // Gate hidden width is max(1, channels / reduction).
  std::size_t reduction = 4;
  std::size_t embedding_dim = 64;
  // 0 means the head is absent (a teacher has no benchmark head).
  std::size_t num_source = 0;
  std::size_t num_original = 0;
  // 0 turns every CSE gate into a plain SE gate.
  std::size_t domain_code_width = 1;

  void validate() const;
  std::size_t gate_width(std::size_t block) const;
  // Spatial side after all blocks.
  std::size_t output_side() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct CseParams {
  Tensor<T> fc1_w;  // [r, C]
  Tensor<T> fc1_b;  // [r]
  Tensor<T> fc2_w;  // [C, r + domain_code_width]
  Tensor<T> fc2_b;  // [C]

  bool operator==(const CseParams&) const = default;
};

template <typename T>
struct ConvBlockParams {
  Tensor<T> kernel;  // [C_out, C_in, 3, 3]
  Tensor<T> bias;    // [C_out]
  CseParams<T> cse;

  bool operator==(const ConvBlockParams&) const = default;
};

// All learnable weights: conv blocks with their gates, the embedding
// projection, the benchmark head (alpha, beta) and the original head (zeta, eta).
// Linear weights are stored [out, in].
template <typename T>
struct ModelParamsT {
  ModelConfig config;
  std::vector<ConvBlockParams<T>> blocks;
  Tensor<T> embed_w;  // [M, C_last * side * side]
  Tensor<T> embed_b;  // [M]
  Tensor<T> bench_w;  // [|C^S|, M]
  Tensor<T> bench_b;  // [|C^S|]
  Tensor<T> orig_w;   // [|C^O|, M]
  Tensor<T> orig_b;   // [|C^O|]

  // Every present tensor in checkpoint order.
  std::vector<ParamView<T>> views();
  std::vector<const Tensor<T>*> tensors() const;

  template <typename U>
  ModelParamsT<U> cast() const;

  bool operator==(const ModelParamsT&) const = default;
};

using ModelParams = ModelParamsT<float>;

// Kaiming fan-in normal init for weights, zeros for biases.
ModelParams init_params(const ModelConfig& config, Rng& rng);

// Fresh benchmark head of the given width, Kaiming initialized.
void reset_benchmark_head(ModelParams& params, std::size_t num_source, Rng& rng);

// Parameter tensors bound onto a tape.
struct BoundParams {
  struct Block {
    Var kernel, bias, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  std::vector<Block> blocks;
  Var embed_w, embed_b, bench_w, bench_b, orig_w, orig_b;
  std::vector<Var> all;  // in views() order
};

template <typename T>
BoundParams bind(Tape<T>& tape, const ModelParamsT<T>& params, bool trainable);

// CSE gate over a block output x [N, C, H, W]. domains has one entry per row.
template <typename T>
Var cse_gate(Tape<T>& tape, const BoundParams::Block& block, Var x, std::span<const Domain> domains,
             std::size_t domain_code_width);

// Embeddings [N, M] for images [N, 1, S, S].
template <typename T>
Var embed(Tape<T>& tape, const ModelConfig& config, const BoundParams& bound, Var images,
          std::span<const Domain> domains);

template <typename T>
Var benchmark_logits(Tape<T>& tape, const BoundParams& bound, Var embedding);

template <typename T>
Var original_logits(Tape<T>& tape, const BoundParams& bound, Var embedding);

// Evaluation-only helpers (no gradient tracking).
Tensor<float> cse_forward(const Tensor<float>& block_input, Domain domain, const CseParams<float>& params,
                          std::size_t domain_code_width);
Tensor<float> embed_one(const ModelParams& params, const Tensor<float>& image, Domain domain);
// images [N, 1, S, S] -> [N, M]
Tensor<float> embed_batch(const ModelParams& params, const Tensor<float>& images,
                          std::span<const Domain> domains);
std::vector<double> classify_benchmark(const ModelParams& params, std::span<const float> embedding);
std::vector<double> classify_original(const ModelParams& params, std::span<const float> embedding);
// Raw original-head logits [N, |C^O|] for images [N, 1, S, S].
Tensor<float> original_logits_batch(const ModelParams& params, const Tensor<float>& images,
                                    std::span<const Domain> domains);

// Checkpoint: "SAKEMDL1", u32 version, u32 config fields, u32 tensor count,
// then per tensor u32 length + little-endian f32 values in views() order.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sake
