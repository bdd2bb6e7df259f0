#include "sake/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "sake/binary_io.hpp"
#include "sake/errors.hpp"
#include "sake/ops.hpp"
#include "sake/parallel.hpp"

namespace sake {

namespace {

constexpr std::string_view kCheckpointMagic = "SAKEMDL1";
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kKernel = 3;
constexpr std::size_t kEvalChunk = 64;

Tensor<float> kaiming(Shape shape, std::size_t fan_in, double gain, Rng& rng) {
  Tensor<float> t(std::move(shape));
  const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
  for (float& v : t.values()) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

template <typename T>
Tensor<T> domain_code(std::span<const Domain> domains, std::size_t width) {
  Tensor<T> code({domains.size(), width});
  for (std::size_t r = 0; r < domains.size(); ++r) {
    for (std::size_t j = 0; j < width; ++j) code.at(r, j) = static_cast<T>(domains[r] == Domain::kSketch);
  }
  return code;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_side == 0) throw ContractViolation("model: input_side must be positive");
  if (channels.empty()) throw ContractViolation("model: at least one conv block is required");
  for (std::size_t c : channels) {
    if (c == 0) throw ContractViolation("model: channel widths must be positive");
  }
  if (reduction == 0) throw ContractViolation("model: reduction must be positive");
  if (embedding_dim == 0) throw ContractViolation("model: embedding_dim must be positive");
}

std::size_t ModelConfig::gate_width(std::size_t block) const {
  return std::max<std::size_t>(1, channels.at(block) / reduction);
}

std::size_t ModelConfig::output_side() const {
  std::size_t side = input_side;
  for (std::size_t i = 0; i < channels.size(); ++i) side = (side + 2 - kKernel) / 2 + 1;
  return side;
}

template <typename T>
std::vector<ParamView<T>> ModelParamsT<T>::views() {
  std::vector<ParamView<T>> v;
  for (auto& b : blocks) {
    v.push_back({"conv.kernel", &b.kernel, false});
    v.push_back({"conv.bias", &b.bias, true});
    v.push_back({"cse.fc1_w", &b.cse.fc1_w, false});
    v.push_back({"cse.fc1_b", &b.cse.fc1_b, true});
    v.push_back({"cse.fc2_w", &b.cse.fc2_w, false});
    v.push_back({"cse.fc2_b", &b.cse.fc2_b, true});
  }
  v.push_back({"embed_w", &embed_w, false});
  v.push_back({"embed_b", &embed_b, true});
  if (!bench_w.empty()) {
    v.push_back({"bench_w", &bench_w, false});
    v.push_back({"bench_b", &bench_b, true});
  }
  if (!orig_w.empty()) {
    v.push_back({"orig_w", &orig_w, false});
    v.push_back({"orig_b", &orig_b, true});
  }
  return v;
}

template <typename T>
std::vector<const Tensor<T>*> ModelParamsT<T>::tensors() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& v : const_cast<ModelParamsT*>(this)->views()) out.push_back(v.tensor);
  return out;
}

template <typename T>
template <typename U>
ModelParamsT<U> ModelParamsT<T>::cast() const {
  auto conv = [](const Tensor<T>& t) { return t.empty() ? Tensor<U>() : t.template cast<U>(); };
  ModelParamsT<U> out;
  out.config = config;
  for (const auto& b : blocks) {
    out.blocks.push_back({conv(b.kernel), conv(b.bias),
                          {conv(b.cse.fc1_w), conv(b.cse.fc1_b), conv(b.cse.fc2_w), conv(b.cse.fc2_b)}});
  }
  out.embed_w = conv(embed_w);
  out.embed_b = conv(embed_b);
  out.bench_w = conv(bench_w);
  out.bench_b = conv(bench_b);
  out.orig_w = conv(orig_w);
  out.orig_b = conv(orig_b);
  return out;
}

template struct ModelParamsT<float>;
template struct ModelParamsT<double>;
template ModelParamsT<double> ModelParamsT<float>::cast<double>() const;
template ModelParamsT<float> ModelParamsT<double>::cast<float>() const;
template ModelParamsT<float> ModelParamsT<float>::cast<float>() const;

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  config.validate();
  ModelParams p;
  p.config = config;
  std::size_t in_ch = 1;
  for (std::size_t b = 0; b < config.channels.size(); ++b) {
    const std::size_t c = config.channels[b];
    const std::size_t r = config.gate_width(b);
    ConvBlockParams<float> block;
    block.kernel = kaiming({c, in_ch, kKernel, kKernel}, in_ch * kKernel * kKernel, 2.0, rng);
    block.bias = Tensor<float>({c});
    block.cse.fc1_w = kaiming({r, c}, c, 2.0, rng);
    block.cse.fc1_b = Tensor<float>({r});
    block.cse.fc2_w = kaiming({c, r + config.domain_code_width}, r + config.domain_code_width, 1.0, rng);
    block.cse.fc2_b = Tensor<float>({c});
    p.blocks.push_back(std::move(block));
    in_ch = c;
  }
  const std::size_t side = config.output_side();
  const std::size_t flat = in_ch * side * side;
  p.embed_w = kaiming({config.embedding_dim, flat}, flat, 1.0, rng);
  p.embed_b = Tensor<float>({config.embedding_dim});
  if (config.num_source > 0) reset_benchmark_head(p, config.num_source, rng);
  if (config.num_original > 0) {
    p.orig_w = kaiming({config.num_original, config.embedding_dim}, config.embedding_dim, 1.0, rng);
    p.orig_b = Tensor<float>({config.num_original});
  }
  return p;
}

void reset_benchmark_head(ModelParams& params, std::size_t num_source, Rng& rng) {
  params.config.num_source = num_source;
  if (num_source == 0) {
    params.bench_w = {};
    params.bench_b = {};
    return;
  }
  const std::size_t m = params.config.embedding_dim;
  params.bench_w = kaiming({num_source, m}, m, 1.0, rng);
  params.bench_b = Tensor<float>({num_source});
}

template <typename T>
BoundParams bind(Tape<T>& tape, const ModelParamsT<T>& params, bool trainable) {
  BoundParams bound;
  auto put = [&](const Tensor<T>& t) {
    if (t.empty()) return Var{};
    const Var v = trainable ? tape.parameter(t) : tape.constant(t);
    bound.all.push_back(v);
    return v;
  };
  for (const auto& b : params.blocks) {
    BoundParams::Block blk;
    blk.kernel = put(b.kernel);
    blk.bias = put(b.bias);
    blk.fc1_w = put(b.cse.fc1_w);
    blk.fc1_b = put(b.cse.fc1_b);
    blk.fc2_w = put(b.cse.fc2_w);
    blk.fc2_b = put(b.cse.fc2_b);
    bound.blocks.push_back(blk);
  }
  bound.embed_w = put(params.embed_w);
  bound.embed_b = put(params.embed_b);
  bound.bench_w = put(params.bench_w);
  bound.bench_b = put(params.bench_b);
  bound.orig_w = put(params.orig_w);
  bound.orig_b = put(params.orig_b);
  return bound;
}

template <typename T>
Var cse_gate(Tape<T>& tape, const BoundParams::Block& block, Var x, std::span<const Domain> domains,
             std::size_t domain_code_width) {
  const Tensor<T>& xv = tape.value(x);
  if (xv.rank() != 4 || xv.dim(1) != tape.value(block.fc1_w).dim(1)) {
    throw ContractViolation("cse: input " + shape_string(xv.shape()) + " does not match gate width " +
                            std::to_string(tape.value(block.fc1_w).dim(1)));
  }
  if (domains.size() != xv.dim(0)) throw ContractViolation("cse: one domain bit per sample required");
  const Var squeezed = ops::global_avg_pool(tape, x);
  Var hidden = ops::relu(tape, ops::linear(tape, squeezed, block.fc1_w, block.fc1_b));
  if (domain_code_width > 0) {
    hidden = ops::concat_cols(tape, hidden, tape.constant(domain_code<T>(domains, domain_code_width)));
  }
  const Var gate = ops::sigmoid(tape, ops::linear(tape, hidden, block.fc2_w, block.fc2_b));
  return ops::channel_scale(tape, x, gate);
}

template <typename T>
Var embed(Tape<T>& tape, const ModelConfig& config, const BoundParams& bound, Var images,
          std::span<const Domain> domains) {
  const Tensor<T>& iv = tape.value(images);
  if (iv.rank() != 4 || iv.dim(1) != 1 || iv.dim(2) != config.input_side || iv.dim(3) != config.input_side) {
    throw ContractViolation("embed: expected [N,1," + std::to_string(config.input_side) + "," +
                            std::to_string(config.input_side) + "] images, got " + shape_string(iv.shape()));
  }
  Var h = images;
  for (const auto& blk : bound.blocks) {
    h = ops::relu(tape, ops::conv2d(tape, h, blk.kernel, blk.bias, 2, 1));
    h = cse_gate(tape, blk, h, domains, config.domain_code_width);
  }
  return ops::linear(tape, ops::flatten(tape, h), bound.embed_w, bound.embed_b);
}

template <typename T>
Var benchmark_logits(Tape<T>& tape, const BoundParams& bound, Var embedding) {
  if (!bound.bench_w.valid()) throw ContractViolation("model has no benchmark head");
  return ops::linear(tape, embedding, bound.bench_w, bound.bench_b);
}

template <typename T>
Var original_logits(Tape<T>& tape, const BoundParams& bound, Var embedding) {
  if (!bound.orig_w.valid()) throw ContractViolation("model has no original-domain head");
  return ops::linear(tape, embedding, bound.orig_w, bound.orig_b);
}

#define SAKE_INSTANTIATE_MODEL(T)                                                                   \
  template BoundParams bind<T>(Tape<T>&, const ModelParamsT<T>&, bool);                             \
  template Var cse_gate<T>(Tape<T>&, const BoundParams::Block&, Var, std::span<const Domain>,       \
                           std::size_t);                                                            \
  template Var embed<T>(Tape<T>&, const ModelConfig&, const BoundParams&, Var,                      \
                        std::span<const Domain>);                                                   \
  template Var benchmark_logits<T>(Tape<T>&, const BoundParams&, Var);                              \
  template Var original_logits<T>(Tape<T>&, const BoundParams&, Var);

SAKE_INSTANTIATE_MODEL(float)
SAKE_INSTANTIATE_MODEL(double)
SAKE_INSTANTIATE_MODEL(long double)
#undef SAKE_INSTANTIATE_MODEL

Tensor<float> cse_forward(const Tensor<float>& block_input, Domain domain, const CseParams<float>& params,
                          std::size_t domain_code_width) {
  if (block_input.rank() != 3) throw ContractViolation("cse_forward: expected [C,H,W] input");
  Tape<float> tape;
  BoundParams::Block blk;
  blk.fc1_w = tape.constant(params.fc1_w);
  blk.fc1_b = tape.constant(params.fc1_b);
  blk.fc2_w = tape.constant(params.fc2_w);
  blk.fc2_b = tape.constant(params.fc2_b);
  Shape s = block_input.shape();
  s.insert(s.begin(), 1);
  const Var x = tape.constant(block_input.reshaped(s));
  const Domain d[1] = {domain};
  return tape.value(cse_gate(tape, blk, x, d, domain_code_width)).reshaped(block_input.shape());
}

namespace {

// Runs fn(begin, end) over fixed chunks so results never depend on the thread count.
Tensor<float> chunked_rows(std::size_t n, std::size_t width,
                           const std::function<Tensor<float>(std::size_t, std::size_t)>& fn) {
  Tensor<float> out({n, width});
  const std::size_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kEvalChunk, end = std::min(n, begin + kEvalChunk);
    const Tensor<float> part = fn(begin, end);
    std::copy(part.values().begin(), part.values().end(), out.data() + begin * width);
  });
  return out;
}

Tensor<float> slice_images(const Tensor<float>& images, std::size_t begin, std::size_t end) {
  const std::size_t per = images.size() / images.dim(0);
  Shape s = images.shape();
  s[0] = end - begin;
  std::vector<float> v(images.data() + begin * per, images.data() + end * per);
  return Tensor<float>(s, std::move(v));
}

}  // namespace

Tensor<float> embed_batch(const ModelParams& params, const Tensor<float>& images,
                          std::span<const Domain> domains) {
  if (images.rank() != 4 || domains.size() != images.dim(0)) {
    throw ContractViolation("embed_batch: expected [N,1,S,S] images and N domain bits");
  }
  return chunked_rows(images.dim(0), params.config.embedding_dim, [&](std::size_t b, std::size_t e) {
    Tape<float> tape;
    const BoundParams bound = bind(tape, params, false);
    const Var x = embed(tape, params.config, bound, tape.constant(slice_images(images, b, e)),
                        domains.subspan(b, e - b));
    return tape.value(x);
  });
}

Tensor<float> original_logits_batch(const ModelParams& params, const Tensor<float>& images,
                                    std::span<const Domain> domains) {
  if (images.rank() != 4 || domains.size() != images.dim(0)) {
    throw ContractViolation("original_logits_batch: expected [N,1,S,S] images and N domain bits");
  }
  return chunked_rows(images.dim(0), params.config.num_original, [&](std::size_t b, std::size_t e) {
    Tape<float> tape;
    const BoundParams bound = bind(tape, params, false);
    const Var x = embed(tape, params.config, bound, tape.constant(slice_images(images, b, e)),
                        domains.subspan(b, e - b));
    return tape.value(original_logits(tape, bound, x));
  });
}

Tensor<float> embed_one(const ModelParams& params, const Tensor<float>& image, Domain domain) {
  const std::size_t s = params.config.input_side;
  if (image.size() != s * s) {
    throw ContractViolation("embed: image has " + std::to_string(image.size()) + " pixels, expected " +
                            std::to_string(s * s));
  }
  const Domain d[1] = {domain};
  const Tensor<float> out = embed_batch(params, image.reshaped({1, 1, s, s}), d);
  return out.reshaped({params.config.embedding_dim});
}

namespace {

std::vector<double> head_softmax(const Tensor<float>& w, const Tensor<float>& b, std::span<const float> x,
                                 const char* which) {
  if (w.empty()) throw ContractViolation(std::string("model has no ") + which + " head");
  if (x.size() != w.dim(1)) throw ContractViolation(std::string(which) + ": embedding length mismatch");
  std::vector<double> logits(w.dim(0));
  for (std::size_t k = 0; k < w.dim(0); ++k) {
    double s = b[k];
    for (std::size_t j = 0; j < x.size(); ++j) s += static_cast<double>(w.at(k, j)) * x[j];
    logits[k] = s;
  }
  return softmax<double>(logits);
}

}  // namespace

std::vector<double> classify_benchmark(const ModelParams& params, std::span<const float> embedding) {
  return head_softmax(params.bench_w, params.bench_b, embedding, "benchmark");
}

std::vector<double> classify_original(const ModelParams& params, std::span<const float> embedding) {
  return head_softmax(params.orig_w, params.orig_b, embedding, "original");
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractViolation("cannot write checkpoint " + path.string());
  const ModelConfig& c = params.config;
  binio::write_magic(out, kCheckpointMagic);
  binio::write_u32(out, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(c.input_side));
  binio::write_u32(out, static_cast<std::uint32_t>(c.channels.size()));
  for (std::size_t ch : c.channels) binio::write_u32(out, static_cast<std::uint32_t>(ch));
  binio::write_u32(out, static_cast<std::uint32_t>(c.reduction));
  binio::write_u32(out, static_cast<std::uint32_t>(c.embedding_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(c.num_source));
  binio::write_u32(out, static_cast<std::uint32_t>(c.num_original));
  binio::write_u32(out, static_cast<std::uint32_t>(c.domain_code_width));
  const auto tensors = params.tensors();
  binio::write_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor<float>* t : tensors) {
    binio::write_u32(out, static_cast<std::uint32_t>(t->size()));
    for (float v : t->values()) binio::write_f32(out, v);
  }
  if (!out) throw ContractViolation("failed writing checkpoint " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open checkpoint " + path.string());
  binio::expect_magic(in, kCheckpointMagic);
  const std::uint32_t version = binio::read_u32(in);
  if (version != kCheckpointVersion) {
    throw ContractViolation("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.input_side = binio::read_u32(in);
  c.channels.assign(binio::read_u32(in), 0);
  for (auto& ch : c.channels) ch = binio::read_u32(in);
  c.reduction = binio::read_u32(in);
  c.embedding_dim = binio::read_u32(in);
  c.num_source = binio::read_u32(in);
  c.num_original = binio::read_u32(in);
  c.domain_code_width = binio::read_u32(in);
  c.validate();

  Rng scratch(0);
  ModelParams p = init_params(c, scratch);
  auto views = p.views();
  if (binio::read_u32(in) != views.size()) throw ContractViolation("checkpoint tensor count mismatch");
  for (auto& v : views) {
    if (binio::read_u32(in) != v.tensor->size()) {
      throw ContractViolation("checkpoint tensor size mismatch for " + std::string(v.name));
    }
    for (float& x : v.tensor->values()) x = binio::read_f32(in);
  }
  return p;
}

}  // namespace sake
