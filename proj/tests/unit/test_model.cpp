#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "model_fixture.hpp"
#include "sake/errors.hpp"
#include "sake/gradcheck.hpp"
#include "sake/model.hpp"
#include "sake/ops.hpp"

using namespace sake;
using testing::bound_from;
using testing::param_list;
using testing::tiny_config;

namespace {

ModelParams random_params(const ModelConfig& c, std::uint64_t seed, double bias_sd = 0.1) {
  Rng rng(seed);
  ModelParams p = init_params(c, rng);
  for (auto& v : p.views()) {
    if (v.is_bias) {
      for (float& x : v.tensor->values()) x = static_cast<float>(rng.normal(0.0, bias_sd));
    }
  }
  return p;
}

Tensor<float> random_image(std::size_t side, Rng& rng) {
  Tensor<float> img({side * side});
  for (float& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

CseParams<float> random_cse(std::size_t c, std::size_t r, std::size_t width, Rng& rng) {
  CseParams<float> p;
  p.fc1_w = Tensor<float>({r, c});
  p.fc1_b = Tensor<float>({r});
  p.fc2_w = Tensor<float>({c, r + width});
  p.fc2_b = Tensor<float>({c});
  for (auto* t : {&p.fc1_w, &p.fc1_b, &p.fc2_w, &p.fc2_b}) {
    for (float& v : t->values()) v = static_cast<float>(rng.normal());
  }
  return p;
}

}  // namespace

TEST_CASE("zero gate weights halve every channel") {
  Rng rng(1);
  CseParams<float> p;
  p.fc1_w = Tensor<float>({2, 4});
  p.fc1_b = Tensor<float>({2});
  p.fc2_w = Tensor<float>({4, 3});
  p.fc2_b = Tensor<float>({4});
  Tensor<float> x({4, 3, 3});
  for (float& v : x.values()) v = static_cast<float>(rng.normal());
  for (Domain d : {Domain::kPhoto, Domain::kSketch}) {
    const Tensor<float> y = cse_forward(x, d, p, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 0.5f * x[i]);
  }
}

TEST_CASE("gates shrink every channel and the domain bit changes the output") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const CseParams<float> p = random_cse(4, 2, 1, rng);
    Tensor<float> x({4, 3, 3});
    for (float& v : x.values()) v = static_cast<float>(rng.normal());
    const Tensor<float> photo = cse_forward(x, Domain::kPhoto, p, 1);
    const Tensor<float> sketch = cse_forward(x, Domain::kSketch, p, 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(photo[i]) <= std::abs(x[i]));
    CHECK_FALSE(photo == sketch);
  }
}

TEST_CASE("cse rejects a channel mismatch") {
  Rng rng(3);
  const CseParams<float> p = random_cse(4, 2, 1, rng);
  CHECK_THROWS_AS(cse_forward(Tensor<float>({5, 3, 3}), Domain::kPhoto, p, 1), ContractViolation);
}

TEST_CASE("zero image with zero weights embeds to zero") {
  ModelConfig c;
  c.num_source = 3;
  c.num_original = 4;
  Rng rng(4);
  ModelParams p = init_params(c, rng);
  for (auto& v : p.views()) v.tensor->fill(0.0f);
  const Tensor<float> e = embed_one(p, Tensor<float>({32 * 32}), Domain::kSketch);
  CHECK(e.size() == c.embedding_dim);
  for (float v : e.values()) CHECK(v == 0.0f);
}

TEST_CASE("embedding has length M, is deterministic and depends on the domain") {
  ModelConfig c;
  const ModelParams p = random_params(c, 5);
  Rng rng(6);
  const Tensor<float> img = random_image(32, rng);
  const Tensor<float> a = embed_one(p, img, Domain::kPhoto);
  CHECK(a.size() == 64);
  CHECK(a == embed_one(p, img, Domain::kPhoto));
  CHECK_FALSE(a == embed_one(p, img, Domain::kSketch));
  CHECK_THROWS_AS(embed_one(p, Tensor<float>({31 * 31}), Domain::kPhoto), ContractViolation);
}

TEST_CASE("domain code width 0 makes the gate domain-blind") {
  ModelConfig c;
  c.domain_code_width = 0;
  const ModelParams p = random_params(c, 7);
  Rng rng(8);
  const Tensor<float> img = random_image(32, rng);
  CHECK(embed_one(p, img, Domain::kPhoto) == embed_one(p, img, Domain::kSketch));
}

TEST_CASE("batched embedding matches single-image embedding") {
  ModelConfig c;
  const ModelParams p = random_params(c, 9);
  Rng rng(10);
  const std::size_t n = 70;  // spans two evaluation chunks
  Tensor<float> batch({n, 1, 32, 32});
  std::vector<Domain> doms;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor<float> img = random_image(32, rng);
    std::copy(img.values().begin(), img.values().end(), batch.data() + i * 32 * 32);
    doms.push_back(i % 3 == 0 ? Domain::kSketch : Domain::kPhoto);
  }
  const Tensor<float> all = embed_batch(p, batch, doms);
  for (std::size_t i : {std::size_t{0}, std::size_t{63}, std::size_t{64}, n - 1}) {
    const Tensor<float> img({32 * 32}, std::vector<float>(batch.data() + i * 1024, batch.data() + (i + 1) * 1024));
    const Tensor<float> one = embed_one(p, img, doms[i]);
    for (std::size_t j = 0; j < 64; ++j) CHECK(all.at(i, j) == doctest::Approx(one[j]).epsilon(1e-5));
  }
}

TEST_CASE("heads produce distributions") {
  ModelConfig c;
  c.num_source = 5;
  c.num_original = 7;
  Rng rng(11);
  ModelParams p = init_params(c, rng);
  std::vector<float> x(64);
  for (float& v : x) v = static_cast<float>(rng.normal());
  for (int trial = 0; trial < 10; ++trial) {
    const auto yb = classify_benchmark(p, x);
    const auto yo = classify_original(p, x);
    CHECK(yb.size() == 5);
    CHECK(yo.size() == 7);
    CHECK(std::abs(std::accumulate(yb.begin(), yb.end(), 0.0) - 1.0) < 1e-12);
    CHECK(std::abs(std::accumulate(yo.begin(), yo.end(), 0.0) - 1.0) < 1e-12);
    // argmax of the distribution is the argmax of the raw logits
    std::vector<double> logits(5);
    for (std::size_t k = 0; k < 5; ++k) {
      logits[k] = p.bench_b[k];
      for (std::size_t j = 0; j < 64; ++j) logits[k] += static_cast<double>(p.bench_w.at(k, j)) * x[j];
    }
    CHECK(std::max_element(yb.begin(), yb.end()) - yb.begin() ==
          std::max_element(logits.begin(), logits.end()) - logits.begin());
    for (float& v : x) v = static_cast<float>(rng.normal());
  }
  p.bench_w.fill(0.0f);
  p.bench_b.fill(0.0f);
  p.orig_w.fill(0.0f);
  p.orig_b.fill(0.0f);
  for (double v : classify_benchmark(p, x)) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  for (double v : classify_original(p, x)) CHECK(v == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("a teacher without a benchmark head cannot classify source classes") {
  ModelConfig c;
  c.num_original = 3;
  Rng rng(12);
  const ModelParams p = init_params(c, rng);
  CHECK(p.bench_w.empty());
  CHECK_THROWS_AS(classify_benchmark(p, std::vector<float>(64)), ContractViolation);
}

TEST_CASE("full model passes a finite-difference check through both heads") {
  const ModelConfig c = tiny_config();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ModelParamsT<double> shape = random_params(c, seed, 0.3).cast<double>();
    Rng rng(seed + 500);
    Tensor<double> images({3, 1, 8, 8});
    for (double& v : images.values()) v = rng.uniform();
    const std::vector<Domain> doms{Domain::kPhoto, Domain::kSketch, Domain::kPhoto};
    const std::vector<std::size_t> labels{0, 2, 1};
    Tensor<double> q({3, 4});
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += q.at(r, k) = rng.uniform(0.1, 1.0);
      for (std::size_t k = 0; k < 4; ++k) q.at(r, k) /= s;
    }
    const auto r = gradient_check(
        [&](auto& t, std::span<const Var> vars) {
          const BoundParams b = bound_from(shape, vars);
          const Var x = embed(t, c, b, t.constant(as_tape_tensor(t, images)), doms);
          const Var lb = ops::cross_entropy(t, benchmark_logits(t, b, x), labels);
          const Var lo = ops::soft_cross_entropy(t, original_logits(t, b, x), as_tape_tensor(t, q));
          return ops::add(t, lb, lo);
        },
        param_list(shape));
    INFO("seed " << seed << " param " << r.worst_param << "[" << r.worst_index << "] analytic " << r.analytic
                 << " numeric " << r.numeric);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("checkpoints round-trip bit for bit") {
  ModelConfig c;
  c.num_source = 10;
  c.num_original = 20;
  const ModelParams p = random_params(c, 13);
  const auto path = std::filesystem::temp_directory_path() / "sake_test_ckpt.bin";
  save_checkpoint(p, path);
  const ModelParams back = load_checkpoint(path);
  CHECK(back == p);

  ModelConfig teacher_cfg;
  teacher_cfg.num_original = 20;
  const ModelParams t = random_params(teacher_cfg, 14);
  save_checkpoint(t, path);
  CHECK(load_checkpoint(path) == t);

  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACHECKPOINT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ContractViolation);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), LookupError);
}
