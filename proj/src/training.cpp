#include "sake/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "sake/errors.hpp"
#include "sake/ops.hpp"
#include "sake/rng.hpp"

namespace sake {

namespace {

constexpr double kDivergenceAccuracy = 0.6;

// Head index of every sample; throws if a sample's class is not in classes.
std::vector<std::size_t> head_labels(std::span<const Sample> samples, std::span<const int> classes) {
  std::map<int, std::size_t> index;
  for (std::size_t k = 0; k < classes.size(); ++k) index[classes[k]] = k;
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    auto it = index.find(s.class_id);
    if (it == index.end()) {
      throw ContractViolation("sample of class " + std::to_string(s.class_id) + " is not in the head's class list");
    }
    out.push_back(it->second);
  }
  return out;
}

// Class-balanced epoch order: each class's samples are shuffled, then classes
// are interleaved round-robin in a shuffled class order.
std::vector<std::size_t> epoch_order(std::span<const std::size_t> labels, std::size_t num_classes, Rng& rng) {
  std::vector<std::vector<std::size_t>> per_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) per_class[labels[i]].push_back(i);
  for (auto& v : per_class) rng.shuffle(v);
  std::vector<std::size_t> class_order(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) class_order[k] = k;
  rng.shuffle(class_order);
  std::vector<std::size_t> order;
  order.reserve(labels.size());
  for (std::size_t round = 0; order.size() < labels.size(); ++round) {
    for (std::size_t k : class_order) {
      if (round < per_class[k].size()) order.push_back(per_class[k][round]);
    }
  }
  return order;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

template <typename Fn>
auto guarded(const char* phase, std::size_t epoch, std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingDivergence&) {
    throw;
  } catch (const NumericError& e) {
    throw TrainingDivergence(e.op(), std::string(phase) + ": non-finite value at epoch " + std::to_string(epoch) +
                                         ", step " + std::to_string(step) + " (" + e.what() + ")");
  }
}

Batch<float> make_batch(std::span<const Sample> samples, std::span<const std::size_t> labels,
                        std::span<const std::size_t> rows, std::size_t side, const AugmentConfig& aug, Rng& rng) {
  Batch<float> batch;
  std::vector<float> pixels;
  pixels.reserve(rows.size() * side * side);
  for (std::size_t i : rows) {
    const auto img = augment(samples[i].pixels, side, rng, aug);
    pixels.insert(pixels.end(), img.begin(), img.end());
    batch.domains.push_back(samples[i].modality);
    batch.labels.push_back(labels[i]);
  }
  batch.images = Tensor<float>({rows.size(), 1, side, side}, std::move(pixels));
  return batch;
}

void apply_gradients(Tape<float>& tape, const BoundParams& bound, ModelParams& params,
                     OptimizerState<float>& opt) {
  auto views = params.views();
  std::vector<Tensor<float>> grads;
  grads.reserve(bound.all.size());
  for (Var v : bound.all) grads.push_back(tape.grad(v));
  adam_step<float>(views, grads, opt);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<int> sorted_unique(std::span<const int> v) {
  std::vector<int> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ContractViolation("epochs and batch size must be positive");
  adam.validate();
  loss.validate();
  if (augment.max_shift < 0 || augment.flip_probability < 0 || augment.flip_probability > 1 ||
      augment.noise_sigma < 0) {
    throw ContractViolation("invalid augmentation settings");
  }
}

TrainConfig default_pretrain_config() {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.adam.lr_initial = 3e-3;
  cfg.adam.lr_final = 3e-5;
  return cfg;
}

void ProbeConfig::validate() const {
  if (epochs == 0 || batch_size == 0) throw ContractViolation("probe epochs and batch size must be positive");
  adam.validate();
}

ProbeConfig default_probe_config() {
  ProbeConfig cfg;
  cfg.adam.lr_initial = 1e-1;
  cfg.adam.lr_final = 1e-3;
  return cfg;
}

nlohmann::json TrainReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["phase"] = phase;
  j["seed"] = seed;
  j["config"] = config;
  nlohmann::json rows = nlohmann::json::array();
  for (const EpochStats& e : epochs) {
    nlohmann::json r = {{"epoch", e.epoch}, {"total", e.total}, {"benchmark", e.benchmark}, {"steps", e.steps}};
    if (phase == "finetune") r["sake"] = e.sake;
    rows.push_back(r);
  }
  j["epochs"] = rows;
  j["train_accuracy"] = train_accuracy;
  if (heldout_accuracy >= 0) j["heldout_accuracy"] = heldout_accuracy;
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"adam",
           {{"beta1", cfg.adam.beta1},
            {"beta2", cfg.adam.beta2},
            {"epsilon", cfg.adam.epsilon},
            {"weight_decay", cfg.adam.weight_decay},
            {"decay_biases", cfg.adam.decay_biases},
            {"lr_initial", cfg.adam.lr_initial},
            {"lr_final", cfg.adam.lr_final}}},
          {"loss",
           {{"lambda_sake", cfg.loss.lambda_sake},
            {"lambda1", cfg.loss.lambda1},
            {"lambda2", cfg.loss.lambda2},
            {"apply_sake_to_sketches", cfg.loss.apply_sake_to_sketches},
            {"teacher_only", cfg.loss.teacher_only}}},
          {"augment",
           {{"max_shift", cfg.augment.max_shift},
            {"flip_probability", cfg.augment.flip_probability},
            {"noise_sigma", cfg.augment.noise_sigma}}}};
}

nlohmann::json to_json(const ProbeConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed},
          {"lr_initial", cfg.adam.lr_initial},
          {"lr_final", cfg.adam.lr_final}};
}

OriginalSplit split_original(std::span<const Sample> original) {
  std::map<int, std::vector<const Sample*>> by_class;
  for (const Sample& s : original) by_class[s.class_id].push_back(&s);
  OriginalSplit out;
  for (auto& [c, v] : by_class) {
    std::stable_sort(v.begin(), v.end(), [](const Sample* a, const Sample* b) { return a->sample_id < b->sample_id; });
    for (std::size_t i = 0; i < v.size(); ++i) (i % 5 == 4 ? out.heldout : out.train).push_back(*v[i]);
  }
  return out;
}

double head_accuracy(const ModelParams& params, std::span<const Sample> samples, std::span<const int> classes,
                     bool original_head) {
  if (samples.empty()) throw ContractViolation("accuracy over an empty sample set");
  const auto labels = head_labels(samples, classes);
  const std::size_t side = params.config.input_side;
  const Tensor<float> images = stack_images(samples, side);
  const auto domains = modalities(samples);
  const Tensor<float> emb = embed_batch(params, images, domains);
  const Tensor<float>& w = original_head ? params.orig_w : params.bench_w;
  const Tensor<float>& b = original_head ? params.orig_b : params.bench_b;
  if (w.empty()) throw ContractViolation("model lacks the requested head");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto x = emb.row(i);
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t k = 0; k < w.dim(0); ++k) {
      double v = b[k];
      for (std::size_t j = 0; j < x.size(); ++j) v += static_cast<double>(w.at(k, j)) * x[j];
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

TrainResult pretrain_teacher(std::span<const Sample> train, std::span<const int> original_classes,
                             const ModelConfig& model, const TrainConfig& cfg, std::span<const Sample> heldout) {
  cfg.validate();
  if (train.empty()) throw ContractViolation("pretrain: the original split is empty");
  for (const Sample& s : train) {
    if (s.modality != Domain::kPhoto) throw ContractViolation("pretrain: the original split must be photos only");
  }
  if (sorted_unique(original_classes).size() != original_classes.size()) {
    throw ContractViolation("pretrain: duplicate original class");
  }
  const auto start = std::chrono::steady_clock::now();
  ModelConfig mc = model;
  mc.num_source = 0;
  mc.num_original = original_classes.size();
  Rng init_rng = Rng::keyed({cfg.seed, 0x7465616368ULL});
  TrainResult result{init_params(mc, init_rng), {}};
  ModelParams& params = result.params;
  const auto labels = head_labels(train, original_classes);

  const std::size_t per_epoch = steps_per_epoch(train.size(), cfg.batch_size);
  auto views = params.views();
  OptimizerState<float> opt = make_optimizer<float>(cfg.adam, cfg.epochs * per_epoch, views);
  Rng rng = Rng::keyed({cfg.seed, 0x70726574ULL});
  TrainReport& report = result.report;
  report.phase = "pretrain";
  report.seed = cfg.seed;
  report.config = to_json(cfg);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(labels, original_classes.size(), rng);
    EpochStats stats{epoch, 0, 0, 0, 0};
    for (std::size_t step = 0; step < per_epoch; ++step) {
      const std::size_t b = step * cfg.batch_size, e = std::min(order.size(), b + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + b, e - b);
      const Batch<float> batch = make_batch(train, labels, rows, mc.input_side, cfg.augment, rng);
      const double loss = guarded("pretrain", epoch, step, [&] {
        Tape<float> tape;
        const BoundParams bound = bind(tape, params, true);
        const Var x = embed(tape, mc, bound, tape.constant(batch.images), batch.domains);
        const Var l = ops::cross_entropy(tape, original_logits(tape, bound, x), batch.labels);
        tape.backward(l);
        apply_gradients(tape, bound, params, opt);
        return static_cast<double>(tape.value(l)[0]);
      });
      stats.total += loss;
      stats.benchmark += loss;
      ++stats.steps;
    }
    stats.total /= static_cast<double>(stats.steps);
    stats.benchmark /= static_cast<double>(stats.steps);
    report.epochs.push_back(stats);
  }
  report.train_accuracy = head_accuracy(params, train, original_classes, true);
  if (!heldout.empty()) report.heldout_accuracy = head_accuracy(params, heldout, original_classes, true);
  report.wall_seconds = seconds_since(start);
  if (report.train_accuracy < kDivergenceAccuracy) {
    throw TrainingDivergence("pretrain", "teacher reached only " + std::to_string(100 * report.train_accuracy) +
                                             "% training accuracy; check the configuration");
  }
  return result;
}

TrainResult finetune_sake(std::span<const Sample> source, std::span<const int> source_classes,
                          const ModelParams& teacher, const SimilarityMatrix& similarity, const TrainConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw ContractViolation("finetune: the source split is empty");
  if (teacher.orig_w.empty()) throw ContractViolation("finetune: the teacher has no original head");
  if (similarity.rows() != source_classes.size() || similarity.cols() != teacher.config.num_original) {
    throw ContractViolation("finetune: similarity matrix does not cover C^S x C^O");
  }
  if (!std::equal(similarity.source_classes().begin(), similarity.source_classes().end(), source_classes.begin(),
                  source_classes.end())) {
    throw ContractViolation("finetune: similarity rows are not in source-class order");
  }
  const auto start = std::chrono::steady_clock::now();
  TrainResult result{teacher, {}};
  ModelParams& params = result.params;
  Rng head_rng = Rng::keyed({cfg.seed, 0x62656e6368ULL});
  reset_benchmark_head(params, source_classes.size(), head_rng);
  const ModelConfig mc = params.config;
  const auto labels = head_labels(source, source_classes);
  const bool use_teacher = cfg.loss.lambda_sake > 0.0;

  const std::size_t per_epoch = steps_per_epoch(source.size(), cfg.batch_size);
  auto views = params.views();
  OptimizerState<float> opt = make_optimizer<float>(cfg.adam, cfg.epochs * per_epoch, views);
  Rng rng = Rng::keyed({cfg.seed, 0x66696e65ULL});
  TrainReport& report = result.report;
  report.phase = "finetune";
  report.seed = cfg.seed;
  report.config = to_json(cfg);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(labels, source_classes.size(), rng);
    EpochStats stats{epoch, 0, 0, 0, 0};
    for (std::size_t step = 0; step < per_epoch; ++step) {
      const std::size_t b = step * cfg.batch_size, e = std::min(order.size(), b + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + b, e - b);
      const Batch<float> batch = make_batch(source, labels, rows, mc.input_side, cfg.augment, rng);
      const LossTerms terms = guarded("finetune", epoch, step, [&] {
        Tensor<float> t;
        if (use_teacher) t = teacher_logits(teacher, batch.images);
        Tape<float> tape;
        const BoundParams bound = bind(tape, params, true);
        LossTerms lt = total_loss(tape, mc, bound, batch, use_teacher ? &t : nullptr, &similarity, cfg.loss);
        tape.backward(lt.total);
        apply_gradients(tape, bound, params, opt);
        return lt;
      });
      stats.total += terms.total_value;
      stats.benchmark += terms.benchmark_value;
      stats.sake += terms.sake_value;
      ++stats.steps;
    }
    const double n = static_cast<double>(stats.steps);
    stats.total /= n;
    stats.benchmark /= n;
    stats.sake /= n;
    report.epochs.push_back(stats);
  }
  report.train_accuracy = head_accuracy(params, source, source_classes, false);
  report.wall_seconds = seconds_since(start);
  return result;
}

ProbeResult linear_probe(const ModelParams& params, std::span<const Sample> original,
                         std::span<const int> original_classes, const ProbeConfig& cfg) {
  cfg.validate();
  if (original.empty()) throw ContractViolation("probe: the original split is empty");
  const OriginalSplit split = split_original(original);
  if (split.train.empty() || split.heldout.empty()) {
    throw ContractViolation("probe: need at least five samples per class for a held-out portion");
  }
  const std::size_t side = params.config.input_side, m = params.config.embedding_dim;
  auto features = [&](const std::vector<Sample>& s) {
    const std::vector<Domain> photo(s.size(), Domain::kPhoto);
    return embed_batch(params, stack_images(s, side), photo);
  };
  const Tensor<float> train_x = features(split.train);
  const Tensor<float> eval_x = features(split.heldout);
  const auto train_y = head_labels(split.train, original_classes);
  const auto eval_y = head_labels(split.heldout, original_classes);
  const std::size_t k = original_classes.size();

  Rng rng = Rng::keyed({cfg.seed, 0x70726f6265ULL});
  Tensor<float> w({k, m});
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  for (float& v : w.values()) v = static_cast<float>(rng.normal(0.0, sd));
  Tensor<float> b({k});
  std::vector<ParamView<float>> views{{"probe_w", &w, false}, {"probe_b", &b, true}};
  const std::size_t per_epoch = steps_per_epoch(split.train.size(), cfg.batch_size);
  OptimizerState<float> opt = make_optimizer<float>(cfg.adam, cfg.epochs * per_epoch, views);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = epoch_order(train_y, k, rng);
    for (std::size_t step = 0; step < per_epoch; ++step) {
      const std::size_t s = step * cfg.batch_size, e = std::min(order.size(), s + cfg.batch_size);
      std::vector<float> rows;
      std::vector<std::size_t> y;
      for (std::size_t i = s; i < e; ++i) {
        const auto r = train_x.row(order[i]);
        rows.insert(rows.end(), r.begin(), r.end());
        y.push_back(train_y[order[i]]);
      }
      guarded("probe", epoch, step, [&] {
        Tape<float> tape;
        const Var x = tape.constant(Tensor<float>({e - s, m}, std::move(rows)));
        const Var wv = tape.parameter(w), bv = tape.parameter(b);
        const Var l = ops::cross_entropy(tape, ops::linear(tape, x, wv, bv), y);
        tape.backward(l);
        const std::vector<Tensor<float>> grads{tape.grad(wv), tape.grad(bv)};
        adam_step<float>(views, grads, opt);
        return 0;
      });
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < split.heldout.size(); ++i) {
    const auto x = eval_x.row(i);
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < k; ++c) {
      double v = b[c];
      for (std::size_t j = 0; j < m; ++j) v += static_cast<double>(w.at(c, j)) * x[j];
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    correct += best == eval_y[i];
  }
  return {static_cast<double>(correct) / static_cast<double>(split.heldout.size()), split.train.size(),
          split.heldout.size()};
}

}  // namespace sake
