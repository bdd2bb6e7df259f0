#include "sake/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <type_traits>

#include "sake/errors.hpp"

namespace sake {

namespace {

using json = nlohmann::json;

template <typename T>
T read_value(const json& v, const std::string& key) {
  auto bad = [&](const char* want) {
    return ConfigError("config key '" + key + "' expects " + want + ", got " + v.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw bad("a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw bad("a string");
    return v.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw bad("a number");
    return v.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw bad("an integer");
    if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0) throw bad("a non-negative integer");
    return v.get<T>();
  } else {
    // vector of integers
    using E = typename T::value_type;
    if (!v.is_array()) throw bad("an array");
    T out;
    for (const json& e : v) out.push_back(read_value<E>(e, key));
    return out;
  }
}

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
Field field(std::string key, T RunConfig::*outer) {
  return {key, [outer](const RunConfig& c) { return json(c.*outer); },
          [outer, key](RunConfig& c, const json& v) { c.*outer = read_value<T>(v, key); }};
}

template <typename S, typename T>
Field field(std::string key, S RunConfig::*outer, T S::*inner) {
  return {key, [outer, inner](const RunConfig& c) { return json(c.*outer.*inner); },
          [outer, inner, key](RunConfig& c, const json& v) { c.*outer.*inner = read_value<T>(v, key); }};
}

// Adam settings of one training phase.
template <typename T>
Field adam_field(const std::string& phase, const std::string& name, TrainConfig RunConfig::*outer,
                 T AdamConfig::*inner) {
  const std::string key = phase + "." + name;
  return {key, [outer, inner](const RunConfig& c) { return json((c.*outer).adam.*inner); },
          [outer, inner, key](RunConfig& c, const json& v) { (c.*outer).adam.*inner = read_value<T>(v, key); }};
}

void add_phase(std::vector<Field>& f, const std::string& phase, TrainConfig RunConfig::*outer) {
  f.push_back(field(phase + ".epochs", outer, &TrainConfig::epochs));
  f.push_back(field(phase + ".batch_size", outer, &TrainConfig::batch_size));
  f.push_back(adam_field(phase, "beta1", outer, &AdamConfig::beta1));
  f.push_back(adam_field(phase, "beta2", outer, &AdamConfig::beta2));
  f.push_back(adam_field(phase, "epsilon", outer, &AdamConfig::epsilon));
  f.push_back(adam_field(phase, "weight_decay", outer, &AdamConfig::weight_decay));
  f.push_back(adam_field(phase, "decay_biases", outer, &AdamConfig::decay_biases));
  f.push_back(adam_field(phase, "lr_initial", outer, &AdamConfig::lr_initial));
  f.push_back(adam_field(phase, "lr_final", outer, &AdamConfig::lr_final));
}

// Loss and augmentation live once in the flat config and are shared; the
// pretraining phase ignores the loss weights.
template <typename T>
Field loss_member(const std::string& key, T LossConfig::*inner) {
  return {key, [inner](const RunConfig& c) { return json(c.train.loss.*inner); },
          [inner, key](RunConfig& c, const json& v) { c.train.loss.*inner = read_value<T>(v, key); }};
}

template <typename T>
Field augment_member(const std::string& key, T AugmentConfig::*inner) {
  return {key, [inner](const RunConfig& c) { return json(c.train.augment.*inner); },
          [inner, key](RunConfig& c, const json& v) {
            c.train.augment.*inner = read_value<T>(v, key);
            c.pretrain.augment.*inner = c.train.augment.*inner;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(field("seed", &RunConfig::seed));
    f.push_back(field("output_dir", &RunConfig::output_dir));
    f.push_back(field("taxonomy.edges", &RunConfig::taxonomy_edges));
    f.push_back(field("taxonomy.classes", &RunConfig::taxonomy_classes));

    f.push_back(field("split.original_classes", &RunConfig::split, &SplitSpec::original_classes));
    f.push_back(field("split.source_classes", &RunConfig::split, &SplitSpec::source_classes));
    f.push_back(field("split.target_classes", &RunConfig::split, &SplitSpec::target_classes));
    f.push_back(field("split.original_photos", &RunConfig::split, &SplitSpec::original_photos));
    f.push_back(field("split.source_photos", &RunConfig::split, &SplitSpec::source_photos));
    f.push_back(field("split.source_sketches", &RunConfig::split, &SplitSpec::source_sketches));
    f.push_back(field("split.gallery_photos", &RunConfig::split, &SplitSpec::gallery_photos));
    f.push_back(field("split.query_sketches", &RunConfig::split, &SplitSpec::query_sketches));
    f.push_back(field("split.side", &RunConfig::split, &SplitSpec::side));

    f.push_back(field("model.channels", &RunConfig::model, &ModelConfig::channels));
    f.push_back(field("model.reduction", &RunConfig::model, &ModelConfig::reduction));
    f.push_back(field("model.embedding_dim", &RunConfig::model, &ModelConfig::embedding_dim));
    f.push_back(field("model.domain_code_width", &RunConfig::model, &ModelConfig::domain_code_width));

    add_phase(f, "pretrain", &RunConfig::pretrain);
    add_phase(f, "train", &RunConfig::train);

    f.push_back(loss_member("loss.lambda_sake", &LossConfig::lambda_sake));
    f.push_back(loss_member("loss.lambda1", &LossConfig::lambda1));
    f.push_back(loss_member("loss.lambda2", &LossConfig::lambda2));
    f.push_back(loss_member("loss.apply_sake_to_sketches", &LossConfig::apply_sake_to_sketches));
    f.push_back(loss_member("loss.teacher_only", &LossConfig::teacher_only));

    f.push_back(augment_member("augment.max_shift", &AugmentConfig::max_shift));
    f.push_back(augment_member("augment.flip_probability", &AugmentConfig::flip_probability));
    f.push_back(augment_member("augment.noise_sigma", &AugmentConfig::noise_sigma));

    f.push_back(field("probe.epochs", &RunConfig::probe, &ProbeConfig::epochs));
    f.push_back(field("probe.batch_size", &RunConfig::probe, &ProbeConfig::batch_size));
    f.push_back({"probe.lr_initial", [](const RunConfig& c) { return json(c.probe.adam.lr_initial); },
                 [](RunConfig& c, const json& v) { c.probe.adam.lr_initial = read_value<double>(v, "probe.lr_initial"); }});
    f.push_back({"probe.lr_final", [](const RunConfig& c) { return json(c.probe.adam.lr_final); },
                 [](RunConfig& c, const json& v) { c.probe.adam.lr_final = read_value<double>(v, "probe.lr_final"); }});

    f.push_back(field("itq.bits", &RunConfig::itq_bits));
    f.push_back(field("itq.iterations", &RunConfig::itq_iterations));
    f.push_back(field("eval.ks", &RunConfig::eval_ks));
    return f;
  }();
  return all;
}

template <typename F>
void rethrow_as_config(const char* what, F&& fn) {
  try {
    fn();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  // Three shape families (ellipse, ring, star) each contribute original and
  // target classes; the source classes come from the other families.
  c.split.original_classes = {0, 1, 2, 5, 6, 7, 10, 11, 12, 15, 16, 20, 21, 25, 26, 27, 30, 31, 35, 36};
  c.split.source_classes = {13, 14, 17, 18, 22, 23, 32, 33, 37, 38};
  c.split.target_classes = {3, 4, 8, 9, 28, 29};
  return c;
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  rethrow_as_config("model", [&] { resolved_model().validate(); });
  rethrow_as_config("pretrain", [&] { pretrain.validate(); });
  rethrow_as_config("train", [&] { train.validate(); });
  rethrow_as_config("probe", [&] { probe.validate(); });
  if (split.original_classes.empty() || split.source_classes.empty() || split.target_classes.empty()) {
    throw ConfigError("split: original, source and target class lists must be non-empty");
  }
  for (const auto* list : {&split.original_classes, &split.source_classes, &split.target_classes}) {
    std::set<int> seen;
    for (int c : *list) {
      if (!seen.insert(c).second) throw ConfigError("split: class " + std::to_string(c) + " listed twice");
    }
  }
  if (split.original_photos < 5) throw ConfigError("split.original_photos must be at least 5 (probe hold-out)");
  if (split.source_photos + split.source_sketches == 0) throw ConfigError("split: source split would be empty");
  if (split.gallery_photos == 0 || split.query_sketches == 0) {
    throw ConfigError("split: every target class needs gallery photos and query sketches");
  }
  if (itq_bits == 0) throw ConfigError("itq.bits must be positive");
  if (itq_bits > model.embedding_dim) throw ConfigError("itq.bits cannot exceed model.embedding_dim");
  if (itq_iterations == 0) throw ConfigError("itq.iterations must be positive");
  if (eval_ks.empty()) throw ConfigError("eval.ks must list at least one K");
  for (std::size_t k : eval_ks) {
    if (k == 0) throw ConfigError("eval.ks entries must be positive");
  }
  split.validate();
}

nlohmann::json RunConfig::to_json() const {
  json j = json::object();
  for (const Field& f : fields()) j[f.key] = f.get(*this);
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object with dotted keys");
  RunConfig c = default_run_config();
  const auto& all = fields();
  for (const auto& [key, value] : flat.items()) {
    auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return f.key == key; });
    if (it == all.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(c, value);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

SplitSpec RunConfig::resolved_split() const {
  SplitSpec s = split;
  s.seed = seed;
  return s;
}

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.input_side = split.side;
  return m;
}

TrainConfig RunConfig::resolved_pretrain() const {
  TrainConfig t = pretrain;
  t.seed = seed;
  return t;
}

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

ProbeConfig RunConfig::resolved_probe() const {
  ProbeConfig p = probe;
  p.seed = seed;
  return p;
}

void apply_override(nlohmann::json& flat, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  const auto keys = config_keys();
  if (!std::binary_search(keys.begin(), keys.end(), key)) throw ConfigError("unknown config key '" + key + "'");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  flat[key] = value;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

TaxonomyBundle load_taxonomy(const RunConfig& cfg) {
  if (cfg.taxonomy_edges.empty() != cfg.taxonomy_classes.empty()) {
    throw ConfigError("taxonomy.edges and taxonomy.classes must be given together");
  }
  if (cfg.taxonomy_edges.empty()) {
    Taxonomy tax = Taxonomy::parse(builtin_taxonomy_edges());
    ClassMap classes = ClassMap::parse(builtin_class_map(), tax);
    return {std::move(tax), std::move(classes)};
  }
  Taxonomy tax = Taxonomy::load(cfg.taxonomy_edges);
  ClassMap classes = ClassMap::load(cfg.taxonomy_classes, tax);
  return {std::move(tax), std::move(classes)};
}

std::string tool_version() { return SAKE_VERSION; }

}  // namespace sake
