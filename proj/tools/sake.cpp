// sake: command-line driver for the sketch retrieval lab.
//
// Every command resolves a RunConfig (defaults < --config file < --set < flags),
// validates it, and embeds it together with the tool version in its JSON output.
// Exit codes: 0 success, 2 usage/config/split/zero-shot errors, 3 numeric failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "sake/config.hpp"
#include "sake/errors.hpp"
#include "sake/hashing.hpp"
#include "sake/pipeline.hpp"
#include "sake/retrieval.hpp"
#include "sake/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sake;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config with flat dotted keys")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "Override a config key, KEY=VALUE (repeatable)");
  cmd->add_option("--seed", c.seed, "Run seed");
}

// Flag values that win over the file and --set.
using Overrides = std::vector<std::pair<std::string, json>>;

RunConfig resolve(const Common& c, const Overrides& flags = {}) {
  json flat = default_run_config().to_json();
  if (!c.config_path.empty()) {
    const json file = RunConfig::load(c.config_path).to_json();
    flat = file;
  }
  for (const auto& s : c.sets) apply_override(flat, s);
  if (c.seed) flat["seed"] = *c.seed;
  for (const auto& [k, v] : flags) flat[k] = v;
  RunConfig cfg = RunConfig::from_json(flat);
  cfg.validate();
  return cfg;
}

json envelope(const RunConfig& cfg, const std::string& command) {
  return {{"tool", "sake"}, {"tool_version", tool_version()}, {"command", command}, {"config", cfg.to_json()}};
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw ConfigError("failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

fs::path text_sibling(const fs::path& json_path) {
  fs::path p = json_path;
  return p.replace_extension(".txt");
}

// Loads the dataset and makes its split agree with the config, so a dataset
// generated for other classes cannot slip into evaluation.
Dataset load_data(const RunConfig& cfg, const std::string& dir) {
  Dataset data = read_dataset(dir);
  data.spec.target_classes = cfg.split.target_classes;
  return data;
}

json probe_json(const ProbeResult& r) {
  return {{"accuracy", r.accuracy}, {"train_count", r.train_count}, {"eval_count", r.eval_count}};
}

void log(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- commands ---------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
  const TaxonomyBundle tb = load_taxonomy(cfg);
  const Dataset data = generate_dataset(cfg.resolved_split(), tb.taxonomy, tb.classes);
  write_dataset(data, tb.classes, out_dir);
  json manifest = make_manifest(data, tb.classes);
  manifest["tool_version"] = tool_version();
  manifest["config"] = cfg.to_json();
  write_json(fs::path(out_dir) / "manifest.json", manifest);
  std::printf("wrote %s: %zu original, %zu source, %zu query, %zu gallery samples\n", out_dir.c_str(),
              data.original.size(), data.source.size(), data.target_query.size(), data.target_gallery.size());
  std::printf("classes: %zu original, %zu source, %zu target\n", data.spec.original_classes.size(),
              data.spec.source_classes.size(), data.spec.target_classes.size());
}

void cmd_pretrain(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
  const Dataset data = load_data(cfg, data_dir);
  const OriginalSplit split = split_original(data.original);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = pretrain_teacher(split.train, data.spec.original_classes, cfg.resolved_model(),
                                         cfg.resolved_pretrain(), split.heldout);
  fs::create_directories(out_dir);
  save_checkpoint(r.params, fs::path(out_dir) / "teacher.ckpt");
  json j = envelope(cfg, "pretrain");
  j["report"] = r.report.to_json();
  write_json(fs::path(out_dir) / "pretrain_report.json", j);
  std::printf("teacher: train accuracy %.4f, held-out accuracy %.4f\n", r.report.train_accuracy,
              r.report.heldout_accuracy);
  log("pretrain took " + std::to_string(elapsed(start)) + " s");
}

void cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& teacher_path,
               const std::string& out_dir, const std::string& name) {
  if (!fs::exists(teacher_path)) throw ConfigError("teacher checkpoint " + teacher_path + " does not exist");
  const ModelParams teacher = load_checkpoint(teacher_path);
  const Dataset data = load_data(cfg, data_dir);
  const TaxonomyBundle tb = load_taxonomy(cfg);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = train_student(cfg, data, teacher, tb);
  fs::create_directories(out_dir);
  save_checkpoint(r.params, fs::path(out_dir) / (name + ".ckpt"));
  json j = envelope(cfg, "train");
  j["report"] = r.report.to_json();
  write_json(fs::path(out_dir) / (name + "_report.json"), j);
  std::printf("%-6s %12s %12s %12s\n", "epoch", "total", "benchmark", "sake");
  for (const EpochStats& e : r.report.epochs) {
    std::printf("%-6zu %12.5f %12.5f %12.5f\n", e.epoch, e.total, e.benchmark, e.sake);
  }
  std::printf("source train accuracy %.4f\n", r.report.train_accuracy);
  log("train took " + std::to_string(elapsed(start)) + " s");
}

void cmd_probe(const RunConfig& cfg, const std::string& data_dir, const std::string& model_path,
               const std::string& out) {
  const ModelParams params = load_checkpoint(model_path);
  const Dataset data = load_data(cfg, data_dir);
  const ProbeResult r = linear_probe(params, data.original, data.spec.original_classes, cfg.resolved_probe());
  json j = envelope(cfg, "probe");
  j["model"] = fs::path(model_path).filename().string();
  j["probe"] = probe_json(r);
  write_json(out, j);
  char line[160];
  std::snprintf(line, sizeof line, "probe accuracy %.4f (%zu train, %zu held out)\n", r.accuracy, r.train_count,
                r.eval_count);
  write_text(text_sibling(out), line);
  std::fputs(line, stdout);
}

void cmd_hash(const RunConfig& cfg, const std::string& data_dir, const std::string& model_path,
              const std::string& out_dir) {
  const ModelParams params = load_checkpoint(model_path);
  const Dataset data = load_data(cfg, data_dir);
  const ItqCodec codec = fit_codec(params, data, cfg.itq_bits, cfg.itq_iterations, cfg.seed);
  fs::create_directories(out_dir);
  const fs::path codec_path = fs::path(out_dir) / ("codec_" + std::to_string(codec.bits) + ".itq");
  save_codec(codec, codec_path);
  // Encode with the codec exactly as stored (f32), matching what eval --codec sees.
  const ItqCodec stored = load_codec(codec_path);
  auto codes_of = [&](const std::vector<Sample>& s) {
    std::vector<BinaryCode> codes;
    const Tensor<float> e = embed_samples(params, s);
    for (std::size_t i = 0; i < s.size(); ++i) codes.push_back(encode(stored, e.row(i)));
    return codes;
  };
  save_codes(codes_of(data.target_gallery), fs::path(out_dir) / ("gallery_" + std::to_string(codec.bits) + ".codes"));
  save_codes(codes_of(data.target_query), fs::path(out_dir) / ("query_" + std::to_string(codec.bits) + ".codes"));
  json j = envelope(cfg, "hash");
  j["codec"] = codec_path.filename().string();
  j["bits"] = codec.bits;
  j["iterations"] = codec.iterations;
  j["quantization_loss"] = codec.quantization_loss;
  if (!codec.warning.empty()) j["warning"] = codec.warning;
  write_json(fs::path(out_dir) / ("hash_" + std::to_string(codec.bits) + ".json"), j);
  if (!codec.warning.empty()) log("warning: " + codec.warning);
  std::printf("codec %s: %zu bits, quantization loss %.4f -> %.4f\n", codec_path.string().c_str(), codec.bits,
              codec.quantization_loss.front(), codec.quantization_loss.back());
}

struct EvalArgs {
  std::string data, model, metric = "cosine", codec, queries = "sketch", out, csv;
  std::optional<std::size_t> bits;
  std::vector<std::size_t> ks;
};

void cmd_eval(const RunConfig& cfg, const EvalArgs& a) {
  const Metric metric = parse_metric(a.metric);
  if (a.queries != "sketch" && a.queries != "photo") throw ConfigError("--queries must be sketch or photo");
  const QueryKind kind = a.queries == "photo" ? QueryKind::kPhoto : QueryKind::kSketch;
  std::optional<ItqCodec> codec;
  if (metric == Metric::kHamming) {
    if (a.codec.empty()) throw ConfigError("--metric hamming needs --codec (run the hash command first)");
    codec = load_codec(a.codec);
    if (a.bits && *a.bits != codec->bits) {
      throw ConfigError("--bits " + std::to_string(*a.bits) + " does not match the codec's " +
                        std::to_string(codec->bits) + " bits");
    }
  } else if (!a.codec.empty() || a.bits) {
    throw ConfigError("--codec and --bits only apply to --metric hamming");
  }
  const ModelParams params = load_checkpoint(a.model);
  const Dataset data = load_data(cfg, a.data);
  const std::vector<std::size_t> ks = a.ks.empty() ? cfg.eval_ks : a.ks;
  const MetricReport r = evaluate_model(params, data, kind, metric, ks, codec ? &*codec : nullptr);
  if (!a.csv.empty()) {
    std::vector<Sample> all = data.target_query;
    all.insert(all.end(), data.target_gallery.begin(), data.target_gallery.end());
    write_embeddings_csv(a.csv, all, embed_samples(params, all));
  }
  json j = envelope(cfg, "eval");
  j["model"] = fs::path(a.model).filename().string();
  j["queries"] = a.queries;
  if (codec) j["bits"] = codec->bits;
  j["report"] = r.to_json();
  write_json(a.out, j);
  write_text(text_sibling(a.out), r.to_table());
  std::fputs(r.to_table().c_str(), stdout);
}

std::map<int, double> per_class_from_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open report " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("report") || !j["report"].contains("per_class_ap")) {
    throw ConfigError(path + " is not an eval report");
  }
  std::map<int, double> out;
  for (const json& row : j["report"]["per_class_ap"]) out[row.at("class_id").get<int>()] = row.at("ap").get<double>();
  return out;
}

void cmd_analyze(const RunConfig& cfg, const std::string& data_dir, const std::string& teacher_path,
                 const std::string& baseline_report, const std::string& report, const std::string& out) {
  const ModelParams teacher = load_checkpoint(teacher_path);
  const Dataset data = load_data(cfg, data_dir);
  const TaxonomyBundle tb = load_taxonomy(cfg);
  const auto before = per_class_from_report(baseline_report);
  const auto after = per_class_from_report(report);
  const auto deltas = per_class_delta(before, after);
  const auto conf = teacher_confidence(teacher, data.target_gallery);
  const auto lch = nearest_original_lch(tb.taxonomy, tb.classes, data.spec.target_classes,
                                        data.spec.original_classes);
  const TercileSummary s = analyze_improvement_groups(deltas, conf, lch);
  json j = envelope(cfg, "analyze");
  j["baseline_report"] = fs::path(baseline_report).filename().string();
  j["report"] = fs::path(report).filename().string();
  j["summary"] = s.to_json();
  write_json(out, j);
  write_text(text_sibling(out), s.to_table());
  std::fputs(s.to_table().c_str(), stdout);
}

void cmd_sweep(const RunConfig& base, const Common& common, const std::string& data_dir,
               const std::string& teacher_path, const std::string& key, const std::vector<std::string>& values,
               const std::string& out_dir) {
  if (!fs::exists(teacher_path)) throw ConfigError("teacher checkpoint " + teacher_path + " does not exist");
  if (key.rfind("train.", 0) != 0 && key.rfind("loss.", 0) != 0 && key.rfind("augment.", 0) != 0) {
    throw ConfigError("sweep key must be a train.*, loss.* or augment.* setting");
  }
  const ModelParams teacher = load_checkpoint(teacher_path);
  const TaxonomyBundle tb = load_taxonomy(base);
  const Dataset data = load_data(base, data_dir);
  json rows = json::array();
  std::string table;
  char line[200];
  std::snprintf(line, sizeof line, "%-24s %12s %12s %12s\n", key.c_str(), "sbir_map", "pbir_map", "probe");
  table += line;
  for (const std::string& v : values) {
    Common c = common;
    c.sets.push_back(key + "=" + v);
    const RunConfig cfg = resolve(c);
    const TrainResult r = train_student(cfg, data, teacher, tb);
    const MetricReport sbir = evaluate_model(r.params, data, QueryKind::kSketch, Metric::kCosine, cfg.eval_ks);
    const MetricReport pbir = evaluate_model(r.params, data, QueryKind::kPhoto, Metric::kCosine, cfg.eval_ks);
    const ProbeResult p = linear_probe(r.params, data.original, data.spec.original_classes, cfg.resolved_probe());
    const json value = cfg.to_json()[key];
    rows.push_back({{"value", value},
                    {"sbir", sbir.to_json()},
                    {"pbir", pbir.to_json()},
                    {"probe", probe_json(p)},
                    {"train", r.report.to_json()}});
    std::snprintf(line, sizeof line, "%-24s %12.4f %12.4f %12.4f\n", value.dump().c_str(), sbir.map_all,
                  pbir.map_all, p.accuracy);
    table += line;
    std::fputs(line, stdout);
    std::fflush(stdout);
  }
  fs::create_directories(out_dir);
  json j = envelope(base, "sweep");
  j["key"] = key;
  j["rows"] = rows;
  write_json(fs::path(out_dir) / "sweep.json", j);
  write_text(fs::path(out_dir) / "sweep.txt", table);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot sketch-based retrieval lab with semantic-aware knowledge preservation"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  Common common;
  std::string out, data_dir, teacher, model, name = "student", baseline_report, report, sweep_key;
  std::vector<std::string> sweep_values;
  std::optional<double> lambda_sake, lambda1, lambda2;
  std::optional<std::size_t> hash_bits;
  EvalArgs eval;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic dataset and its manifest");
  add_common(gen, common);
  gen->add_option("--out", out, "Output directory (default: <output_dir>/data)");

  auto* pre = app.add_subcommand("pretrain", "Train the teacher on the original classes");
  add_common(pre, common);
  pre->add_option("--data", data_dir, "Dataset directory")->required();
  pre->add_option("--out", out, "Output directory (default: <output_dir>)");

  auto* train = app.add_subcommand("train", "Fine-tune a student from the teacher");
  add_common(train, common);
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  train->add_option("--out", out, "Output directory (default: <output_dir>)");
  train->add_option("--name", name, "Checkpoint/report base name");
  train->add_option("--lambda-sake", lambda_sake, "Weight of the knowledge-preservation loss");
  train->add_option("--lambda1", lambda1, "Weight of the teacher logits in the soft target");
  train->add_option("--lambda2", lambda2, "Weight of the class-similarity row in the soft target");

  auto* probe = app.add_subcommand("probe", "Linear-probe accuracy on held-out original photos");
  add_common(probe, common);
  probe->add_option("--data", data_dir, "Dataset directory")->required();
  probe->add_option("--model", model, "Checkpoint to probe")->required();
  probe->add_option("--out", out, "Report path (.json; a .txt table is written next to it)")->required();

  auto* hash = app.add_subcommand("hash", "Fit an ITQ codec on source embeddings and encode the target split");
  add_common(hash, common);
  hash->add_option("--data", data_dir, "Dataset directory")->required();
  hash->add_option("--model", model, "Checkpoint")->required();
  hash->add_option("--bits", hash_bits, "Code length (default: itq.bits)");
  hash->add_option("--out", out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Zero-shot retrieval metrics on the target split");
  add_common(ev, common);
  ev->add_option("--data", eval.data, "Dataset directory")->required();
  ev->add_option("--model", eval.model, "Checkpoint")->required();
  ev->add_option("--metric", eval.metric, "cosine or hamming");
  ev->add_option("--codec", eval.codec, "ITQ codec (hamming only)");
  ev->add_option("--bits", eval.bits, "Expected code length of the codec");
  ev->add_option("--k", eval.ks, "Cutoffs for mAP@K and Prec@K (default: eval.ks)")->delimiter(',');
  ev->add_option("--queries", eval.queries, "sketch (sketch-to-photo) or photo (photo-to-photo)");
  ev->add_option("--embeddings-csv", eval.csv, "Also export query and gallery embeddings");
  ev->add_option("--out", eval.out, "Report path (.json; a .txt table is written next to it)")->required();

  auto* an = app.add_subcommand("analyze", "Group target classes by improvement over a baseline");
  add_common(an, common);
  an->add_option("--data", data_dir, "Dataset directory")->required();
  an->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  an->add_option("--baseline-report", baseline_report, "eval report of the baseline student")->required();
  an->add_option("--report", report, "eval report of the student under study")->required();
  an->add_option("--out", out, "Report path (.json; a .txt table is written next to it)")->required();

  auto* sw = app.add_subcommand("sweep", "Train and evaluate one student per value of a config key");
  add_common(sw, common);
  sw->add_option("--data", data_dir, "Dataset directory")->required();
  sw->add_option("--teacher", teacher, "Teacher checkpoint")->required();
  sw->add_option("--key", sweep_key, "Config key to vary, e.g. loss.lambda2")->required();
  sw->add_option("--values", sweep_values, "Comma-separated values")->required()->delimiter(',');
  sw->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve(common);
      cmd_gen_data(cfg, out.empty() ? (fs::path(cfg.output_dir) / "data").string() : out);
    } else if (pre->parsed()) {
      const RunConfig cfg = resolve(common);
      cmd_pretrain(cfg, data_dir, out.empty() ? cfg.output_dir : out);
    } else if (train->parsed()) {
      Overrides flags;
      if (lambda_sake) flags.push_back({"loss.lambda_sake", *lambda_sake});
      if (lambda1) flags.push_back({"loss.lambda1", *lambda1});
      if (lambda2) flags.push_back({"loss.lambda2", *lambda2});
      const RunConfig cfg = resolve(common, flags);
      cmd_train(cfg, data_dir, teacher, out.empty() ? cfg.output_dir : out, name);
    } else if (probe->parsed()) {
      cmd_probe(resolve(common), data_dir, model, out);
    } else if (hash->parsed()) {
      Overrides flags;
      if (hash_bits) flags.push_back({"itq.bits", *hash_bits});
      cmd_hash(resolve(common, flags), data_dir, model, out);
    } else if (ev->parsed()) {
      cmd_eval(resolve(common), eval);
    } else if (an->parsed()) {
      cmd_analyze(resolve(common), data_dir, teacher, baseline_report, report, out);
    } else if (sw->parsed()) {
      cmd_sweep(resolve(common), common, data_dir, teacher, sweep_key, sweep_values, out);
    }
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure in %s: %s\n", e.op().c_str(), e.what());
    return 3;
  } catch (const SplitViolation& e) {
    std::fprintf(stderr, "split violation (class %d): %s\n", e.class_id(), e.what());
    return 2;
  } catch (const ZeroShotViolation& e) {
    std::fprintf(stderr, "zero-shot violation: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {  // ConfigError, ContractViolation
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::out_of_range& e) {  // LookupError
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 0;
}
