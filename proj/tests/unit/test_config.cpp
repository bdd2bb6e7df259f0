#include <algorithm>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sake/config.hpp"
#include "sake/errors.hpp"

using namespace sake;
using testing::TempDir;

TEST_CASE("config survives a JSON round trip") {
  RunConfig cfg = default_run_config();
  cfg.seed = 17;
  cfg.train.loss.lambda2 = 0.45;
  cfg.model.channels = {6, 10, 12};
  cfg.eval_ks = {5, 50};
  const nlohmann::json j = cfg.to_json();
  const RunConfig back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.seed == 17);
  CHECK(back.train.loss.lambda2 == 0.45);
  CHECK(back.model.channels == std::vector<std::size_t>{6, 10, 12});

  // Every key the serializer writes is a known key, and vice versa.
  std::vector<std::string> written;
  for (const auto& [k, v] : j.items()) written.push_back(k);
  std::sort(written.begin(), written.end());
  CHECK(written == config_keys());
  const std::vector<std::string> keys = config_keys();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
}

TEST_CASE("partial configs start from the defaults; unknown or mistyped keys are rejected") {
  const RunConfig partial = RunConfig::from_json({{"seed", 3}});
  CHECK(partial.seed == 3);
  CHECK(partial.itq_bits == default_run_config().itq_bits);
  CHECK_THROWS_AS(RunConfig::from_json({{"loss.lambda3", 1.0}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", "three"}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json({{"seed", -3}}), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json(nlohmann::json::array()), ConfigError);
}

TEST_CASE("overrides parse JSON values and fall back to strings") {
  nlohmann::json flat = default_run_config().to_json();
  apply_override(flat, "loss.lambda2=0.7");
  apply_override(flat, "split.target_classes=[3,4]");
  apply_override(flat, "output_dir=runs/a=b");
  apply_override(flat, "loss.teacher_only=true");
  const RunConfig cfg = RunConfig::from_json(flat);
  CHECK(cfg.train.loss.lambda2 == 0.7);
  CHECK(cfg.split.target_classes == std::vector<int>{3, 4});
  CHECK(cfg.output_dir == "runs/a=b");
  CHECK(cfg.train.loss.teacher_only);
  CHECK_THROWS_AS(apply_override(flat, "loss.lambda2"), ConfigError);
  CHECK_THROWS_AS(apply_override(flat, "nope=1"), ConfigError);
}

TEST_CASE("validation separates bad values from split violations") {
  CHECK_NOTHROW(default_run_config().validate());
  auto broken = [](auto edit) {
    RunConfig c = default_run_config();
    edit(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.output_dir.clear(); }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.itq_bits = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.itq_bits = c.model.embedding_dim + 1; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.eval_ks = {}; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.split.target_classes.push_back(3); }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.split.original_photos = 4; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.train.epochs = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.split.target_classes.push_back(13); }).validate(), SplitViolation);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.split.target_classes.push_back(0); }).validate(), SplitViolation);
}

TEST_CASE("config files load and taxonomy paths must come in pairs") {
  const TempDir dir("cfg");
  const auto path = dir.path() / "run.json";
  {
    std::ofstream out(path);
    out << R"({"seed": 9, "itq.bits": 16})";
  }
  const RunConfig cfg = RunConfig::load(path);
  CHECK(cfg.seed == 9);
  CHECK(cfg.itq_bits == 16);
  CHECK_THROWS_AS(RunConfig::load(dir.path() / "missing.json"), ConfigError);

  RunConfig half = default_run_config();
  half.taxonomy_edges = "edges.tsv";
  CHECK_THROWS_AS(load_taxonomy(half), ConfigError);

  // The shipped data files hold the same taxonomy as the built-in one.
  RunConfig files = default_run_config();
  files.taxonomy_edges = SAKE_DATA_DIR "/toy_taxonomy.tsv";
  files.taxonomy_classes = SAKE_DATA_DIR "/toy_classes.tsv";
  const TaxonomyBundle a = load_taxonomy(files), b = load_taxonomy(default_run_config());
  for (int c = 0; c < 40; ++c) CHECK(a.classes.node_name(c) == b.classes.node_name(c));
}
