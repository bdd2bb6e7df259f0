#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "retrieval_oracle.hpp"
#include "sake/errors.hpp"
#include "sake/retrieval.hpp"

using namespace sake;
using testing::oracle_query;
using testing::oracle_distance;
using testing::OracleQuery;

namespace {

using Bits = std::vector<std::uint8_t>;

Item feature_item(std::uint32_t id, int cls, std::vector<float> v) { return {id, cls, std::move(v)}; }

std::vector<float> random_vec(std::size_t m, Rng& rng) {
  std::vector<float> v(m);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

}  // namespace

TEST_CASE("cosine distance examples") {
  const std::vector<float> a{1, 0}, b{0, 1}, c{1, 1}, z{0, 0};
  CHECK(cosine_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cosine_distance(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_distance(a, c) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(cosine_distance(a, c) == doctest::Approx(0.2929).epsilon(1e-4));
  CHECK(cosine_distance(a, std::vector<float>{-1, 0}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_distance(a, z), ContractViolation);
  CHECK_THROWS_AS(cosine_distance(a, std::vector<float>{1, 0, 0}), ContractViolation);
}

TEST_CASE("average precision and precision at K fixtures") {
  CHECK(average_precision(Bits{1, 1, 0}, 2) == 1.0);
  CHECK(average_precision(Bits{1, 0, 1}, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(average_precision(Bits{0, 1, 0, 1}, 2) == 0.5);
  CHECK_THROWS_AS(average_precision(Bits{0, 0}, 0), ContractViolation);
  CHECK(precision_at_k(Bits{1, 1, 1, 0}, 3) == 1.0);
  CHECK(precision_at_k(Bits{1, 0, 1, 0}, 2) == 0.5);
  CHECK(precision_at_k(Bits{1, 0, 1}, 10) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // mAP@K: truncated list, R capped at K.
  CHECK(average_precision_at(Bits{1, 0, 1, 1}, 3, 2) == 0.5);
  CHECK(average_precision_at(Bits{1, 1, 0, 1}, 3, 2) == 1.0);
  CHECK(average_precision_at(Bits{1, 0, 1}, 2, 10) == average_precision(Bits{1, 0, 1}, 2));
}

TEST_CASE("ranking: single item, tie rule, kind checks") {
  Rng rng(1);
  const Item q = feature_item(99, 0, random_vec(4, rng));
  const std::vector<Item> one{feature_item(5, 0, random_vec(4, rng))};
  const RankedList single = rank(q, one, Metric::kCosine);
  REQUIRE(single.entries.size() == 1);
  CHECK(single.entries[0].id == 5);

  const auto dup = random_vec(4, rng);
  const std::vector<Item> tied{feature_item(8, 1, dup), feature_item(3, 0, dup), feature_item(6, 0, dup)};
  const RankedList t = rank(q, tied, Metric::kCosine);
  CHECK(t.entries[0].id == 3);
  CHECK(t.entries[1].id == 6);
  CHECK(t.entries[2].id == 8);
  CHECK(t.total_relevant == 2);
  CHECK(t.relevance() == Bits{1, 1, 0});

  const std::vector<Item> coded{{1, 0, BinaryCode::from_bits(Bits{1, 0})}};
  CHECK_THROWS_AS(rank(q, coded, Metric::kCosine), ContractViolation);
  CHECK_THROWS_AS(rank(q, one, Metric::kHamming), ContractViolation);
  CHECK_THROWS_AS(parse_metric("euclid"), ContractViolation);
  CHECK(parse_metric("hamming") == Metric::kHamming);
}

TEST_CASE("ranking matches a naive sort and ignores positive rescaling") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Item> gallery, scaled;
    for (std::uint32_t i = 0; i < 20; ++i) {
      auto v = random_vec(6, rng);
      gallery.push_back(feature_item(100 - i, static_cast<int>(rng.below(3)), v));
      const float s = static_cast<float>(rng.uniform(0.1, 10.0));
      for (float& x : v) x *= s;
      scaled.push_back(feature_item(100 - i, gallery.back().class_id, v));
    }
    const Item q = feature_item(0, 1, random_vec(6, rng));
    const RankedList a = rank(q, gallery, Metric::kCosine), b = rank(q, scaled, Metric::kCosine);
    std::vector<std::pair<double, std::uint32_t>> naive;
    for (const Item& g : gallery) naive.push_back({oracle_distance(q, g), g.id});
    std::sort(naive.begin(), naive.end());
    for (std::size_t k = 0; k < 20; ++k) {
      CHECK(a.entries[k].id == naive[k].second);
      CHECK(b.entries[k].id == a.entries[k].id);
      if (k > 0) CHECK(a.entries[k - 1].distance <= a.entries[k].distance);
    }
  }
}

TEST_CASE("evaluate equals the brute-force oracle exactly on 100 random instances") {
  Rng rng(3);
  const std::vector<std::size_t> ks{1, 5, 100};
  for (int inst = 0; inst < 100; ++inst) {
    const bool coded = inst % 2 == 1;
    const std::size_t n_gallery = 1 + rng.below(50), n_query = 1 + rng.below(12);
    const std::size_t m = 2 + rng.below(6);
    const int classes = 1 + static_cast<int>(rng.below(4));
    auto make = [&](std::uint32_t id) {
      const int cls = 10 + static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
      if (coded) {
        Bits bits(m);
        for (auto& b : bits) b = rng.bernoulli(0.5);
        return Item{id, cls, BinaryCode::from_bits(bits)};
      }
      // Coarse values so exact distance ties occur.
      std::vector<float> v(m);
      for (float& x : v) x = static_cast<float>(static_cast<int>(rng.below(5)) - 2);
      if (std::all_of(v.begin(), v.end(), [](float x) { return x == 0; })) v[0] = 1;
      return Item{id, cls, v};
    };
    std::vector<Item> gallery, queries;
    for (std::uint32_t i = 0; i < n_gallery; ++i) gallery.push_back(make(i));
    const bool photo_mode = inst % 5 == 0;
    if (photo_mode) {
      queries.assign(gallery.begin(), gallery.begin() + static_cast<std::ptrdiff_t>(std::min(n_query, n_gallery)));
    } else {
      for (std::uint32_t i = 0; i < n_query; ++i) queries.push_back(make(1000 + i));
    }
    const std::set<int> targets{10, 11, 12, 13};
    const Metric metric = coded ? Metric::kHamming : Metric::kCosine;
    const MetricReport rep = evaluate(queries, gallery, metric, ks, targets, photo_mode);

    double map = 0;
    std::vector<double> mk(ks.size(), 0.0), pk(ks.size(), 0.0);
    std::size_t counted = 0, excluded = 0;
    for (const Item& q : queries) {
      const OracleQuery o = oracle_query(q, gallery, ks, photo_mode);
      if (o.excluded) {
        ++excluded;
        continue;
      }
      ++counted;
      map += o.ap;
      for (std::size_t i = 0; i < ks.size(); ++i) {
        mk[i] += o.ap_k[i];
        pk[i] += o.prec_k[i];
      }
    }
    INFO("instance " << inst);
    CHECK(rep.query_count == counted);
    CHECK(rep.excluded_queries == excluded);
    if (counted == 0) continue;
    CHECK(rep.map_all == map / static_cast<double>(counted));
    for (std::size_t i = 0; i < ks.size(); ++i) {
      CHECK(rep.map_at.at(ks[i]) == mk[i] / static_cast<double>(counted));
      CHECK(rep.precision_at.at(ks[i]) == pk[i] / static_cast<double>(counted));
    }
    CHECK(rep.map_all >= 0.0);
    CHECK(rep.map_all <= 1.0);
  }
}

TEST_CASE("one-class gallery gives mAP 1 and random features give the class prior") {
  Rng rng(4);
  std::vector<Item> same;
  for (std::uint32_t i = 0; i < 10; ++i) same.push_back(feature_item(i, 3, random_vec(5, rng)));
  const std::vector<Item> q1{feature_item(100, 3, random_vec(5, rng))};
  const std::vector<std::size_t> ks{5};
  CHECK(evaluate(q1, same, Metric::kCosine, ks, {3}, false).map_all == 1.0);

  // Balanced two-class gallery, relevance independent of rank.
  const std::size_t n = 200;
  std::vector<Item> gallery, queries;
  for (std::uint32_t i = 0; i < n; ++i) gallery.push_back(feature_item(i, static_cast<int>(i % 2), random_vec(8, rng)));
  for (std::uint32_t i = 0; i < 500; ++i) queries.push_back(feature_item(1000 + i, static_cast<int>(i % 2), random_vec(8, rng)));
  const MetricReport rep = evaluate(queries, gallery, Metric::kCosine, ks, {0, 1}, false);
  CHECK(std::abs(rep.map_all - 0.5) < 0.05);
  // Exact expectation of AP under a uniformly random ranking with R = n / 2.
  double harmonic = 0;
  for (std::size_t k = 1; k <= n; ++k) harmonic += 1.0 / static_cast<double>(k);
  const double r = n / 2.0;
  const double expected = (harmonic + (r - 1) / (n - 1.0) * (static_cast<double>(n) - harmonic)) / static_cast<double>(n);
  CHECK(std::abs(rep.map_all - expected) < 0.01);
  CHECK(rep.per_class_ap.size() == 2);
}

TEST_CASE("evaluate enforces the zero-shot class set") {
  Rng rng(5);
  const std::vector<Item> gallery{feature_item(1, 3, random_vec(4, rng)), feature_item(2, 7, random_vec(4, rng))};
  const std::vector<Item> queries{feature_item(9, 3, random_vec(4, rng))};
  const std::vector<std::size_t> ks{1};
  CHECK_THROWS_AS(evaluate(queries, gallery, Metric::kCosine, ks, {3}, false), ZeroShotViolation);
  CHECK_NOTHROW(evaluate(queries, gallery, Metric::kCosine, ks, {3, 7}, false));
  const std::vector<Item> seen_query{feature_item(9, 1, random_vec(4, rng))};
  CHECK_THROWS_AS(evaluate(seen_query, gallery, Metric::kCosine, ks, {3, 7}, false), ZeroShotViolation);
}

TEST_CASE("evaluation result does not depend on the thread count") {
  Rng rng(6);
  std::vector<Item> gallery, queries;
  for (std::uint32_t i = 0; i < 120; ++i) gallery.push_back(feature_item(i, static_cast<int>(i % 4), random_vec(16, rng)));
  for (std::uint32_t i = 0; i < 90; ++i) queries.push_back(feature_item(500 + i, static_cast<int>(i % 4), random_vec(16, rng)));
  const std::vector<std::size_t> ks{10, 50};
  const char* saved = std::getenv("SAKE_THREADS");
  const std::string restore = saved ? saved : "";
  setenv("SAKE_THREADS", "1", 1);
  const std::string one = evaluate(queries, gallery, Metric::kCosine, ks, {0, 1, 2, 3}, false).to_json().dump();
  setenv("SAKE_THREADS", "7", 1);
  const std::string seven = evaluate(queries, gallery, Metric::kCosine, ks, {0, 1, 2, 3}, false).to_json().dump();
  if (saved) {
    setenv("SAKE_THREADS", restore.c_str(), 1);
  } else {
    unsetenv("SAKE_THREADS");
  }
  CHECK(one == seven);
}

TEST_CASE("tercile grouping") {
  const std::map<int, double> none_conf{{1, 0.5}, {2, 0.6}, {3, 0.7}};
  const std::map<int, double> lch{{1, 1.0}, {2, 1.0}, {3, 1.0}};
  const TercileSummary s = analyze_improvement_groups({{1, 0.1}, {2, 0.2}, {3, 0.3}}, none_conf, lch);
  CHECK(s.groups[0].classes == std::vector<int>{1});
  CHECK(s.groups[1].classes == std::vector<int>{2});
  CHECK(s.groups[2].classes == std::vector<int>{3});
  CHECK_FALSE(s.degenerate);
  CHECK(s.confidence_increasing);
  CHECK(s.dropped.empty());

  const TercileSummary tie = analyze_improvement_groups({{1, 0.2}, {2, 0.2}, {3, 0.2}}, none_conf, lch);
  CHECK(tie.degenerate);
  CHECK(tie.groups[0].classes == std::vector<int>{1});
  CHECK(tie.groups[2].classes == std::vector<int>{3});

  // Six classes sorted by hand: deltas 9:-.05 4:.01 8:.02 3:.04 28:.07 29:.10.
  const std::map<int, double> deltas{{3, 0.04}, {4, 0.01}, {8, 0.02}, {9, -0.05}, {28, 0.07}, {29, 0.10}};
  const std::map<int, double> conf{{3, 0.8}, {4, 0.5}, {8, 0.6}, {9, 0.4}, {28, 0.9}, {29, 0.7}};
  const std::map<int, double> l6{{3, 2.0}, {4, 1.0}, {8, 2.0}, {9, 1.0}, {28, 2.0}, {29, 2.0}};
  const TercileSummary six = analyze_improvement_groups(deltas, conf, l6);
  CHECK(six.groups[0].classes == std::vector<int>{9, 4});
  CHECK(six.groups[1].classes == std::vector<int>{8, 3});
  CHECK(six.groups[2].classes == std::vector<int>{28, 29});
  CHECK(six.groups[0].mean_delta == doctest::Approx(-0.02).epsilon(1e-12));
  CHECK(six.groups[1].mean_confidence == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(six.groups[2].mean_confidence == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(six.groups[0].mean_lch == 1.0);
  CHECK(six.groups[2].mean_lch == 2.0);
  CHECK(six.confidence_increasing);
  CHECK(six.lch_increasing);
  CHECK(six.to_json().dump() == analyze_improvement_groups(deltas, conf, l6).to_json().dump());

  // Seven classes: the highest id is dropped before grouping.
  std::map<int, double> d7 = deltas, c7 = conf, l7 = l6;
  d7[40] = -1.0;
  c7[40] = 0.1;
  l7[40] = 1.0;
  const TercileSummary seven = analyze_improvement_groups(d7, c7, l7);
  CHECK(seven.dropped == std::vector<int>{40});
  CHECK(seven.groups[0].classes == six.groups[0].classes);

  CHECK_THROWS_AS(analyze_improvement_groups({{1, 0.1}, {2, 0.2}}, none_conf, lch), ContractViolation);
  CHECK_THROWS_AS(analyze_improvement_groups({{1, 0.1}, {2, 0.2}, {5, 0.3}}, none_conf, lch), ContractViolation);
}
