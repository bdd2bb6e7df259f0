#include "sake/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sake/errors.hpp"
#include "sake/parallel.hpp"

namespace sake {

Metric parse_metric(const std::string& name) {
  if (name == "cosine") return Metric::kCosine;
  if (name == "hamming") return Metric::kHamming;
  throw ContractViolation("unknown metric '" + name + "' (expected cosine or hamming)");
}

std::string metric_name(Metric m) { return m == Metric::kCosine ? "cosine" : "hamming"; }

double cosine_distance(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw ContractViolation("cosine_distance: length mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += static_cast<double>(u[i]) * v[i];
    nu += static_cast<double>(u[i]) * u[i];
    nv += static_cast<double>(v[i]) * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw ContractViolation("cosine_distance: zero vector");
  return 1.0 - dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<std::uint8_t> RankedList::relevance() const {
  std::vector<std::uint8_t> r(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) r[i] = entries[i].relevant;
  return r;
}

RankedList rank(const Item& query, std::span<const Item> gallery, Metric metric, long long skip_id) {
  const bool want_codes = metric == Metric::kHamming;
  auto kind_ok = [&](const Item& it) { return std::holds_alternative<BinaryCode>(it.rep) == want_codes; };
  if (!kind_ok(query)) {
    throw ContractViolation("rank: query " + std::to_string(query.id) + " is not a " +
                            (want_codes ? "binary code" : "real-valued feature") + " for the " +
                            metric_name(metric) + " metric");
  }
  RankedList out;
  out.query_id = query.id;
  out.entries.reserve(gallery.size());
  for (const Item& g : gallery) {
    if (skip_id >= 0 && g.id == static_cast<std::uint64_t>(skip_id)) continue;
    if (!kind_ok(g)) throw ContractViolation("rank: gallery mixes representation kinds");
    double d;
    if (want_codes) {
      d = static_cast<double>(hamming_distance(std::get<BinaryCode>(query.rep), std::get<BinaryCode>(g.rep)));
    } else {
      try {
        d = cosine_distance(std::get<std::vector<float>>(query.rep), std::get<std::vector<float>>(g.rep));
      } catch (const ContractViolation& e) {
        throw ContractViolation(std::string(e.what()) + " (query " + std::to_string(query.id) + ", gallery " +
                                std::to_string(g.id) + ")");
      }
    }
    const bool rel = g.class_id == query.class_id;
    out.entries.push_back({g.id, d, rel});
    out.total_relevant += rel;
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  return out;
}

double average_precision(std::span<const std::uint8_t> relevance, std::size_t total_relevant) {
  if (total_relevant == 0) throw ContractViolation("average_precision: no relevant items");
  double hits = 0, sum = 0;
  for (std::size_t k = 0; k < relevance.size(); ++k) {
    if (relevance[k]) {
      hits += 1;
      sum += hits / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

double average_precision_at(std::span<const std::uint8_t> relevance, std::size_t total_relevant, std::size_t k) {
  if (k == 0) throw ContractViolation("average_precision_at: K must be positive");
  return average_precision(relevance.first(std::min(k, relevance.size())), std::min(total_relevant, k));
}

double precision_at_k(std::span<const std::uint8_t> relevance, std::size_t k) {
  if (k == 0) throw ContractViolation("precision_at_k: K must be positive");
  const std::size_t n = std::min(k, relevance.size());
  if (n == 0) return 0.0;
  const std::size_t hits = static_cast<std::size_t>(std::count(relevance.begin(), relevance.begin() + n, 1));
  return static_cast<double>(hits) / static_cast<double>(n);
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["metric"] = metric;
  j["map_all"] = map_all;
  for (const auto& [k, v] : map_at) j["map_at"][std::to_string(k)] = v;
  for (const auto& [k, v] : precision_at) j["precision_at"][std::to_string(k)] = v;
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [c, v] : per_class_ap) per.push_back({{"class_id", c}, {"ap", v}});
  j["per_class_ap"] = per;
  j["query_count"] = query_count;
  j["excluded_queries"] = excluded_queries;
  return j;
}

std::string MetricReport::to_table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-14s %10s\n", "measure", "value");
  out << line;
  std::snprintf(line, sizeof line, "%-14s %10.4f\n", "mAP@all", map_all);
  out << line;
  for (const auto& [k, v] : map_at) {
    std::snprintf(line, sizeof line, "%-14s %10.4f\n", ("mAP@" + std::to_string(k)).c_str(), v);
    out << line;
  }
  for (const auto& [k, v] : precision_at) {
    std::snprintf(line, sizeof line, "%-14s %10.4f\n", ("Prec@" + std::to_string(k)).c_str(), v);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-14s %10zu\n", "queries", query_count);
  out << line;
  if (excluded_queries) {
    std::snprintf(line, sizeof line, "%-14s %10zu\n", "excluded", excluded_queries);
    out << line;
  }
  out << "\n";
  std::snprintf(line, sizeof line, "%-8s %10s\n", "class", "AP@all");
  out << line;
  for (const auto& [c, v] : per_class_ap) {
    std::snprintf(line, sizeof line, "%-8d %10.4f\n", c, v);
    out << line;
  }
  return out.str();
}

MetricReport evaluate(std::span<const Item> queries, std::span<const Item> gallery, Metric metric,
                      std::span<const std::size_t> ks, const std::set<int>& target_classes, bool skip_self) {
  for (const auto* set : {&queries, &gallery}) {
    for (const Item& it : *set) {
      if (!target_classes.count(it.class_id)) {
        throw ZeroShotViolation(std::string(set == &queries ? "query " : "gallery item ") + std::to_string(it.id) +
                                " has class " + std::to_string(it.class_id) + ", which is not a target class");
      }
    }
  }
  for (std::size_t k : ks) {
    if (k == 0) throw ContractViolation("evaluate: K must be positive");
  }
  struct PerQuery {
    bool excluded = false;
    double ap = 0;
    std::vector<double> ap_k, prec_k;
  };
  std::vector<PerQuery> results(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const RankedList list = rank(queries[q], gallery, metric, skip_self ? static_cast<long long>(queries[q].id) : -1);
    PerQuery& r = results[q];
    if (list.total_relevant == 0) {
      r.excluded = true;
      return;
    }
    const auto rel = list.relevance();
    r.ap = average_precision(rel, list.total_relevant);
    for (std::size_t k : ks) {
      r.ap_k.push_back(average_precision_at(rel, list.total_relevant, k));
      r.prec_k.push_back(precision_at_k(rel, k));
    }
  });

  MetricReport report;
  report.metric = metric_name(metric);
  std::vector<double> ap_k(ks.size(), 0.0), prec_k(ks.size(), 0.0);
  std::map<int, std::pair<double, std::size_t>> per_class;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const PerQuery& r = results[q];
    if (r.excluded) {
      ++report.excluded_queries;
      continue;
    }
    ++report.query_count;
    report.map_all += r.ap;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      ap_k[i] += r.ap_k[i];
      prec_k[i] += r.prec_k[i];
    }
    auto& pc = per_class[queries[q].class_id];
    pc.first += r.ap;
    pc.second += 1;
  }
  if (report.query_count > 0) {
    const double n = static_cast<double>(report.query_count);
    report.map_all /= n;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      report.map_at[ks[i]] = ap_k[i] / n;
      report.precision_at[ks[i]] = prec_k[i] / n;
    }
  }
  for (const auto& [c, acc] : per_class) report.per_class_ap[c] = acc.first / static_cast<double>(acc.second);
  return report;
}

Tensor<float> embed_samples(const ModelParams& params, std::span<const Sample> samples) {
  return embed_batch(params, stack_images(samples, params.config.input_side), modalities(samples));
}

std::vector<Item> make_items(std::span<const Sample> samples, const Tensor<float>& embeddings,
                             const ItqCodec* codec) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != samples.size()) {
    throw ContractViolation("make_items: one embedding row per sample expected");
  }
  std::vector<Item> items;
  items.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto row = embeddings.row(i);
    Item it{samples[i].sample_id, samples[i].class_id, {}};
    if (codec) {
      it.rep = encode(*codec, row);
    } else {
      it.rep = std::vector<float>(row.begin(), row.end());
    }
    items.push_back(std::move(it));
  }
  return items;
}

void write_embeddings_csv(const std::filesystem::path& path, std::span<const Sample> samples,
                          const Tensor<float>& embeddings) {
  if (embeddings.rank() != 2 || embeddings.dim(0) != samples.size()) {
    throw ContractViolation("write_embeddings_csv: one embedding row per sample expected");
  }
  std::ofstream out(path);
  if (!out) throw ContractViolation("cannot write " + path.string());
  out << "id,class,modality";
  for (std::size_t j = 0; j < embeddings.dim(1); ++j) out << ",x" << j;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << samples[i].sample_id << "," << samples[i].class_id << ","
        << (samples[i].modality == Domain::kPhoto ? "photo" : "sketch");
    for (float v : embeddings.row(i)) {
      std::snprintf(buf, sizeof buf, ",%.9g", static_cast<double>(v));
      out << buf;
    }
    out << "\n";
  }
}

nlohmann::json TercileSummary::to_json() const {
  static const char* names[3] = {"low", "medium", "high"};
  nlohmann::json j;
  for (int g = 0; g < 3; ++g) {
    j["groups"].push_back({{"group", names[g]},
                           {"classes", groups[g].classes},
                           {"mean_delta", groups[g].mean_delta},
                           {"mean_teacher_confidence", groups[g].mean_confidence},
                           {"mean_lch_similarity", groups[g].mean_lch}});
  }
  j["dropped_classes"] = dropped;
  j["degenerate"] = degenerate;
  j["confidence_increasing"] = confidence_increasing;
  j["lch_increasing"] = lch_increasing;
  return j;
}

std::string TercileSummary::to_table() const {
  static const char* names[3] = {"low", "medium", "high"};
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-16s %12s %12s %12s\n", "group", "classes", "mean_delta", "confidence",
                "lch");
  out << line;
  for (int g = 0; g < 3; ++g) {
    std::string cls;
    for (int c : groups[g].classes) cls += (cls.empty() ? "" : ",") + std::to_string(c);
    std::snprintf(line, sizeof line, "%-8s %-16s %12.4f %12.4f %12.4f\n", names[g], cls.c_str(),
                  groups[g].mean_delta, groups[g].mean_confidence, groups[g].mean_lch);
    out << line;
  }
  if (!dropped.empty()) {
    out << "dropped:";
    for (int c : dropped) out << " " << c;
    out << "\n";
  }
  if (degenerate) out << "note: tied improvements, order decided by class id\n";
  return out.str();
}

TercileSummary analyze_improvement_groups(const std::map<int, double>& deltas,
                                          const std::map<int, double>& teacher_confidence,
                                          const std::map<int, double>& lch_similarity) {
  if (deltas.size() < 3) throw ContractViolation("analyze: need at least 3 classes");
  for (const auto& [c, d] : deltas) {
    if (!teacher_confidence.count(c) || !lch_similarity.count(c)) {
      throw ContractViolation("analyze: class " + std::to_string(c) + " lacks a confidence or similarity value");
    }
  }
  TercileSummary s;
  std::vector<int> kept;
  for (const auto& [c, d] : deltas) kept.push_back(c);  // ascending ids
  const std::size_t remainder = kept.size() % 3;
  s.dropped.assign(kept.end() - static_cast<std::ptrdiff_t>(remainder), kept.end());
  kept.resize(kept.size() - remainder);

  std::stable_sort(kept.begin(), kept.end(), [&](int a, int b) {
    const double da = deltas.at(a), db = deltas.at(b);
    return da != db ? da < db : a < b;
  });
  for (std::size_t i = 1; i < kept.size(); ++i) {
    if (deltas.at(kept[i]) == deltas.at(kept[i - 1])) s.degenerate = true;
  }
  const std::size_t per = kept.size() / 3;
  for (std::size_t g = 0; g < 3; ++g) {
    TercileGroup& grp = s.groups[g];
    grp.classes.assign(kept.begin() + static_cast<std::ptrdiff_t>(g * per),
                       kept.begin() + static_cast<std::ptrdiff_t>((g + 1) * per));
    for (int c : grp.classes) {
      grp.mean_delta += deltas.at(c);
      grp.mean_confidence += teacher_confidence.at(c);
      grp.mean_lch += lch_similarity.at(c);
    }
    grp.mean_delta /= static_cast<double>(per);
    grp.mean_confidence /= static_cast<double>(per);
    grp.mean_lch /= static_cast<double>(per);
  }
  s.confidence_increasing = s.groups[0].mean_confidence <= s.groups[1].mean_confidence &&
                            s.groups[1].mean_confidence <= s.groups[2].mean_confidence;
  s.lch_increasing = s.groups[0].mean_lch <= s.groups[1].mean_lch && s.groups[1].mean_lch <= s.groups[2].mean_lch;
  return s;
}

}  // namespace sake
