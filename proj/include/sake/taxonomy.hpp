#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sake/tensor.hpp"

namespace sake {

using NodeId = std::size_t;

// Rooted tree of named concepts. Root depth is 1; depth() is the maximum node
// depth counted in nodes.
class Taxonomy {
 public:
  // Lines are "parent<TAB>child"; '#' starts a comment; blank lines are skipped.
  static Taxonomy parse(std::istream& in);
  static Taxonomy parse(std::string_view text);
  static Taxonomy load(const std::filesystem::path& edge_list);

  std::size_t size() const { return names_.size(); }
  NodeId root() const { return root_; }
  std::size_t depth() const { return max_depth_; }

  NodeId node(std::string_view name) const;
  bool contains(std::string_view name) const;
  const std::string& name(NodeId id) const { return names_.at(id); }
  // Root's parent is itself.
  NodeId parent(NodeId id) const { return parent_.at(id); }
  std::size_t node_depth(NodeId id) const { return depth_.at(id); }
  std::vector<NodeId> children(NodeId id) const;

  // Edge count of the unique tree path between u and v.
  std::size_t distance(NodeId u, NodeId v) const;
  std::size_t distance(std::string_view u, std::string_view v) const {
    return distance(node(u), node(v));
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, NodeId> index_;
  std::vector<NodeId> parent_;
  std::vector<std::size_t> depth_;
  NodeId root_ = 0;
  std::size_t max_depth_ = 0;
};

// 1 / (1 + d(u, v))
double path_similarity(const Taxonomy& tax, NodeId u, NodeId v);
double path_similarity(const Taxonomy& tax, std::string_view u, std::string_view v);

// -ln((d(u, v) + 1) / (2 D)), D = taxonomy depth in nodes.
double lch_similarity(const Taxonomy& tax, NodeId u, NodeId v);
double lch_similarity(const Taxonomy& tax, std::string_view u, std::string_view v);

// class id -> taxonomy node, from "class_id<TAB>node_name" lines.
class ClassMap {
 public:
  static ClassMap parse(std::istream& in, const Taxonomy& tax);
  static ClassMap parse(std::string_view text, const Taxonomy& tax);
  static ClassMap load(const std::filesystem::path& path, const Taxonomy& tax);

  NodeId node(int class_id) const;
  const std::string& node_name(int class_id) const;
  bool contains(int class_id) const { return nodes_.count(class_id) != 0; }
  std::vector<int> class_ids() const;
  std::size_t size() const { return nodes_.size(); }

 private:
  std::map<int, NodeId> nodes_;
  std::map<int, std::string> names_;
};

// a[k, m] = path_similarity(node(source[k]), node(original[m])); immutable.
class SimilarityMatrix {
 public:
  SimilarityMatrix(const Taxonomy& tax, const ClassMap& classes, std::span<const int> source_classes,
                   std::span<const int> original_classes);

  std::size_t rows() const { return source_.size(); }
  std::size_t cols() const { return original_.size(); }
  double at(std::size_t k, std::size_t m) const { return values_[k * cols() + m]; }
  // Row for the source class at head index k.
  std::span<const double> row(std::size_t k) const {
    return std::span<const double>(values_).subspan(k * cols(), cols());
  }
  // Row for a source class id.
  std::span<const double> row_for_class(int class_id) const;
  const std::vector<int>& source_classes() const { return source_; }
  const std::vector<int>& original_classes() const { return original_; }

 private:
  std::vector<int> source_;
  std::vector<int> original_;
  std::vector<double> values_;
};

// The shipped toy taxonomy: 40 leaves under 8 families, depth 4.
std::string_view builtin_taxonomy_edges();
// Class ids 0..39 mapped to the toy taxonomy's leaves.
std::string_view builtin_class_map();

}  // namespace sake
