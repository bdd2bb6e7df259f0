#include "sake/taxonomy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "sake/errors.hpp"

namespace sake {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Strips comments and surrounding blanks; returns false for lines to skip.
bool content_of(std::string_view raw, std::string_view& out) {
  const auto hash = raw.find('#');
  if (hash != std::string_view::npos) raw = raw.substr(0, hash);
  // Only strip the line ends, the tab separator must survive.
  while (!raw.empty() && (raw.back() == '\r' || raw.back() == ' ' || raw.back() == '\t')) raw.remove_suffix(1);
  while (!raw.empty() && raw.front() == ' ') raw.remove_prefix(1);
  out = raw;
  return !raw.empty();
}

bool split_tab(std::string_view line, std::string_view& left, std::string_view& right) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos) return false;
  left = trim(line.substr(0, tab));
  right = trim(line.substr(tab + 1));
  return right.find('\t') == std::string_view::npos;
}

}  // namespace

Taxonomy Taxonomy::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

Taxonomy Taxonomy::load(const std::filesystem::path& edge_list) {
  std::ifstream in(edge_list);
  if (!in) throw LookupError("cannot open taxonomy file " + edge_list.string());
  return parse(in);
}

Taxonomy Taxonomy::parse(std::istream& in) {
  Taxonomy tax;
  constexpr NodeId kNoParent = static_cast<NodeId>(-1);
  std::vector<std::size_t> first_seen;   // line where each node first appears
  std::vector<std::size_t> parent_line;  // line of the edge giving the parent

  auto intern = [&](std::string_view name, std::size_t line) {
    auto it = tax.index_.find(std::string(name));
    if (it != tax.index_.end()) return it->second;
    const NodeId id = tax.names_.size();
    tax.names_.emplace_back(name);
    tax.index_.emplace(std::string(name), id);
    tax.parent_.push_back(kNoParent);
    first_seen.push_back(line);
    parent_line.push_back(0);
    return id;
  };

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line;
    if (!content_of(raw, line)) continue;
    std::string_view parent_name, child_name;
    if (!split_tab(line, parent_name, child_name)) {
      throw ParseError(line_no, "expected 'parent<TAB>child'");
    }
    if (parent_name.empty() || child_name.empty()) {
      throw ParseError(line_no, "dangling edge with an empty endpoint");
    }
    if (parent_name == child_name) {
      throw ParseError(line_no, "cycle: '" + std::string(child_name) + "' is its own parent");
    }
    const NodeId p = intern(parent_name, line_no);
    const NodeId c = intern(child_name, line_no);
    if (tax.parent_[c] != kNoParent) {
      throw ParseError(line_no, "duplicate child '" + std::string(child_name) + "' (already under '" +
                                    tax.names_[tax.parent_[c]] + "')");
    }
    tax.parent_[c] = p;
    parent_line[c] = line_no;
  }
  if (tax.names_.empty()) throw ParseError(line_no, "taxonomy has no edges");

  std::vector<NodeId> roots;
  for (NodeId i = 0; i < tax.size(); ++i) {
    if (tax.parent_[i] == kNoParent) roots.push_back(i);
  }
  if (roots.size() > 1) {
    throw ParseError(first_seen[roots[1]], "multiple roots: '" + tax.names_[roots[0]] + "' and '" +
                                               tax.names_[roots[1]] + "'");
  }

  // Every node has a parent except the root, so a node not reachable from the
  // root sits on a cycle.
  tax.depth_.assign(tax.size(), 0);
  std::vector<std::vector<NodeId>> kids(tax.size());
  for (NodeId i = 0; i < tax.size(); ++i) {
    if (tax.parent_[i] != kNoParent) kids[tax.parent_[i]].push_back(i);
  }
  if (!roots.empty()) {
    tax.root_ = roots[0];
    tax.depth_[tax.root_] = 1;
    std::queue<NodeId> q;
    q.push(tax.root_);
    while (!q.empty()) {
      const NodeId u = q.front();
      q.pop();
      tax.max_depth_ = std::max(tax.max_depth_, tax.depth_[u]);
      for (NodeId v : kids[u]) {
        tax.depth_[v] = tax.depth_[u] + 1;
        q.push(v);
      }
    }
  }
  std::size_t cycle_line = 0;
  std::string cycle_node;
  for (NodeId i = 0; i < tax.size(); ++i) {
    if (tax.depth_[i] == 0 && parent_line[i] > cycle_line) {
      cycle_line = parent_line[i];
      cycle_node = tax.names_[i];
    }
  }
  if (cycle_line != 0) throw ParseError(cycle_line, "cycle through '" + cycle_node + "'");

  tax.parent_[tax.root_] = tax.root_;
  return tax;
}

NodeId Taxonomy::node(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw LookupError("unknown taxonomy node '" + std::string(name) + "'");
  return it->second;
}

bool Taxonomy::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::vector<NodeId> Taxonomy::children(NodeId id) const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < size(); ++i) {
    if (i != root_ && parent_[i] == id) out.push_back(i);
  }
  return out;
}

std::size_t Taxonomy::distance(NodeId u, NodeId v) const {
  if (u >= size() || v >= size()) throw LookupError("taxonomy node id out of range");
  std::size_t d = 0;
  while (depth_[u] > depth_[v]) { u = parent_[u]; ++d; }
  while (depth_[v] > depth_[u]) { v = parent_[v]; ++d; }
  while (u != v) {
    u = parent_[u];
    v = parent_[v];
    d += 2;
  }
  return d;
}

double path_similarity(const Taxonomy& tax, NodeId u, NodeId v) {
  return 1.0 / (1.0 + static_cast<double>(tax.distance(u, v)));
}

double path_similarity(const Taxonomy& tax, std::string_view u, std::string_view v) {
  return path_similarity(tax, tax.node(u), tax.node(v));
}

double lch_similarity(const Taxonomy& tax, NodeId u, NodeId v) {
  const double d = static_cast<double>(tax.distance(u, v));
  return -std::log((d + 1.0) / (2.0 * static_cast<double>(tax.depth())));
}

double lch_similarity(const Taxonomy& tax, std::string_view u, std::string_view v) {
  return lch_similarity(tax, tax.node(u), tax.node(v));
}

ClassMap ClassMap::parse(std::string_view text, const Taxonomy& tax) {
  std::istringstream in{std::string(text)};
  return parse(in, tax);
}

ClassMap ClassMap::load(const std::filesystem::path& path, const Taxonomy& tax) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open class map " + path.string());
  return parse(in, tax);
}

ClassMap ClassMap::parse(std::istream& in, const Taxonomy& tax) {
  ClassMap map;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line;
    if (!content_of(raw, line)) continue;
    std::string_view id_text, name;
    if (!split_tab(line, id_text, name) || id_text.empty() || name.empty()) {
      throw ParseError(line_no, "expected 'class_id<TAB>node_name'");
    }
    int id = 0;
    const auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc() || ptr != id_text.data() + id_text.size() || id < 0) {
      throw ParseError(line_no, "invalid class id '" + std::string(id_text) + "'");
    }
    if (!tax.contains(name)) {
      throw ParseError(line_no, "dangling reference to unknown node '" + std::string(name) + "'");
    }
    if (map.nodes_.count(id)) throw ParseError(line_no, "duplicate class id " + std::to_string(id));
    map.nodes_[id] = tax.node(name);
    map.names_[id] = std::string(name);
  }
  return map;
}

NodeId ClassMap::node(int class_id) const {
  auto it = nodes_.find(class_id);
  if (it == nodes_.end()) throw LookupError("class " + std::to_string(class_id) + " has no taxonomy node");
  return it->second;
}

const std::string& ClassMap::node_name(int class_id) const {
  auto it = names_.find(class_id);
  if (it == names_.end()) throw LookupError("class " + std::to_string(class_id) + " has no taxonomy node");
  return it->second;
}

std::vector<int> ClassMap::class_ids() const {
  std::vector<int> ids;
  for (const auto& [id, node] : nodes_) ids.push_back(id);
  return ids;
}

SimilarityMatrix::SimilarityMatrix(const Taxonomy& tax, const ClassMap& classes,
                                   std::span<const int> source_classes,
                                   std::span<const int> original_classes)
    : source_(source_classes.begin(), source_classes.end()),
      original_(original_classes.begin(), original_classes.end()) {
  values_.reserve(source_.size() * original_.size());
  for (int k : source_) {
    const NodeId u = classes.node(k);
    for (int m : original_) values_.push_back(path_similarity(tax, u, classes.node(m)));
  }
}

std::span<const double> SimilarityMatrix::row_for_class(int class_id) const {
  auto it = std::find(source_.begin(), source_.end(), class_id);
  if (it == source_.end()) throw LookupError("class " + std::to_string(class_id) + " is not a source class");
  return row(static_cast<std::size_t>(it - source_.begin()));
}

std::string_view builtin_taxonomy_edges() {
  return R"(# Toy taxonomy: entity > 3 forms > 8 shape families > 40 leaves.
entity	rounded
entity	polygonal
entity	radiate
rounded	ellipse
rounded	ring
rounded	ring_composite
polygonal	low_polygon
polygonal	high_polygon
radiate	star
radiate	cross
radiate	glyph
ellipse	disc
ellipse	oval_wide
ellipse	oval_tall
ellipse	oval_diagonal
ellipse	half_disc
ring	ring_thin
ring	ring_thick
ring	ring_oval
ring	ring_double
ring	ring_broken
ring_composite	ring_dot
ring_composite	ring_bar
ring_composite	ring_cross
ring_composite	ring_pair
ring_composite	ring_square
low_polygon	triangle
low_polygon	triangle_inverted
low_polygon	square
low_polygon	diamond
low_polygon	pentagon
high_polygon	hexagon
high_polygon	heptagon
high_polygon	octagon
high_polygon	trapezoid
high_polygon	parallelogram
star	star4
star	star5
star	star6
star	star7
star	star8
cross	plus
cross	saltire
cross	plus_thick
cross	double_cross
cross	tee
glyph	hbar
glyph	vbar
glyph	chevron
glyph	arrow
glyph	zigzag
)";
}

std::string_view builtin_class_map() {
  return R"(0	disc
1	oval_wide
2	oval_tall
3	oval_diagonal
4	half_disc
5	ring_thin
6	ring_thick
7	ring_oval
8	ring_double
9	ring_broken
10	ring_dot
11	ring_bar
12	ring_cross
13	ring_pair
14	ring_square
15	triangle
16	triangle_inverted
17	square
18	diamond
19	pentagon
20	hexagon
21	heptagon
22	octagon
23	trapezoid
24	parallelogram
25	star4
26	star5
27	star6
28	star7
29	star8
30	plus
31	saltire
32	plus_thick
33	double_cross
34	tee
35	hbar
36	vbar
37	chevron
38	arrow
39	zigzag
)";
}

}  // namespace sake
