#include "nagg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nagg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

const char* to_string(WeightScheme s) {
  switch (s) {
    case WeightScheme::Binary: return "binary";
    case WeightScheme::SymNorm: return "symnorm";
    case WeightScheme::RowNorm: return "rownorm";
    case WeightScheme::External: return "external";
  }
  return "?";
}

Graph::Graph(int num_nodes, std::vector<int> row_offsets, std::vector<int> col_indices,
             std::vector<double> edge_weights, WeightScheme scheme)
    : num_nodes_(num_nodes),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      edge_weights_(std::move(edge_weights)),
      scheme_(scheme) {
  validate();
}

double Graph::weight(int v, int u) const {
  const auto lo = col_indices_.begin() + row_offsets_[v];
  const auto hi = col_indices_.begin() + row_offsets_[v + 1];
  const auto it = std::lower_bound(lo, hi, u);
  if (it == hi || *it != u) return 0.0;
  return edge_weights_[it - col_indices_.begin()];
}

bool Graph::has_edge(int v, int u) const {
  const auto lo = col_indices_.begin() + row_offsets_[v];
  const auto hi = col_indices_.begin() + row_offsets_[v + 1];
  return std::binary_search(lo, hi, u);
}

void Graph::validate() const {
  if (num_nodes_ < 0) fail("graph: negative node count");
  if (static_cast<int>(row_offsets_.size()) != num_nodes_ + 1)
    fail("graph: row_offsets length " + std::to_string(row_offsets_.size()) + ", expected " +
         std::to_string(num_nodes_ + 1));
  if (row_offsets_.front() != 0) fail("graph: row_offsets[0] != 0");
  if (row_offsets_.back() != static_cast<int>(col_indices_.size()))
    fail("graph: row_offsets end " + std::to_string(row_offsets_.back()) +
         " != edge count " + std::to_string(col_indices_.size()));
  if (edge_weights_.size() != col_indices_.size())
    fail("graph: " + std::to_string(edge_weights_.size()) + " weights for " +
         std::to_string(col_indices_.size()) + " edges");
  for (int v = 0; v < num_nodes_; ++v) {
    if (row_offsets_[v + 1] < row_offsets_[v]) fail("graph: row_offsets decrease at " + std::to_string(v));
    for (int e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e) {
      const int u = col_indices_[e];
      if (u < 0 || u >= num_nodes_)
        fail("graph: row " + std::to_string(v) + " has neighbor " + std::to_string(u) +
             " out of [0," + std::to_string(num_nodes_) + ")");
      if (e > row_offsets_[v] && col_indices_[e - 1] >= u)
        fail("graph: row " + std::to_string(v) + " columns not strictly ascending");
      if (!(edge_weights_[e] > 0.0))
        fail("graph: non-positive weight at edge (" + std::to_string(v) + "," + std::to_string(u) +
             ")");
    }
  }
  if (scheme_ == WeightScheme::Binary) {
    for (double w : edge_weights_)
      if (w != 1.0) fail("graph: binary scheme with weight != 1");
  }
  if (scheme_ == WeightScheme::RowNorm) {
    for (int v = 0; v < num_nodes_; ++v) {
      double s = 0.0;
      for (int e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e) s += edge_weights_[e];
      if (row_offsets_[v + 1] > row_offsets_[v] && std::abs(s - 1.0) > 1e-12)
        fail("graph: rownorm row " + std::to_string(v) + " sums to " + std::to_string(s));
    }
  }
}

Graph build_graph(const EdgeList& edges, bool add_self_loops, bool symmetrize) {
  const int n = edges.num_nodes;
  if (n < 0) fail("build_graph: negative node count");
  for (const auto& [s, d] : edges.pairs)
    if (s < 0 || s >= n || d < 0 || d >= n)
      fail("build_graph: edge (" + std::to_string(s) + "," + std::to_string(d) +
           ") out of range for " + std::to_string(n) + " nodes");

  // (dst, src) ordered pairs; row = aggregation target.
  std::set<std::pair<int, int>> uniq;
  for (const auto& [s, d] : edges.pairs) {
    uniq.emplace(d, s);
    if (symmetrize) uniq.emplace(s, d);
  }
  if (add_self_loops)
    for (int v = 0; v < n; ++v) uniq.emplace(v, v);

  std::vector<int> offsets(n + 1, 0);
  std::vector<int> cols;
  cols.reserve(uniq.size());
  for (const auto& [dst, src] : uniq) offsets[dst + 1]++;
  for (int v = 0; v < n; ++v) offsets[v + 1] += offsets[v];
  for (const auto& [dst, src] : uniq) cols.push_back(src);  // set order = sorted (dst, src)
  std::vector<double> weights(cols.size(), 1.0);
  return Graph(n, std::move(offsets), std::move(cols), std::move(weights), WeightScheme::Binary);
}

Graph Graph::sym_normalize() const {
  if (scheme_ != WeightScheme::Binary)
    fail("sym_normalize: expects a binary graph, got " + std::string(to_string(scheme_)));
  std::vector<double> deg(num_nodes_, 0.0);
  for (int v = 0; v < num_nodes_; ++v)
    for (int e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e) deg[v] += edge_weights_[e];
  for (int v = 0; v < num_nodes_; ++v) {
    if (deg[v] <= 0.0) fail("sym_normalize: node " + std::to_string(v) + " has zero degree");
    if (!has_edge(v, v))
      fail("sym_normalize: node " + std::to_string(v) + " lacks a self-loop");
  }
  std::vector<double> w(edge_weights_.size());
  for (int v = 0; v < num_nodes_; ++v)
    for (int e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e)
      w[e] = 1.0 / std::sqrt(deg[v] * deg[col_indices_[e]]);
  return Graph(num_nodes_, row_offsets_, col_indices_, std::move(w), WeightScheme::SymNorm);
}

Graph Graph::row_normalize() const {
  std::vector<double> w(edge_weights_.size());
  for (int v = 0; v < num_nodes_; ++v) {
    double s = 0.0;
    for (int e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e) s += edge_weights_[e];
    if (row_offsets_[v + 1] == row_offsets_[v] || s <= 0.0)
      fail("row_normalize: node " + std::to_string(v) + " has an empty row");
    for (int e = row_offsets_[v]; e < row_offsets_[v + 1]; ++e) w[e] = edge_weights_[e] / s;
  }
  return Graph(num_nodes_, row_offsets_, col_indices_, std::move(w), WeightScheme::RowNorm);
}

Graph Graph::with_external_weights(std::vector<double> weights) const {
  if (weights.size() != edge_weights_.size())
    fail("with_external_weights: " + std::to_string(weights.size()) + " weights for " +
         std::to_string(edge_weights_.size()) + " edges");
  return Graph(num_nodes_, row_offsets_, col_indices_, std::move(weights), WeightScheme::External);
}

EdgeList parse_edge_list(std::istream& in, const std::string& source_name, int num_nodes) {
  EdgeList out;
  std::string line;
  int line_no = 0;
  int max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long long s, d;
    if (!(ls >> s >> d))
      fail(source_name + ":" + std::to_string(line_no) + ": expected 'src<TAB>dst', got '" + line +
           "'");
    if (s < 0 || d < 0)
      fail(source_name + ":" + std::to_string(line_no) + ": negative node id");
    out.pairs.emplace_back(static_cast<int>(s), static_cast<int>(d));
    max_id = std::max(max_id, static_cast<int>(std::max(s, d)));
  }
  out.num_nodes = num_nodes >= 0 ? num_nodes : max_id + 1;
  if (max_id >= out.num_nodes)
    fail(source_name + ": node id " + std::to_string(max_id) + " exceeds declared count " +
         std::to_string(out.num_nodes));
  return out;
}

EdgeList read_edge_list_file(const std::string& path, int num_nodes) {
  std::ifstream in(path);
  if (!in) fail("cannot open edge list: " + path);
  return parse_edge_list(in, path, num_nodes);
}

void write_edge_list_file(const EdgeList& edges, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write edge list: " + path);
  for (const auto& [s, d] : edges.pairs) out << s << '\t' << d << '\n';
}

}  // namespace nagg
