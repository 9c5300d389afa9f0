#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace nagg {

enum class WeightScheme { Binary, SymNorm, RowNorm, External };

const char* to_string(WeightScheme s);

/// Ingestion intermediate: raw (src, dst) pairs plus the node count.
struct EdgeList {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> pairs;
};

/// Immutable CSR adjacency. Row v lists the neighborhood aggregated into v:
/// col_indices[row_offsets[v]..row_offsets[v+1]) are the sources u, sorted
/// ascending, with one positive weight each. Self-loops, when requested at
/// build time, are ordinary entries (v, v).
class Graph {
 public:
  Graph() = default;
  Graph(int num_nodes, std::vector<int> row_offsets, std::vector<int> col_indices,
        std::vector<double> edge_weights, WeightScheme scheme);

  int num_nodes() const { return num_nodes_; }
  int num_edges() const { return static_cast<int>(col_indices_.size()); }
  WeightScheme scheme() const { return scheme_; }

  const std::vector<int>& row_offsets() const { return row_offsets_; }
  const std::vector<int>& col_indices() const { return col_indices_; }
  const std::vector<double>& edge_weights() const { return edge_weights_; }

  int degree(int v) const { return row_offsets_[v + 1] - row_offsets_[v]; }
  /// Weight of edge (v, u); 0 when absent.
  double weight(int v, int u) const;
  bool has_edge(int v, int u) const;

  /// GCN normalization: w(u,v) = 1/sqrt(deg(u) deg(v)) with self-loop-inclusive
  /// degrees. Requires a Binary graph where every node has a self-loop.
  Graph sym_normalize() const;
  /// Row-stochastic weights; requires every row nonempty.
  Graph row_normalize() const;
  /// Same topology, caller-supplied per-edge weights (e.g. learned attention).
  Graph with_external_weights(std::vector<double> weights) const;

  /// Full invariant check; throws on violation. Construction already
  /// validates, this re-verifies externally assembled graphs.
  void validate() const;

 private:
  int num_nodes_ = 0;
  std::vector<int> row_offsets_{0};
  std::vector<int> col_indices_;
  std::vector<double> edge_weights_;
  WeightScheme scheme_ = WeightScheme::Binary;
};

/// Deduplicates, optionally symmetrizes and adds self-loops, sorts each row.
/// The result is Binary (all weights 1).
Graph build_graph(const EdgeList& edges, bool add_self_loops, bool symmetrize);

/// Edge-list text format: one "src<TAB>dst" per line, 0-indexed decimal,
/// '#'-prefixed comment lines ignored. num_nodes = 1 + max index unless a
/// larger count is given.
EdgeList parse_edge_list(std::istream& in, const std::string& source_name, int num_nodes = -1);
EdgeList read_edge_list_file(const std::string& path, int num_nodes = -1);
void write_edge_list_file(const EdgeList& edges, const std::string& path);

}  // namespace nagg
