#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ggp {

using NodeIndex = std::uint32_t;
using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected, unweighted graph stored as sorted neighbor lists (CSR).
/// Immutable after construction. No self-loops, no parallel edges.
class SparseGraph {
 public:
  SparseGraph() = default;

  /// Symmetrizes the input, merges duplicate pairs and drops (u, u) pairs.
  /// Throws InputError naming the offending pair when an index is out of range.
  static SparseGraph from_edge_list(std::size_t n_nodes, std::span<const Edge> edges);

  std::size_t n_nodes() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  /// Number of undirected edges.
  std::size_t n_edges() const noexcept { return adjacency_.size() / 2; }

  std::span<const NodeIndex> neighbors(std::size_t u) const {
    return {adjacency_.data() + offsets_[u], adjacency_.data() + offsets_[u + 1]};
  }
  std::size_t degree(std::size_t u) const { return offsets_[u + 1] - offsets_[u]; }
  std::size_t max_degree() const;
  bool has_edge(std::size_t u, std::size_t v) const;

  /// Edges with u < v, in ascending (u, v) order.
  std::vector<Edge> edge_list() const;

  /// Stable 64-bit content hash (FNV-1a over the canonical edge list).
  std::uint64_t fingerprint() const;

  friend bool operator==(const SparseGraph&, const SparseGraph&) = default;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NodeIndex> adjacency_;
};

/// (L f)[n] = sum over neighbors v of (f[n] - f[v]), with L = D - A.
Eigen::VectorXd laplacian_apply(const SparseGraph& g, const Eigen::VectorXd& f);

/// (P f)[n] with P = (I + D)^-1 (I + A): mean of f over the closed neighborhood of n.
Eigen::VectorXd averaging_apply(const SparseGraph& g, const Eigen::VectorXd& f);

struct ComponentSubgraph {
  SparseGraph graph;
  /// old_to_new[u] is the new index of u, or -1 if u was dropped.
  std::vector<std::ptrdiff_t> old_to_new;
  /// new_to_old[i] is the original index of new node i (ascending).
  std::vector<std::size_t> new_to_old;
};

/// Induced subgraph on the largest connected component. Ties go to the
/// component containing the smallest original index. Throws on an empty graph.
ComponentSubgraph largest_connected_component(const SparseGraph& g);

/// Parses `u<TAB>v` lines; blank lines and `#` comments are skipped.
/// Any whitespace separates fields. Errors carry the 1-based line number.
std::vector<Edge> read_edge_list(std::istream& in, const std::string& source_name = "<edges>");
void write_edge_list(std::ostream& out, const SparseGraph& g);

}  // namespace ggp
