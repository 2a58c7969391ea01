#include "ggp/graph.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ggp/error.hpp"
#include "hash.hpp"

namespace ggp {

SparseGraph SparseGraph::from_edge_list(std::size_t n_nodes, std::span<const Edge> edges) {
  std::vector<std::vector<NodeIndex>> lists(n_nodes);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto [u, v] = edges[i];
    if (u >= n_nodes || v >= n_nodes) {
      std::ostringstream msg;
      msg << "edge #" << i << " (" << u << ", " << v << ") out of range for " << n_nodes
          << " nodes";
      throw InputError(msg.str());
    }
    if (u == v) continue;
    lists[u].push_back(static_cast<NodeIndex>(v));
    lists[v].push_back(static_cast<NodeIndex>(u));
  }

  SparseGraph g;
  g.offsets_.assign(n_nodes + 1, 0);
  for (std::size_t u = 0; u < n_nodes; ++u) {
    auto& l = lists[u];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    g.offsets_[u + 1] = g.offsets_[u] + l.size();
  }
  g.adjacency_.reserve(g.offsets_.back());
  for (auto& l : lists) g.adjacency_.insert(g.adjacency_.end(), l.begin(), l.end());
  return g;
}

std::size_t SparseGraph::max_degree() const {
  std::size_t best = 0;
  for (std::size_t u = 0; u < n_nodes(); ++u) best = std::max(best, degree(u));
  return best;
}

bool SparseGraph::has_edge(std::size_t u, std::size_t v) const {
  auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), static_cast<NodeIndex>(v));
}

std::vector<Edge> SparseGraph::edge_list() const {
  std::vector<Edge> out;
  out.reserve(n_edges());
  for (std::size_t u = 0; u < n_nodes(); ++u)
    for (NodeIndex v : neighbors(u))
      if (u < v) out.emplace_back(u, v);
  return out;
}

std::uint64_t SparseGraph::fingerprint() const {
  detail::Fnv1a h;
  h.add(static_cast<std::uint64_t>(n_nodes()));
  for (auto [u, v] : edge_list()) {
    h.add(static_cast<std::uint64_t>(u));
    h.add(static_cast<std::uint64_t>(v));
  }
  return h.value();
}

Eigen::VectorXd laplacian_apply(const SparseGraph& g, const Eigen::VectorXd& f) {
  if (static_cast<std::size_t>(f.size()) != g.n_nodes())
    throw InputError("laplacian_apply: vector length does not match node count");
  Eigen::VectorXd out(f.size());
  for (std::size_t n = 0; n < g.n_nodes(); ++n) {
    double acc = 0.0;
    for (NodeIndex v : g.neighbors(n)) acc += f[n] - f[v];
    out[n] = acc;
  }
  return out;
}

Eigen::VectorXd averaging_apply(const SparseGraph& g, const Eigen::VectorXd& f) {
  if (static_cast<std::size_t>(f.size()) != g.n_nodes())
    throw InputError("averaging_apply: vector length does not match node count");
  Eigen::VectorXd out(f.size());
  for (std::size_t n = 0; n < g.n_nodes(); ++n) {
    double acc = f[n];
    for (NodeIndex v : g.neighbors(n)) acc += f[v];
    out[n] = acc / static_cast<double>(1 + g.degree(n));
  }
  return out;
}

ComponentSubgraph largest_connected_component(const SparseGraph& g) {
  const std::size_t n = g.n_nodes();
  if (n == 0) throw InputError("largest_connected_component: empty graph");

  // Components are discovered in order of their smallest member, so a strict
  // '>' comparison keeps the earliest on ties.
  std::vector<std::ptrdiff_t> comp(n, -1);
  std::vector<std::size_t> stack;
  std::ptrdiff_t best = -1, n_comp = 0;
  std::size_t best_size = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::size_t size = 0;
    comp[s] = n_comp;
    stack.push_back(s);
    while (!stack.empty()) {
      std::size_t u = stack.back();
      stack.pop_back();
      ++size;
      for (NodeIndex v : g.neighbors(u)) {
        if (comp[v] < 0) {
          comp[v] = n_comp;
          stack.push_back(v);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = n_comp;
    }
    ++n_comp;
  }

  ComponentSubgraph out;
  out.old_to_new.assign(n, -1);
  for (std::size_t u = 0; u < n; ++u) {
    if (comp[u] == best) {
      out.old_to_new[u] = static_cast<std::ptrdiff_t>(out.new_to_old.size());
      out.new_to_old.push_back(u);
    }
  }
  std::vector<Edge> edges;
  for (auto [u, v] : g.edge_list())
    if (comp[u] == best)
      edges.emplace_back(out.old_to_new[u], out.old_to_new[v]);
  out.graph = SparseGraph::from_edge_list(out.new_to_old.size(), edges);
  return out;
}

std::vector<Edge> read_edge_list(std::istream& in, const std::string& source_name) {
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    long long u = -1, v = -1;
    std::string extra;
    if (!(fields >> u >> v) || (fields >> extra) || u < 0 || v < 0) {
      std::ostringstream msg;
      msg << source_name << ":" << line_no << ": expected two non-negative node indices, got '"
          << line << "'";
      throw InputError(msg.str());
    }
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  return edges;
}

void write_edge_list(std::ostream& out, const SparseGraph& g) {
  for (auto [u, v] : g.edge_list()) out << u << '\t' << v << '\n';
}

}  // namespace ggp
