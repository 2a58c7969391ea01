#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ggp/features.hpp"
#include "ggp/graph.hpp"
#include "ggp/svgp.hpp"

namespace ggp {

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  friend bool operator==(const Splits&, const Splits&) = default;
};

/// Graph, features, ground-truth labels for every node (-1 where unknown)
/// and named splits. The split file, not label presence, defines what a
/// model may see.
struct Dataset {
  SparseGraph graph;
  FeatureMatrix features;
  std::vector<int> labels;
  int n_classes = 0;
  Splits splits;
  /// Non-comment lines in the source edge file (before symmetrization and
  /// de-duplication); equals graph.n_edges() for generated data.
  std::size_t edge_lines = 0;

  std::size_t n_nodes() const noexcept { return graph.n_nodes(); }

  /// Throws InputError on shape mismatch, overlapping or dangling splits,
  /// unlabelled split members, or a class in [0, K) with no node.
  void validate() const;
  /// Stable content hash over graph, features, labels and splits.
  std::uint64_t fingerprint() const;
  std::vector<LabelledNode> labelled(std::span<const std::size_t> nodes) const;
  const std::vector<std::size_t>& split(const std::string& name) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.graph == b.graph && a.features == b.features && a.labels == b.labels &&
           a.n_classes == b.n_classes && a.splits == b.splits;
  }
};

/// Reads graph.edges, features.sparse, labels.tsv and split.json from `dir`.
Dataset load_dataset(const std::filesystem::path& dir);
void write_dataset(const Dataset& d, const std::filesystem::path& dir);

/// Induced sub-dataset on a component; split members outside it are dropped.
Dataset restrict_to_component(const Dataset& d, const ComponentSubgraph& component);

struct SbmParams {
  std::size_t n_per_block = 10;
  std::size_t n_blocks = 2;
  double p_in = 1.0;
  double p_out = 0.0;
  std::size_t d_per_block = 5;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::size_t train_per_block = 1;
  std::size_t val_per_block = 0;
};

/// Stochastic block model with block-signature binary features: node in
/// block b has ones on features [b*d, (b+1)*d) and Bernoulli(noise) ones on
/// every other feature. Labels are block ids; the test split is every node
/// not drawn for train or val.
Dataset synth_sbm(const SbmParams& params);

}  // namespace ggp
