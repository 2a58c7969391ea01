#include "ggp/data.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ggp/error.hpp"
#include "hash.hpp"

namespace ggp {

namespace fs = std::filesystem;

namespace {

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  return in;
}

std::ofstream open_output(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  return out;
}

std::vector<std::pair<std::size_t, int>> read_labels(std::istream& in, const std::string& name) {
  std::vector<std::pair<std::size_t, int>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream f(line);
    long long node = -1, cls = -1;
    std::string extra;
    if (!(f >> node >> cls) || (f >> extra) || node < 0 || cls < 0) {
      std::ostringstream msg;
      msg << name << ":" << line_no << ": expected node<TAB>class, got '" << line << "'";
      throw InputError(msg.str());
    }
    out.emplace_back(static_cast<std::size_t>(node), static_cast<int>(cls));
  }
  return out;
}

std::vector<std::size_t> read_index_array(const nlohmann::json& j, const char* key,
                                          const std::string& name) {
  if (!j.contains(key)) throw InputError(name + ": missing key \"" + key + "\"");
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw InputError(name + ": \"" + key + "\" must be an array");
  std::vector<std::size_t> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw InputError(name + ": \"" + key + "\" must hold non-negative integers");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = graph.n_nodes();
  if (features.n_nodes() != n) {
    std::ostringstream msg;
    msg << "dataset: graph has " << n << " nodes but features have " << features.n_nodes() << " rows";
    throw InputError(msg.str());
  }
  if (labels.size() != n) throw InputError("dataset: label vector length differs from node count");
  if (n_classes < 1) throw InputError("dataset: no classes");
  std::vector<char> seen_class(n_classes, 0);
  for (int y : labels) {
    if (y >= n_classes || y < -1) throw InputError("dataset: label out of range");
    if (y >= 0) seen_class[y] = 1;
  }
  for (int k = 0; k < n_classes; ++k)
    if (!seen_class[k]) throw InputError("dataset: class " + std::to_string(k) + " has no nodes");

  std::vector<int> owner(n, -1);
  const std::pair<const char*, const std::vector<std::size_t>*> named[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (int s = 0; s < 3; ++s) {
    for (auto v : *named[s].second) {
      if (v >= n) {
        std::ostringstream msg;
        msg << "dataset: " << named[s].first << " split references node " << v << " (only " << n
            << " nodes)";
        throw InputError(msg.str());
      }
      if (owner[v] >= 0) {
        std::ostringstream msg;
        msg << "dataset: node " << v << " appears in both " << named[owner[v]].first << " and "
            << named[s].first << " splits";
        throw InputError(msg.str());
      }
      owner[v] = s;
      if (labels[v] < 0) {
        std::ostringstream msg;
        msg << "dataset: " << named[s].first << " split node " << v << " has no label";
        throw InputError(msg.str());
      }
    }
  }
}

std::uint64_t Dataset::fingerprint() const {
  detail::Fnv1a h;
  h.add(graph.fingerprint());
  h.add(features.fingerprint());
  h.add(static_cast<std::uint64_t>(n_classes));
  for (int y : labels) h.add(static_cast<std::uint64_t>(static_cast<std::int64_t>(y)));
  for (const auto* s : {&splits.train, &splits.val, &splits.test}) {
    h.add(static_cast<std::uint64_t>(s->size()));
    for (auto v : *s) h.add(static_cast<std::uint64_t>(v));
  }
  return h.value();
}

std::vector<LabelledNode> Dataset::labelled(std::span<const std::size_t> nodes) const {
  std::vector<LabelledNode> out;
  out.reserve(nodes.size());
  for (auto v : nodes) {
    if (v >= labels.size() || labels[v] < 0) throw InputError("node has no label");
    out.push_back({v, labels[v]});
  }
  return out;
}

const std::vector<std::size_t>& Dataset::split(const std::string& name) const {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw InputError("unknown split '" + name + "' (expected train, val or test)");
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
  const auto edges_path = dir / "graph.edges";
  const auto feat_path = dir / "features.sparse";
  const auto label_path = dir / "labels.tsv";
  const auto split_path = dir / "split.json";
  for (const auto& p : {edges_path, feat_path, label_path, split_path})
    if (!fs::exists(p)) throw InputError("missing dataset file: " + p.string());

  std::vector<Edge> edges;
  {
    auto in = open_input(edges_path);
    edges = read_edge_list(in, edges_path.string());
  }
  FeatureMatrix raw_features;
  {
    auto in = open_input(feat_path);
    raw_features = read_sparse_features(in, feat_path.string());
  }
  std::vector<std::pair<std::size_t, int>> label_pairs;
  {
    auto in = open_input(label_path);
    label_pairs = read_labels(in, label_path.string());
  }
  Splits splits;
  {
    auto in = open_input(split_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw InputError(split_path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw InputError(split_path.string() + ": expected a JSON object");
    splits.train = read_index_array(j, "train", split_path.string());
    splits.val = read_index_array(j, "val", split_path.string());
    splits.test = read_index_array(j, "test", split_path.string());
  }

  std::size_t n = raw_features.n_nodes();
  for (auto [u, v] : edges) n = std::max({n, u + 1, v + 1});
  for (auto [v, y] : label_pairs) n = std::max(n, v + 1);

  Dataset d;
  d.edge_lines = edges.size();
  d.graph = SparseGraph::from_edge_list(n, edges);
  if (raw_features.n_nodes() == n) {
    d.features = std::move(raw_features);
  } else {
    const auto t = raw_features.triplets();
    d.features = FeatureMatrix::from_triplets(n, raw_features.n_features(), t);
  }
  d.labels.assign(n, -1);
  int max_label = -1;
  for (auto [v, y] : label_pairs) {
    if (d.labels[v] >= 0 && d.labels[v] != y)
      throw InputError(label_path.string() + ": conflicting labels for node " + std::to_string(v));
    d.labels[v] = y;
    max_label = std::max(max_label, y);
  }
  d.n_classes = max_label + 1;
  d.splits = std::move(splits);
  d.validate();
  return d;
}

void write_dataset(const Dataset& d, const fs::path& dir) {
  d.validate();
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "graph.edges");
    write_edge_list(out, d.graph);
  }
  {
    auto out = open_output(dir / "features.sparse");
    write_sparse_features(out, d.features);
  }
  {
    auto out = open_output(dir / "labels.tsv");
    for (std::size_t v = 0; v < d.labels.size(); ++v)
      if (d.labels[v] >= 0) out << v << '\t' << d.labels[v] << '\n';
  }
  {
    nlohmann::json j;
    j["train"] = d.splits.train;
    j["val"] = d.splits.val;
    j["test"] = d.splits.test;
    auto out = open_output(dir / "split.json");
    out << j.dump() << '\n';
  }
}

Dataset restrict_to_component(const Dataset& d, const ComponentSubgraph& component) {
  Dataset out;
  out.graph = component.graph;
  const auto& keep = component.new_to_old;
  std::vector<FeatureTriplet> t;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto r = d.features.row(keep[i]);
    for (std::size_t k = 0; k < r.nnz(); ++k) t.push_back({i, r.indices[k], r.values[k]});
  }
  out.features = FeatureMatrix::from_triplets(keep.size(), d.features.n_features(), t);
  out.labels.reserve(keep.size());
  for (auto v : keep) out.labels.push_back(d.labels[v]);
  out.n_classes = d.n_classes;
  auto remap = [&](const std::vector<std::size_t>& s) {
    std::vector<std::size_t> r;
    for (auto v : s)
      if (component.old_to_new[v] >= 0) r.push_back(static_cast<std::size_t>(component.old_to_new[v]));
    return r;
  };
  out.splits = {remap(d.splits.train), remap(d.splits.val), remap(d.splits.test)};
  out.edge_lines = out.graph.n_edges();
  return out;
}

Dataset synth_sbm(const SbmParams& p) {
  if (p.n_blocks < 2) throw InputError("synth_sbm: need at least two blocks");
  if (p.n_per_block < 1) throw InputError("synth_sbm: n_per_block must be positive");
  if (!(p.p_out >= 0.0 && p.p_out < p.p_in && p.p_in <= 1.0))
    throw InputError("synth_sbm: need 0 <= p_out < p_in <= 1");
  if (!(p.noise >= 0.0 && p.noise <= 1.0)) throw InputError("synth_sbm: noise must lie in [0, 1]");
  if (p.d_per_block < 1) throw InputError("synth_sbm: d_per_block must be positive");
  if (p.train_per_block + p.val_per_block > p.n_per_block)
    throw InputError("synth_sbm: train + val per block exceeds block size");

  const std::size_t n = p.n_per_block * p.n_blocks;
  const std::size_t dim = p.d_per_block * p.n_blocks;
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const bool same = u / p.n_per_block == v / p.n_per_block;
      if (unif(rng) < (same ? p.p_in : p.p_out)) edges.emplace_back(u, v);
    }

  std::vector<FeatureTriplet> t;
  for (std::size_t u = 0; u < n; ++u) {
    const std::size_t b = u / p.n_per_block;
    for (std::size_t f = 0; f < dim; ++f) {
      const bool own = f / p.d_per_block == b;
      if (own || (p.noise > 0.0 && unif(rng) < p.noise)) t.push_back({u, f, 1.0});
    }
  }

  Dataset d;
  d.graph = SparseGraph::from_edge_list(n, edges);
  d.edge_lines = d.graph.n_edges();
  d.features = FeatureMatrix::from_triplets(n, dim, t);
  d.n_classes = static_cast<int>(p.n_blocks);
  d.labels.resize(n);
  for (std::size_t u = 0; u < n; ++u) d.labels[u] = static_cast<int>(u / p.n_per_block);

  std::vector<char> used(n, 0);
  for (std::size_t b = 0; b < p.n_blocks; ++b) {
    std::vector<std::size_t> members(p.n_per_block);
    for (std::size_t i = 0; i < p.n_per_block; ++i) members[i] = b * p.n_per_block + i;
    // Partial Fisher-Yates with an explicit draw so the result does not depend
    // on the standard library's shuffle.
    for (std::size_t i = 0; i < p.train_per_block + p.val_per_block; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(unif(rng) * static_cast<double>(members.size() - i));
      std::swap(members[i], members[std::min(j, members.size() - 1)]);
      (i < p.train_per_block ? d.splits.train : d.splits.val).push_back(members[i]);
      used[members[i]] = 1;
    }
  }
  for (std::size_t u = 0; u < n; ++u)
    if (!used[u]) d.splits.test.push_back(u);
  d.validate();
  return d;
}

}  // namespace ggp
