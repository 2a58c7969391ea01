#include "ggp/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ggp/error.hpp"
#include "hash.hpp"

namespace ggp {

FeatureMatrix FeatureMatrix::from_triplets(std::size_t n_nodes, std::size_t n_features,
                                           std::span<const FeatureTriplet> triplets) {
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = triplets[a];
    const auto& tb = triplets[b];
    return std::tie(ta.node, ta.feature) < std::tie(tb.node, tb.feature);
  });

  FeatureMatrix x;
  x.n_features_ = n_features;
  x.row_ptr_.assign(n_nodes + 1, 0);
  const FeatureTriplet* prev = nullptr;
  for (std::size_t i : order) {
    const auto& t = triplets[i];
    if (t.node >= n_nodes || t.feature >= n_features) {
      std::ostringstream msg;
      msg << "feature entry (" << t.node << ", " << t.feature << ") out of range for shape "
          << n_nodes << "x" << n_features;
      throw InputError(msg.str());
    }
    if (!std::isfinite(t.value)) {
      std::ostringstream msg;
      msg << "feature entry (" << t.node << ", " << t.feature << ") is not finite";
      throw InputError(msg.str());
    }
    if (prev && prev->node == t.node && prev->feature == t.feature) {
      std::ostringstream msg;
      msg << "duplicate feature entry (" << t.node << ", " << t.feature << ")";
      throw InputError(msg.str());
    }
    prev = &t;
    if (t.value == 0.0) continue;
    x.indices_.push_back(static_cast<FeatureIndex>(t.feature));
    x.values_.push_back(t.value);
    ++x.row_ptr_[t.node + 1];
  }
  std::partial_sum(x.row_ptr_.begin(), x.row_ptr_.end(), x.row_ptr_.begin());
  return x;
}

FeatureMatrix FeatureMatrix::from_dense(const Eigen::MatrixXd& dense) {
  std::vector<FeatureTriplet> t;
  for (Eigen::Index i = 0; i < dense.rows(); ++i)
    for (Eigen::Index j = 0; j < dense.cols(); ++j)
      if (dense(i, j) != 0.0)
        t.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), dense(i, j)});
  return from_triplets(dense.rows(), dense.cols(), t);
}

Eigen::MatrixXd FeatureMatrix::to_dense() const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n_nodes(), n_features_);
  for (std::size_t n = 0; n < n_nodes(); ++n) {
    auto r = row(n);
    for (std::size_t k = 0; k < r.nnz(); ++k) out(n, r.indices[k]) = r.values[k];
  }
  return out;
}

std::vector<FeatureTriplet> FeatureMatrix::triplets() const {
  std::vector<FeatureTriplet> out;
  out.reserve(nnz());
  for (std::size_t n = 0; n < n_nodes(); ++n) {
    auto r = row(n);
    for (std::size_t k = 0; k < r.nnz(); ++k) out.push_back({n, r.indices[k], r.values[k]});
  }
  return out;
}

std::uint64_t FeatureMatrix::fingerprint() const {
  detail::Fnv1a h;
  h.add(static_cast<std::uint64_t>(n_nodes()));
  h.add(static_cast<std::uint64_t>(n_features_));
  for (auto p : row_ptr_) h.add(static_cast<std::uint64_t>(p));
  for (auto i : indices_) h.add(static_cast<std::uint64_t>(i));
  for (auto v : values_) h.add(v);
  return h.value();
}

FeatureMatrix tfidf_transform(const FeatureMatrix& x, bool l2_normalize) {
  const std::size_t n = x.n_nodes();
  std::vector<std::size_t> df(x.n_features(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    for (std::size_t k = 0; k < r.nnz(); ++k) {
      if (r.values[k] < 0.0) {
        std::ostringstream msg;
        msg << "tfidf: negative value at (" << i << ", " << r.indices[k] << ")";
        throw InputError(msg.str());
      }
      ++df[r.indices[k]];
    }
  }
  std::vector<double> idf(x.n_features());
  for (std::size_t t = 0; t < idf.size(); ++t)
    idf[t] = std::log((1.0 + static_cast<double>(n)) / (1.0 + static_cast<double>(df[t]))) + 1.0;

  std::vector<FeatureTriplet> out;
  out.reserve(x.nnz());
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    const std::size_t start = out.size();
    double sq = 0.0;
    for (std::size_t k = 0; k < r.nnz(); ++k) {
      const double w = r.values[k] * idf[r.indices[k]];
      out.push_back({i, r.indices[k], w});
      sq += w * w;
    }
    if (l2_normalize && sq > 0.0) {
      const double norm = std::sqrt(sq);
      for (std::size_t k = start; k < out.size(); ++k) out[k].value /= norm;
    }
  }
  return FeatureMatrix::from_triplets(n, x.n_features(), out);
}

KernelSpec KernelSpec::linear(double variance) {
  KernelSpec s{KernelFamily::linear, variance, 0.0, 1};
  s.validate();
  return s;
}

KernelSpec KernelSpec::polynomial(double variance, double offset) {
  KernelSpec s{KernelFamily::polynomial, variance, offset, 3};
  s.validate();
  return s;
}

void KernelSpec::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw InputError("kernel variance must be positive and finite");
  if (!(offset >= 0.0) || !std::isfinite(offset))
    throw InputError("kernel offset must be non-negative and finite");
  if (family == KernelFamily::polynomial && degree != 3)
    throw InputError("polynomial kernel degree is fixed at 3");
}

std::string to_string(KernelFamily family) {
  return family == KernelFamily::linear ? "linear" : "poly3";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "linear") return KernelFamily::linear;
  if (name == "poly3" || name == "polynomial") return KernelFamily::polynomial;
  throw InputError("unknown kernel family '" + name + "' (expected linear or poly3)");
}

double sparse_dot(const SparseRow& a, const SparseRow& b) {
  if (a.dim != b.dim) throw InputError("sparse_dot: dimension mismatch");
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.nnz() && j < b.nnz()) {
    if (a.indices[i] < b.indices[j]) {
      ++i;
    } else if (b.indices[j] < a.indices[i]) {
      ++j;
    } else {
      acc += a.values[i++] * b.values[j++];
    }
  }
  return acc;
}

double sparse_dense_dot(const SparseRow& a, const Eigen::Ref<const Eigen::VectorXd>& z) {
  if (a.dim != static_cast<std::size_t>(z.size()))
    throw InputError("sparse_dense_dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.nnz(); ++k) acc += a.values[k] * z[a.indices[k]];
  return acc;
}

double base_kernel(const SparseRow& x, const SparseRow& z, const KernelSpec& spec) {
  return spec.from_dot(sparse_dot(x, z));
}

double base_kernel(const SparseRow& x, const Eigen::Ref<const Eigen::VectorXd>& z,
                   const KernelSpec& spec) {
  return spec.from_dot(sparse_dense_dot(x, z));
}

namespace {

[[noreturn]] void bad_line(const std::string& source, std::size_t line_no, const std::string& line,
                           const char* why) {
  std::ostringstream msg;
  msg << source << ":" << line_no << ": " << why << ": '" << line << "'";
  throw InputError(msg.str());
}

}  // namespace

FeatureMatrix read_sparse_features(std::istream& in, const std::string& source_name) {
  std::vector<FeatureTriplet> triplets;
  std::size_t n_nodes = 0, n_features = 0;
  bool have_shape = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    if (line[first] == '#') {
      std::istringstream hdr(line.substr(first + 1));
      std::string key;
      if (hdr >> key && key == "shape") {
        long long a = -1, b = -1;
        if (!(hdr >> a >> b) || a < 0 || b < 0) bad_line(source_name, line_no, line, "bad shape header");
        n_nodes = static_cast<std::size_t>(a);
        n_features = static_cast<std::size_t>(b);
        have_shape = true;
      }
      continue;
    }
    std::istringstream fields(line);
    long long node = -1, feat = -1;
    std::string value_text, extra;
    if (!(fields >> node >> feat >> value_text) || (fields >> extra) || node < 0 || feat < 0)
      bad_line(source_name, line_no, line, "expected node, feature, value");
    double value = 0.0;
    auto [ptr, ec] =
        std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
    if (ec != std::errc{} || ptr != value_text.data() + value_text.size())
      bad_line(source_name, line_no, line, "unparseable value");
    triplets.push_back({static_cast<std::size_t>(node), static_cast<std::size_t>(feat), value});
  }
  if (!have_shape) {
    for (const auto& t : triplets) {
      n_nodes = std::max(n_nodes, t.node + 1);
      n_features = std::max(n_features, t.feature + 1);
    }
  }
  return FeatureMatrix::from_triplets(n_nodes, n_features, triplets);
}

void write_sparse_features(std::ostream& out, const FeatureMatrix& x) {
  out << "# shape " << x.n_nodes() << ' ' << x.n_features() << '\n';
  char buf[64];
  for (const auto& t : x.triplets()) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, t.value);
    out << t.node << '\t' << t.feature << '\t' << std::string_view(buf, ptr - buf) << '\n';
  }
}

}  // namespace ggp
