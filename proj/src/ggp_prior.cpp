#include "ggp/ggp_prior.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ggp/error.hpp"

namespace ggp {

namespace {

// Closed neighborhood {n} ∪ Ne(n) in ascending order.
std::vector<std::size_t> closed_neighborhood(const SparseGraph& g, std::size_t n) {
  auto nb = g.neighbors(n);
  std::vector<std::size_t> out;
  out.reserve(nb.size() + 1);
  bool placed = false;
  for (NodeIndex v : nb) {
    if (!placed && v > n) {
      out.push_back(n);
      placed = true;
    }
    out.push_back(v);
  }
  if (!placed) out.push_back(n);
  return out;
}

using SparseAccum = std::vector<std::pair<FeatureIndex, double>>;

SparseAccum averaged_row(const SparseGraph& g, const FeatureMatrix& x, std::size_t n) {
  SparseAccum acc;
  for (std::size_t j : closed_neighborhood(g, n)) {
    auto r = x.row(j);
    for (std::size_t k = 0; k < r.nnz(); ++k) acc.emplace_back(r.indices[k], r.values[k]);
  }
  std::stable_sort(acc.begin(), acc.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseAccum merged;
  for (const auto& [f, v] : acc) {
    if (!merged.empty() && merged.back().first == f)
      merged.back().second += v;
    else
      merged.emplace_back(f, v);
  }
  const double w = 1.0 / static_cast<double>(1 + g.degree(n));
  for (auto& e : merged) e.second *= w;
  return merged;
}

double accum_dot(const SparseAccum& a, const SparseAccum& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      s += a[i++].second * b[j++].second;
    }
  }
  return s;
}

}  // namespace

GgpPrior::GgpPrior(std::shared_ptr<const SparseGraph> graph,
                   std::shared_ptr<const FeatureMatrix> features, KernelSpec spec)
    : graph_(std::move(graph)), features_(std::move(features)), spec_(spec) {
  if (!graph_ || !features_) throw InputError("GgpPrior: null graph or features");
  if (graph_->n_nodes() != features_->n_nodes()) {
    std::ostringstream msg;
    msg << "GgpPrior: graph has " << graph_->n_nodes() << " nodes but features have "
        << features_->n_nodes() << " rows";
    throw InputError(msg.str());
  }
  spec_.validate();
}

GgpPrior::GgpPrior(const SparseGraph& graph, const FeatureMatrix& features, KernelSpec spec)
    : GgpPrior(std::make_shared<const SparseGraph>(graph),
               std::make_shared<const FeatureMatrix>(features), spec) {}

GgpPrior GgpPrior::with_spec(const KernelSpec& spec) const {
  return GgpPrior(graph_, features_, spec);
}

void GgpPrior::check_index(std::size_t n) const {
  if (n >= n_nodes()) {
    std::ostringstream msg;
    msg << "node index " << n << " out of range for " << n_nodes() << " nodes";
    throw InputError(msg.str());
  }
}

double GgpPrior::averaged_dot(std::size_t m, std::size_t n) const {
  return accum_dot(averaged_row(*graph_, *features_, m), averaged_row(*graph_, *features_, n));
}

Eigen::MatrixXd GgpPrior::cov_hh(std::span<const std::size_t> idx_a,
                                 std::span<const std::size_t> idx_b) const {
  for (auto n : idx_a) check_index(n);
  for (auto n : idx_b) check_index(n);
  Eigen::MatrixXd out(idx_a.size(), idx_b.size());

  if (spec_.family == KernelFamily::linear) {
    std::vector<SparseAccum> rows_b;
    rows_b.reserve(idx_b.size());
    for (auto n : idx_b) rows_b.push_back(averaged_row(*graph_, *features_, n));
    for (std::size_t i = 0; i < idx_a.size(); ++i) {
      const auto row_a = averaged_row(*graph_, *features_, idx_a[i]);
      for (std::size_t j = 0; j < idx_b.size(); ++j)
        out(i, j) = spec_.variance * accum_dot(row_a, rows_b[j]);
    }
    return out;
  }

  for (std::size_t i = 0; i < idx_a.size(); ++i) {
    const auto na = closed_neighborhood(*graph_, idx_a[i]);
    for (std::size_t j = 0; j < idx_b.size(); ++j) {
      const auto nb = closed_neighborhood(*graph_, idx_b[j]);
      double acc = 0.0;
      for (std::size_t p : na) {
        const auto xp = features_->row(p);
        for (std::size_t q : nb) acc += spec_.from_dot(sparse_dot(xp, features_->row(q)));
      }
      out(i, j) = acc / static_cast<double>(na.size() * nb.size());
    }
  }
  return out;
}

Eigen::VectorXd GgpPrior::cov_hh_diag(std::span<const std::size_t> idx) const {
  Eigen::VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const std::size_t n = idx[i];
    check_index(n);
    if (spec_.family == KernelFamily::linear) {
      const auto r = averaged_row(*graph_, *features_, n);
      out[i] = spec_.variance * accum_dot(r, r);
      continue;
    }
    const auto nb = closed_neighborhood(*graph_, n);
    double acc = 0.0;
    for (std::size_t p : nb) {
      const auto xp = features_->row(p);
      for (std::size_t q : nb) acc += spec_.from_dot(sparse_dot(xp, features_->row(q)));
    }
    out[i] = acc / static_cast<double>(nb.size() * nb.size());
  }
  return out;
}

Eigen::MatrixXd GgpPrior::cov_hu(std::span<const std::size_t> idx, const Eigen::MatrixXd& z) const {
  if (static_cast<std::size_t>(z.cols()) != features_->n_features()) {
    std::ostringstream msg;
    msg << "cov_hu: inducing inputs have " << z.cols() << " columns, features have "
        << features_->n_features();
    throw InputError(msg.str());
  }
  const Eigen::Index m_count = z.rows();
  Eigen::MatrixXd out(idx.size(), m_count);
  Eigen::VectorXd raw(m_count);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check_index(idx[i]);
    const auto nb = closed_neighborhood(*graph_, idx[i]);
    out.row(i).setZero();
    for (std::size_t p : nb) {
      const auto xp = features_->row(p);
      raw.setZero();
      for (std::size_t k = 0; k < xp.nnz(); ++k) raw += xp.values[k] * z.col(xp.indices[k]);
      for (Eigen::Index m = 0; m < m_count; ++m) out(i, m) += spec_.from_dot(raw[m]);
    }
    out.row(i) /= static_cast<double>(nb.size());
  }
  return out;
}

Eigen::MatrixXd GgpPrior::averaged_features(std::span<const std::size_t> idx) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(idx.size(), features_->n_features());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check_index(idx[i]);
    for (const auto& [f, v] : averaged_row(*graph_, *features_, idx[i])) out(i, f) = v;
  }
  return out;
}

Eigen::MatrixXd GgpPrior::spectral_transform() const {
  if (spec_.family != KernelFamily::linear)
    throw UnsupportedError("spectral_transform requires the linear kernel (explicit feature map)");
  const Eigen::MatrixXd phi = std::sqrt(spec_.variance) * features_->to_dense();
  Eigen::VectorXd deg(n_nodes());
  for (std::size_t n = 0; n < n_nodes(); ++n) deg[n] = static_cast<double>(graph_->degree(n));
  const Eigen::ArrayXd inv = 1.0 / (1.0 + deg.array());

  Eigen::MatrixXd out(phi.rows(), phi.cols());
  for (Eigen::Index c = 0; c < phi.cols(); ++c) {
    const Eigen::VectorXd col = phi.col(c);
    const Eigen::VectorXd filtered = col - laplacian_apply(*graph_, col);  // (I - L) phi
    out.col(c) = (inv * deg.array() * col.array() + inv * filtered.array()).matrix();
  }
  return out;
}

Eigen::MatrixXd cov_uu(const Eigen::MatrixXd& z, const KernelSpec& spec) {
  if (z.rows() < 1) throw InputError("cov_uu: need at least one inducing point");
  const Eigen::MatrixXd raw = z * z.transpose();
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j)
    for (Eigen::Index i = j; i < raw.rows(); ++i) out(i, j) = out(j, i) = spec.from_dot(raw(j, i));
  return out;
}

NeighborhoodBlock::NeighborhoodBlock(const GgpPrior& prior, std::span<const std::size_t> nodes)
    : features_(prior.features_handle()),
      nodes_(nodes.begin(), nodes.end()) {
  const auto& g = prior.graph();
  std::vector<std::vector<std::size_t>> hoods;
  hoods.reserve(nodes_.size());
  for (auto n : nodes_) {
    if (n >= g.n_nodes()) {
      std::ostringstream msg;
      msg << "node index " << n << " out of range for " << g.n_nodes() << " nodes";
      throw InputError(msg.str());
    }
    hoods.push_back(closed_neighborhood(g, n));
    support_.insert(support_.end(), hoods.back().begin(), hoods.back().end());
  }
  std::sort(support_.begin(), support_.end());
  support_.erase(std::unique(support_.begin(), support_.end()), support_.end());

  members_.resize(nodes_.size());
  weight_.resize(nodes_.size());
  self_dots_.resize(nodes_.size());
  for (std::size_t b = 0; b < nodes_.size(); ++b) {
    const auto& hood = hoods[b];
    weight_[b] = 1.0 / static_cast<double>(hood.size());
    for (auto j : hood)
      members_[b].push_back(static_cast<std::size_t>(
          std::lower_bound(support_.begin(), support_.end(), j) - support_.begin()));
    auto& dots = self_dots_[b];
    dots.reserve(hood.size() * (hood.size() + 1) / 2);
    for (std::size_t p = 0; p < hood.size(); ++p)
      for (std::size_t q = p; q < hood.size(); ++q)
        dots.push_back(sparse_dot(features_->row(hood[p]), features_->row(hood[q])));
  }
}

Eigen::VectorXd NeighborhoodBlock::khh_diag(const KernelSpec& spec) const {
  Eigen::VectorXd out(size());
  for (std::size_t b = 0; b < size(); ++b) {
    const std::size_t h = members_[b].size();
    const auto& dots = self_dots_[b];
    double acc = 0.0;
    std::size_t k = 0;
    for (std::size_t p = 0; p < h; ++p)
      for (std::size_t q = p; q < h; ++q, ++k)
        acc += (p == q ? 1.0 : 2.0) * spec.from_dot(dots[k]);
    out[b] = acc * weight_[b] * weight_[b];
  }
  return out;
}

void NeighborhoodBlock::khh_diag_grad(const KernelSpec& spec, const Eigen::VectorXd& g,
                                      double& d_variance, double& d_offset) const {
  for (std::size_t b = 0; b < size(); ++b) {
    const std::size_t h = members_[b].size();
    const auto& dots = self_dots_[b];
    double dv = 0.0, doff = 0.0;
    std::size_t k = 0;
    for (std::size_t p = 0; p < h; ++p)
      for (std::size_t q = p; q < h; ++q, ++k) {
        const double mult = p == q ? 1.0 : 2.0;
        dv += mult * spec.d_variance(dots[k]);
        doff += mult * spec.d_offset(dots[k]);
      }
    const double scale = g[b] * weight_[b] * weight_[b];
    d_variance += scale * dv;
    d_offset += scale * doff;
  }
}

Eigen::MatrixXd NeighborhoodBlock::raw_cross(const Eigen::MatrixXd& z) const {
  if (static_cast<std::size_t>(z.cols()) != features_->n_features())
    throw InputError("raw_cross: inducing inputs have the wrong number of columns");
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(z.rows(), support_.size());
  for (std::size_t p = 0; p < support_.size(); ++p) {
    const auto xp = features_->row(support_[p]);
    for (std::size_t k = 0; k < xp.nnz(); ++k) raw.col(p) += xp.values[k] * z.col(xp.indices[k]);
  }
  return raw;
}

Eigen::MatrixXd NeighborhoodBlock::kzh(const KernelSpec& spec, const Eigen::MatrixXd& raw) const {
  const Eigen::MatrixXd k = raw.unaryExpr([&](double s) { return spec.from_dot(s); });
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(raw.rows(), size());
  for (std::size_t b = 0; b < size(); ++b) {
    for (auto p : members_[b]) out.col(b) += k.col(p);
    out.col(b) *= weight_[b];
  }
  return out;
}

void NeighborhoodBlock::kzh_grad(const KernelSpec& spec, const Eigen::MatrixXd& raw,
                                 const Eigen::MatrixXd& kzh_bar, Eigen::MatrixXd& z_bar,
                                 double& d_variance, double& d_offset) const {
  // Upstream gradient spread over support columns: G = Kzh_bar W.
  Eigen::MatrixXd spread = Eigen::MatrixXd::Zero(raw.rows(), support_.size());
  for (std::size_t b = 0; b < size(); ++b)
    for (auto p : members_[b]) spread.col(p) += weight_[b] * kzh_bar.col(b);

  for (Eigen::Index p = 0; p < raw.cols(); ++p)
    for (Eigen::Index m = 0; m < raw.rows(); ++m) {
      const double s = raw(m, p);
      const double g = spread(m, p);
      d_variance += g * spec.d_variance(s);
      d_offset += g * spec.d_offset(s);
      spread(m, p) = g * spec.d_dot(s);
    }

  for (std::size_t p = 0; p < support_.size(); ++p) {
    const auto xp = features_->row(support_[p]);
    for (std::size_t k = 0; k < xp.nnz(); ++k) z_bar.col(xp.indices[k]) += xp.values[k] * spread.col(p);
  }
}

}  // namespace ggp
