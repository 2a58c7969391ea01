#include "ggp/active.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "ggp/error.hpp"

namespace ggp {

namespace {

std::vector<char> membership(std::size_t n, std::span<const std::size_t> nodes) {
  std::vector<char> in(n, 0);
  for (auto v : nodes) {
    if (v >= n) {
      std::ostringstream msg;
      msg << "node index " << v << " out of range for " << n << " nodes";
      throw InputError(msg.str());
    }
    in[v] = 1;
  }
  return in;
}

}  // namespace

SoptState sopt_init(const SparseGraph& g, std::span<const std::size_t> labelled, double delta) {
  if (labelled.empty()) throw InputError("sopt_init: labelled set is empty");
  if (delta < 0.0) throw InputError("sopt_init: delta must be non-negative");
  const auto is_labelled = membership(g.n_nodes(), labelled);

  SoptState state;
  std::vector<std::ptrdiff_t> pos(g.n_nodes(), -1);
  for (std::size_t v = 0; v < g.n_nodes(); ++v)
    if (!is_labelled[v]) {
      pos[v] = static_cast<std::ptrdiff_t>(state.unlabelled.size());
      state.unlabelled.push_back(v);
    }
  const auto n_u = static_cast<Eigen::Index>(state.unlabelled.size());
  if (n_u == 0) return state;

  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n_u, n_u);
  for (Eigen::Index i = 0; i < n_u; ++i) {
    const auto v = state.unlabelled[i];
    lap(i, i) = static_cast<double>(g.degree(v)) + delta;
    for (NodeIndex w : g.neighbors(v))
      if (pos[w] >= 0) lap(i, pos[w]) = -1.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(lap);
  if (llt.info() != Eigen::Success)
    throw InputError(
        "sopt_init: grounded Laplacian is singular; restrict the graph to its largest connected "
        "component");
  state.cov = llt.solve(Eigen::MatrixXd::Identity(n_u, n_u));
  state.cov = 0.5 * (state.cov + state.cov.transpose()).eval();
  for (Eigen::Index i = 0; i < n_u; ++i)
    if (!(state.cov(i, i) > 0.0))
      throw InputError("sopt_init: grounded Laplacian is singular; restrict the graph to its "
                       "largest connected component");
  return state;
}

std::size_t sopt_select(const SoptState& state) {
  if (state.empty()) throw StateError("sopt_select: no unlabelled nodes left");
  const Eigen::VectorXd colsum = state.cov.colwise().sum().transpose();
  Eigen::Index best = 0;
  double best_score = colsum[0] * colsum[0] / state.cov(0, 0);
  for (Eigen::Index i = 1; i < colsum.size(); ++i) {
    const double score = colsum[i] * colsum[i] / state.cov(i, i);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return state.unlabelled[best];
}

SoptState sopt_update(SoptState state, std::size_t v) {
  const auto it = std::lower_bound(state.unlabelled.begin(), state.unlabelled.end(), v);
  if (it == state.unlabelled.end() || *it != v) {
    std::ostringstream msg;
    msg << "sopt_update: node " << v << " is not in the unlabelled set";
    throw InputError(msg.str());
  }
  const auto j = static_cast<Eigen::Index>(it - state.unlabelled.begin());
  const auto n = static_cast<Eigen::Index>(state.unlabelled.size());
  const Eigen::VectorXd c = state.cov.col(j);
  state.cov.noalias() -= (c / c[j]) * c.transpose();

  Eigen::MatrixXd shrunk(n - 1, n - 1);
  const Eigen::Index tail = n - 1 - j;
  shrunk.topLeftCorner(j, j) = state.cov.topLeftCorner(j, j);
  shrunk.topRightCorner(j, tail) = state.cov.topRightCorner(j, tail);
  shrunk.bottomLeftCorner(tail, j) = state.cov.bottomLeftCorner(tail, j);
  shrunk.bottomRightCorner(tail, tail) = state.cov.bottomRightCorner(tail, tail);
  state.cov = std::move(shrunk);
  state.unlabelled.erase(it);
  return state;
}

LabelPropagation lp_predict(const SparseGraph& g, std::span<const LabelledNode> labels,
                            int n_classes) {
  if (labels.empty()) throw InputError("lp_predict: no labelled nodes");
  if (n_classes < 1) throw InputError("lp_predict: need at least one class");
  const std::size_t n = g.n_nodes();
  std::vector<int> label_of(n, -1);
  for (const auto& l : labels) {
    if (l.node >= n) throw InputError("lp_predict: labelled node out of range");
    if (l.label < 0 || l.label >= n_classes) throw InputError("lp_predict: label out of range");
    label_of[l.node] = l.label;
  }

  LabelPropagation out;
  out.scores = Eigen::MatrixXd::Zero(n, n_classes);
  std::vector<std::ptrdiff_t> pos(n, -1);
  std::vector<std::size_t> unl;
  for (std::size_t v = 0; v < n; ++v) {
    if (label_of[v] >= 0) {
      out.scores(v, label_of[v]) = 1.0;
    } else {
      pos[v] = static_cast<std::ptrdiff_t>(unl.size());
      unl.push_back(v);
    }
  }

  if (!unl.empty()) {
    const auto n_u = static_cast<Eigen::Index>(unl.size());
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n_u, n_classes);
    for (Eigen::Index i = 0; i < n_u; ++i) {
      const auto v = unl[i];
      trip.emplace_back(i, i, static_cast<double>(g.degree(v)));
      for (NodeIndex w : g.neighbors(v)) {
        if (pos[w] >= 0)
          trip.emplace_back(i, pos[w], -1.0);
        else
          rhs(i, label_of[w]) += 1.0;
      }
    }
    Eigen::SparseMatrix<double> lap(n_u, n_u);
    lap.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(lap);
    bool ok = solver.info() == Eigen::Success;
    if (ok) {
      const auto& d = solver.vectorD();
      for (Eigen::Index i = 0; i < d.size(); ++i) ok = ok && d[i] > 0.0;
    }
    if (!ok)
      throw InputError("lp_predict: grounded Laplacian is singular (an unlabelled component has no "
                       "labelled node)");
    const Eigen::MatrixXd f = solver.solve(rhs);
    for (Eigen::Index i = 0; i < n_u; ++i) out.scores.row(unl[i]) = f.row(i);
  }
  out.predictions = argmax_rows(out.scores);
  return out;
}

double alc(const LearningCurve& curve) {
  if (curve.points.empty()) throw InputError("alc: empty learning curve");
  double s = 0.0;
  for (const auto& p : curve.points) s += p.test_accuracy;
  return s / static_cast<double>(curve.points.size());
}

ActiveRun active_run(const SparseGraph& g, std::span<const int> truth, int n_classes,
                     const NodeClassifier& model, const ActiveLoopConfig& config,
                     std::uint64_t seed) {
  const std::size_t n = g.n_nodes();
  if (truth.size() != n) throw InputError("active_run: need a label for every node");
  if (config.budget < 1) throw InputError("active_run: budget must be at least 1");
  if (config.budget > n) throw InputError("active_run: budget exceeds the number of nodes");

  std::mt19937_64 rng(seed);
  ActiveRun run{seed, {}, {}};
  std::vector<char> is_labelled(n, 0);
  std::vector<LabelledNode> labels;

  const std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  auto acquire = [&](std::size_t v) {
    is_labelled[v] = 1;
    labels.push_back({v, truth[v]});
    run.queried.push_back(v);
  };
  acquire(first);

  SoptState sopt;
  if (config.acquisition == Acquisition::sopt) {
    const std::size_t init[] = {first};
    sopt = sopt_init(g, init, config.sopt_delta);
  }

  for (std::size_t t = 1; t <= config.budget; ++t) {
    const std::vector<int> pred = model(labels);
    if (pred.size() != n) throw InputError("active_run: classifier returned the wrong number of predictions");
    std::size_t correct = 0, total = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (is_labelled[v]) continue;
      ++total;
      if (pred[v] == truth[v]) ++correct;
    }
    const double acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
    run.curve.points.push_back({t, acc});
    if (t == config.budget) break;

    std::size_t next;
    if (config.acquisition == Acquisition::sopt) {
      next = sopt_select(sopt);
      sopt = sopt_update(std::move(sopt), next);
    } else {
      std::vector<std::size_t> pool;
      pool.reserve(n - labels.size());
      for (std::size_t v = 0; v < n; ++v)
        if (!is_labelled[v]) pool.push_back(v);
      next = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    }
    acquire(next);
  }
  (void)n_classes;
  return run;
}

std::vector<ActiveRun> active_loop(const SparseGraph& g, std::span<const int> truth, int n_classes,
                                   const NodeClassifier& model, const ActiveLoopConfig& config,
                                   std::span<const std::uint64_t> seeds) {
  std::vector<ActiveRun> runs;
  runs.reserve(seeds.size());
  for (auto s : seeds) runs.push_back(active_run(g, truth, n_classes, model, config, s));
  return runs;
}

}  // namespace ggp
