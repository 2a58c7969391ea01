#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ggp/graph.hpp"
#include "ggp/svgp.hpp"

namespace ggp {

/// Covariance of the Gaussian random field grounded at the labelled nodes:
/// C = (L_UU + delta I)^-1 over the unlabelled set U (ascending node order).
struct SoptState {
  std::vector<std::size_t> unlabelled;
  Eigen::MatrixXd cov;

  bool empty() const noexcept { return unlabelled.empty(); }
};

/// Throws InputError when L_UU + delta I is not positive definite (the graph
/// is disconnected; restrict it with largest_connected_component first).
SoptState sopt_init(const SparseGraph& g, std::span<const std::size_t> labelled, double delta = 0.0);

/// argmax_v (sum_u C[u, v])^2 / C[v, v]; ties go to the smallest node index.
std::size_t sopt_select(const SoptState& state);

/// Conditions on node v (rank-1 downdate) and removes it from U.
SoptState sopt_update(SoptState state, std::size_t v);

struct LabelPropagation {
  Eigen::MatrixXd scores;          // n_nodes x K harmonic solution; labelled rows one-hot
  std::vector<int> predictions;    // row argmax, lowest class on ties
};

/// Harmonic-function label propagation: L_UU F_U = A_UL Y_L.
LabelPropagation lp_predict(const SparseGraph& g, std::span<const LabelledNode> labels,
                            int n_classes);

struct CurvePoint {
  std::size_t labels_acquired;
  double test_accuracy;
};

struct LearningCurve {
  std::vector<CurvePoint> points;
};

/// Mean accuracy over the curve's evaluation points (unit spacing), so a
/// perfect learner scores 1.
double alc(const LearningCurve& curve);

enum class Acquisition { sopt, rand };

/// Trains on the given labels and returns a predicted class for every node.
using NodeClassifier =
    std::function<std::vector<int>(std::span<const LabelledNode> labels)>;

struct ActiveLoopConfig {
  Acquisition acquisition = Acquisition::sopt;
  std::size_t budget = 50;
  double sopt_delta = 0.0;
};

struct ActiveRun {
  std::uint64_t seed;
  LearningCurve curve;
  std::vector<std::size_t> queried;  // initial node first
};

/// One seeded run: draw the initial node uniformly, then alternate retrain,
/// evaluate on all currently unlabelled nodes, acquire. `truth` holds the
/// label of every node in g.
ActiveRun active_run(const SparseGraph& g, std::span<const int> truth, int n_classes,
                     const NodeClassifier& model, const ActiveLoopConfig& config,
                     std::uint64_t seed);

std::vector<ActiveRun> active_loop(const SparseGraph& g, std::span<const int> truth, int n_classes,
                                   const NodeClassifier& model, const ActiveLoopConfig& config,
                                   std::span<const std::uint64_t> seeds);

}  // namespace ggp
