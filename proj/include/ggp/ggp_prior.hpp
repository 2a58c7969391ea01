#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ggp/features.hpp"
#include "ggp/graph.hpp"

namespace ggp {

/// Covariance structure of the graph GP: h_n is the mean of a base GP f over
/// the closed 1-hop neighborhood of n, so Cov(h) = P K_XX P^T with
/// P = (I + D)^-1 (I + A). Only requested blocks are ever materialized.
class GgpPrior {
 public:
  GgpPrior(std::shared_ptr<const SparseGraph> graph, std::shared_ptr<const FeatureMatrix> features,
           KernelSpec spec);
  GgpPrior(const SparseGraph& graph, const FeatureMatrix& features, KernelSpec spec);

  const SparseGraph& graph() const noexcept { return *graph_; }
  const FeatureMatrix& features() const noexcept { return *features_; }
  std::shared_ptr<const FeatureMatrix> features_handle() const noexcept { return features_; }
  const KernelSpec& spec() const noexcept { return spec_; }
  std::size_t n_nodes() const noexcept { return graph_->n_nodes(); }

  /// Same graph and features, different hyperparameters. Shares storage.
  GgpPrior with_spec(const KernelSpec& spec) const;

  /// Cov(h_a, h_b). The linear family goes through averaged feature rows
  /// (one dot product per entry); the polynomial family sums the base kernel
  /// over both closed neighborhoods.
  Eigen::MatrixXd cov_hh(std::span<const std::size_t> idx_a,
                         std::span<const std::size_t> idx_b) const;
  Eigen::VectorXd cov_hh_diag(std::span<const std::size_t> idx) const;

  /// Inter-domain covariance Cov(h_n, f(z_m)), |idx| x M. Z is M x n_features.
  Eigen::MatrixXd cov_hu(std::span<const std::size_t> idx, const Eigen::MatrixXd& z) const;

  /// Dense mean-embedding rows (1 + D_n)^-1 sum_{j in n ∪ Ne(n)} x_j, |idx| x n_features.
  Eigen::MatrixXd averaged_features(std::span<const std::size_t> idx) const;

  /// Filtered explicit feature maps (I+D)^-1 D Phi + (I+D)^-1 (I - L) Phi with
  /// Phi = sqrt(variance) X. Linear family only; throws UnsupportedError otherwise.
  Eigen::MatrixXd spectral_transform() const;

 private:
  void check_index(std::size_t n) const;
  double averaged_dot(std::size_t m, std::size_t n) const;

  std::shared_ptr<const SparseGraph> graph_;
  std::shared_ptr<const FeatureMatrix> features_;
  KernelSpec spec_;
};

/// Gram matrix of the base kernel on the rows of Z.
Eigen::MatrixXd cov_uu(const Eigen::MatrixXd& z, const KernelSpec& spec);

/// Raw-inner-product tables for a fixed node set (the labelled nodes during
/// training). Kernel blocks for any hyperparameters are elementwise transforms
/// of these tables, so node-node dot products are computed once per run.
class NeighborhoodBlock {
 public:
  NeighborhoodBlock(const GgpPrior& prior, std::span<const std::size_t> nodes);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const std::size_t> nodes() const noexcept { return nodes_; }
  /// Union of the closed neighborhoods, ascending.
  std::span<const std::size_t> support() const noexcept { return support_; }

  Eigen::VectorXd khh_diag(const KernelSpec& spec) const;
  /// Adds sum_b g[b] * d khh[b] / d(variance, offset) into d_variance / d_offset.
  void khh_diag_grad(const KernelSpec& spec, const Eigen::VectorXd& g, double& d_variance,
                     double& d_offset) const;

  /// R = Z X_support^T, M x |support|.
  Eigen::MatrixXd raw_cross(const Eigen::MatrixXd& z) const;
  /// K_zh, M x size(): column b averages k over the closed neighborhood of node b.
  Eigen::MatrixXd kzh(const KernelSpec& spec, const Eigen::MatrixXd& raw) const;
  /// Backpropagates an upstream gradient on K_zh into Z and the hyperparameters.
  void kzh_grad(const KernelSpec& spec, const Eigen::MatrixXd& raw, const Eigen::MatrixXd& kzh_bar,
                Eigen::MatrixXd& z_bar, double& d_variance, double& d_offset) const;

 private:
  std::shared_ptr<const FeatureMatrix> features_;
  std::vector<std::size_t> nodes_;
  std::vector<std::size_t> support_;
  // Per node: positions in support_ of its closed neighborhood, and 1/(1+D_n).
  std::vector<std::vector<std::size_t>> members_;
  std::vector<double> weight_;
  // Per node: upper triangle (row-major, including diagonal) of raw dots
  // among its closed neighborhood.
  std::vector<std::vector<double>> self_dots_;
};

}  // namespace ggp
