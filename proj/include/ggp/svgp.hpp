#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ggp/ggp_prior.hpp"

namespace ggp {

/// Gauss-Hermite rule rescaled to the standard normal: for X ~ N(0, 1),
/// E[g(X)] ≈ sum_i weights[i] * g(abscissae[i]); the weights sum to one.
class GaussHermite {
 public:
  explicit GaussHermite(int n_points = 20);

  int size() const noexcept { return static_cast<int>(abscissae_.size()); }
  std::span<const double> abscissae() const noexcept { return abscissae_; }
  std::span<const double> weights() const noexcept { return weights_; }

 private:
  std::vector<double> abscissae_;
  std::vector<double> weights_;
};

/// p(y = k | f) = 1 - epsilon if k = argmax_j f_j, else epsilon / (K - 1).
struct RobustMax {
  int n_classes = 2;
  double epsilon = 1e-3;

  void validate() const;
  double log_correct() const;
  double log_incorrect() const;
};

/// Whitened variational state: u = L_z v, q(v_k) = N(m_k, S_k S_k^T).
/// Inducing inputs are shared across the K latent functions.
struct VariationalState {
  Eigen::MatrixXd z;                   // M x n_features
  Eigen::MatrixXd mean;                // M x K, column k is m_k
  std::vector<Eigen::MatrixXd> scale;  // K lower-triangular M x M, positive diagonal

  std::size_t n_inducing() const noexcept { return static_cast<std::size_t>(z.rows()); }
  std::size_t n_classes() const noexcept { return scale.size(); }

  /// m_k = 0 and S_k = I, so q(u) equals the prior.
  static VariationalState at_prior(Eigen::MatrixXd z, int n_classes);
  void validate() const;

  friend bool operator==(const VariationalState&, const VariationalState&) = default;
};

struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;           // absolute value added to the diagonal
  double relative_jitter = 0.0;  // jitter / mean(diag)
};

/// Cholesky of K + jitter I with jitter = r * mean(diag K), r stepping
/// 1e-6, 1e-5, ..., 1e-2. Throws NumericalError listing the attempted ladder.
JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& k);

inline constexpr double kBaseRelativeJitter = 1e-6;

/// Per-node, per-class moments of q(h). Rows are nodes, columns classes.
struct Marginals {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd var;
};

/// Marginals from precomputed blocks: A = L_z^-1 K_zh, mean = A^T m_k,
/// var = k_hh - |a|^2 + |S_k^T a|^2.
Marginals marginals_from_blocks(const Eigen::MatrixXd& chol_lower, const Eigen::MatrixXd& kzh,
                                const Eigen::VectorXd& khh, const VariationalState& state);

Marginals marginal_q(const GgpPrior& prior, const VariationalState& state,
                     std::span<const std::size_t> idx);

/// Sum_k KL(N(m_k, S_k S_k^T) || N(0, I)).
double kl_term(const VariationalState& state);

/// P(f_y is the largest) for independent f_k ~ N(means[k], vars[k]),
/// by Gauss-Hermite quadrature over f_y.
double prob_max(const Eigen::VectorXd& means, const Eigen::VectorXd& vars, int y,
                const GaussHermite& quad);

/// prob_max together with its gradient wrt means and vars (of the quadrature
/// sum itself, so finite differences agree to round-off).
double prob_max_grad(const Eigen::VectorXd& means, const Eigen::VectorXd& vars, int y,
                     const GaussHermite& quad, Eigen::VectorXd& d_means, Eigen::VectorXd& d_vars);

/// E_q[log p(y | f)] under the robust-max likelihood.
double expected_loglik(const Eigen::VectorXd& means, const Eigen::VectorXd& vars, int y,
                       const RobustMax& lik, const GaussHermite& quad);

struct LabelledNode {
  std::size_t node;
  int label;
};

double elbo(const GgpPrior& prior, const VariationalState& state,
            std::span<const LabelledNode> labels, const RobustMax& lik, const GaussHermite& quad);

/// Class probabilities per node (rows sum to one). The per-class "is largest"
/// probabilities are renormalized before mixing with epsilon so quadrature
/// error cannot leak into the row sums.
Eigen::MatrixXd predict_proba(const GgpPrior& prior, const VariationalState& state,
                              const RobustMax& lik, const GaussHermite& quad,
                              std::span<const std::size_t> idx);
Eigen::MatrixXd predict_proba_from_marginals(const Marginals& q, const RobustMax& lik,
                                             const GaussHermite& quad);

/// Row-wise argmax, lowest class index on ties.
std::vector<int> argmax_rows(const Eigen::MatrixXd& probs);

}  // namespace ggp
