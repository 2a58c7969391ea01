#include "ggp/svgp.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "ggp/error.hpp"

namespace ggp {

namespace {

constexpr double kVarianceFloor = 1e-12;

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

GaussHermite::GaussHermite(int n_points) {
  if (n_points < 1) throw InputError("Gauss-Hermite rule needs at least one point");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n_points, n_points);
  for (int i = 1; i < n_points; ++i) jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(double(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  abscissae_.resize(n_points);
  weights_.resize(n_points);
  for (int i = 0; i < n_points; ++i) {
    abscissae_[i] = eig.eigenvalues()[i];
    const double v = eig.eigenvectors()(0, i);
    weights_[i] = v * v;
  }
  // Symmetrize: the rule is exactly symmetric about zero.
  for (int i = 0; i < n_points / 2; ++i) {
    const int j = n_points - 1 - i;
    const double x = 0.5 * (abscissae_[j] - abscissae_[i]);
    const double w = 0.5 * (weights_[i] + weights_[j]);
    abscissae_[i] = -x;
    abscissae_[j] = x;
    weights_[i] = weights_[j] = w;
  }
  if (n_points % 2 == 1) abscissae_[n_points / 2] = 0.0;
}

void RobustMax::validate() const {
  if (n_classes < 2) throw InputError("robust-max needs at least two classes");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InputError("robust-max epsilon must lie in (0, 1)");
  if (!(epsilon < static_cast<double>(n_classes - 1) / n_classes))
    throw InputError("robust-max epsilon must be below (K-1)/K");
}

double RobustMax::log_correct() const { return std::log1p(-epsilon); }
double RobustMax::log_incorrect() const { return std::log(epsilon / (n_classes - 1)); }

VariationalState VariationalState::at_prior(Eigen::MatrixXd z, int n_classes) {
  VariationalState s;
  const auto m = z.rows();
  s.z = std::move(z);
  s.mean = Eigen::MatrixXd::Zero(m, n_classes);
  s.scale.assign(n_classes, Eigen::MatrixXd::Identity(m, m));
  return s;
}

void VariationalState::validate() const {
  const auto m = z.rows();
  if (m < 1) throw InputError("variational state needs at least one inducing point");
  if (mean.rows() != m || mean.cols() != static_cast<Eigen::Index>(scale.size()))
    throw InputError("variational mean has the wrong shape");
  if (!z.allFinite() || !mean.allFinite()) throw InputError("variational state has non-finite entries");
  for (const auto& s : scale) {
    if (s.rows() != m || s.cols() != m) throw InputError("variational scale has the wrong shape");
    if (!s.allFinite()) throw InputError("variational scale has non-finite entries");
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!(s(i, i) > 0.0)) throw InputError("variational scale diagonal must be positive");
      for (Eigen::Index j = i + 1; j < m; ++j)
        if (s(i, j) != 0.0) throw InputError("variational scale must be lower-triangular");
    }
  }
}

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& k) {
  const double mean_diag = k.diagonal().mean();
  const double base = mean_diag > 0.0 ? mean_diag : 1.0;
  std::vector<double> ladder;
  for (double rel = kBaseRelativeJitter; rel <= 1e-2 * 1.0000001; rel *= 10.0) {
    const double jitter = rel * base;
    ladder.push_back(jitter);
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
      return {llt.matrixL(), jitter, rel};
  }
  std::ostringstream msg;
  msg << "Cholesky of inducing-point covariance failed; jitter tried:";
  for (double j : ladder) msg << ' ' << j;
  throw NumericalError(msg.str(), ladder);
}

Marginals marginals_from_blocks(const Eigen::MatrixXd& chol_lower, const Eigen::MatrixXd& kzh,
                                const Eigen::VectorXd& khh, const VariationalState& state) {
  const auto n = kzh.cols();
  const auto k_count = static_cast<Eigen::Index>(state.n_classes());
  const Eigen::MatrixXd a = chol_lower.triangularView<Eigen::Lower>().solve(kzh);
  const Eigen::VectorXd a_sq = a.colwise().squaredNorm().transpose();

  Marginals q;
  q.mean = a.transpose() * state.mean;
  q.var.resize(n, k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const Eigen::MatrixXd sta =
        state.scale[k].triangularView<Eigen::Lower>().transpose() * a;
    q.var.col(k) = khh - a_sq + sta.colwise().squaredNorm().transpose();
  }
  q.var = q.var.cwiseMax(kVarianceFloor);
  return q;
}

Marginals marginal_q(const GgpPrior& prior, const VariationalState& state,
                     std::span<const std::size_t> idx) {
  const auto chol = cholesky_with_jitter(cov_uu(state.z, prior.spec()));
  const Eigen::MatrixXd kzh = prior.cov_hu(idx, state.z).transpose();
  return marginals_from_blocks(chol.lower, kzh, prior.cov_hh_diag(idx), state);
}

double kl_term(const VariationalState& state) {
  const double m = static_cast<double>(state.n_inducing());
  double kl = 0.0;
  for (std::size_t k = 0; k < state.n_classes(); ++k) {
    const auto& s = state.scale[k];
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) logdet += std::log(s(i, i));
    kl += 0.5 * (state.mean.col(k).squaredNorm() + s.triangularView<Eigen::Lower>().toDenseMatrix().squaredNorm() - m -
                 2.0 * logdet);
  }
  return kl;
}

double prob_max_grad(const Eigen::VectorXd& means, const Eigen::VectorXd& vars, int y,
                     const GaussHermite& quad, Eigen::VectorXd& d_means, Eigen::VectorXd& d_vars) {
  const auto k_count = means.size();
  if (vars.size() != k_count) throw InputError("prob_max: means and vars differ in length");
  if (y < 0 || y >= k_count) throw InputError("prob_max: class index out of range");
  for (Eigen::Index k = 0; k < k_count; ++k)
    if (!(vars[k] > 0.0)) throw InputError("prob_max: variances must be positive");

  const Eigen::ArrayXd sd = vars.array().sqrt();
  d_means = Eigen::VectorXd::Zero(k_count);
  Eigen::VectorXd d_sd = Eigen::VectorXd::Zero(k_count);
  const auto t = quad.abscissae();
  const auto w = quad.weights();

  std::vector<double> c(k_count), cdf(k_count), prefix(k_count + 1), suffix(k_count + 1);
  double p = 0.0;
  for (int i = 0; i < quad.size(); ++i) {
    const double fy = means[y] + sd[y] * t[i];
    for (Eigen::Index j = 0; j < k_count; ++j) {
      if (j == y) {
        cdf[j] = 1.0;
        continue;
      }
      c[j] = (fy - means[j]) / sd[j];
      cdf[j] = norm_cdf(c[j]);
    }
    prefix[0] = 1.0;
    for (Eigen::Index j = 0; j < k_count; ++j) prefix[j + 1] = prefix[j] * cdf[j];
    suffix[k_count] = 1.0;
    for (Eigen::Index j = k_count; j-- > 0;) suffix[j] = suffix[j + 1] * cdf[j];
    p += w[i] * prefix[k_count];

    for (Eigen::Index j = 0; j < k_count; ++j) {
      if (j == y) continue;
      // w_i * phi(c_ij) * prod_{l != j} Phi(c_il)
      const double g = w[i] * norm_pdf(c[j]) * prefix[j] * suffix[j + 1];
      d_means[y] += g / sd[j];
      d_sd[y] += g * t[i] / sd[j];
      d_means[j] -= g / sd[j];
      d_sd[j] -= g * c[j] / sd[j];
    }
  }
  d_vars = (d_sd.array() / (2.0 * sd)).matrix();
  return p;
}

double prob_max(const Eigen::VectorXd& means, const Eigen::VectorXd& vars, int y,
                const GaussHermite& quad) {
  const auto k_count = means.size();
  if (vars.size() != k_count) throw InputError("prob_max: means and vars differ in length");
  if (y < 0 || y >= k_count) throw InputError("prob_max: class index out of range");
  for (Eigen::Index k = 0; k < k_count; ++k)
    if (!(vars[k] > 0.0)) throw InputError("prob_max: variances must be positive");
  const Eigen::ArrayXd sd = vars.array().sqrt();
  const auto t = quad.abscissae();
  const auto w = quad.weights();
  double p = 0.0;
  for (int i = 0; i < quad.size(); ++i) {
    const double fy = means[y] + sd[y] * t[i];
    double prod = 1.0;
    for (Eigen::Index j = 0; j < k_count; ++j)
      if (j != y) prod *= norm_cdf((fy - means[j]) / sd[j]);
    p += w[i] * prod;
  }
  return p;
}

double expected_loglik(const Eigen::VectorXd& means, const Eigen::VectorXd& vars, int y,
                       const RobustMax& lik, const GaussHermite& quad) {
  if (means.size() != lik.n_classes) throw InputError("expected_loglik: wrong number of classes");
  const double p = prob_max(means, vars, y, quad);
  return p * lik.log_correct() + (1.0 - p) * lik.log_incorrect();
}

double elbo(const GgpPrior& prior, const VariationalState& state,
            std::span<const LabelledNode> labels, const RobustMax& lik, const GaussHermite& quad) {
  lik.validate();
  std::vector<std::size_t> idx;
  idx.reserve(labels.size());
  for (const auto& l : labels) {
    if (l.label < 0 || l.label >= lik.n_classes) throw InputError("elbo: label out of range");
    idx.push_back(l.node);
  }
  double ell = 0.0;
  if (!idx.empty()) {
    const Marginals q = marginal_q(prior, state, idx);
    for (std::size_t n = 0; n < labels.size(); ++n)
      ell += expected_loglik(q.mean.row(n).transpose(), q.var.row(n).transpose(), labels[n].label,
                             lik, quad);
  }
  return ell - kl_term(state);
}

Eigen::MatrixXd predict_proba_from_marginals(const Marginals& q, const RobustMax& lik,
                                             const GaussHermite& quad) {
  lik.validate();
  const auto n = q.mean.rows();
  const int k_count = lik.n_classes;
  if (q.mean.cols() != k_count) throw InputError("predict_proba: wrong number of classes");
  Eigen::MatrixXd out(n, k_count);
  const double wrong = lik.epsilon / (k_count - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd mu = q.mean.row(i).transpose();
    const Eigen::VectorXd var = q.var.row(i).transpose();
    Eigen::VectorXd pmax(k_count);
    for (int k = 0; k < k_count; ++k) pmax[k] = prob_max(mu, var, k, quad);
    pmax /= pmax.sum();
    for (int k = 0; k < k_count; ++k)
      out(i, k) = pmax[k] * (1.0 - lik.epsilon) + (1.0 - pmax[k]) * wrong;
  }
  return out;
}

Eigen::MatrixXd predict_proba(const GgpPrior& prior, const VariationalState& state,
                              const RobustMax& lik, const GaussHermite& quad,
                              std::span<const std::size_t> idx) {
  return predict_proba_from_marginals(marginal_q(prior, state, idx), lik, quad);
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& probs) {
  std::vector<int> out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    int best = 0;
    for (Eigen::Index k = 1; k < probs.cols(); ++k)
      if (probs(i, k) > probs(i, best)) best = static_cast<int>(k);
    out[i] = best;
  }
  return out;
}

}  // namespace ggp
