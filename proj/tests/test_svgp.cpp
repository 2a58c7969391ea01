#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>

#include "ggp/error.hpp"
#include "ggp/svgp.hpp"
#include "ggp/train.hpp"
#include "test_support.hpp"

using namespace ggp;

namespace {

struct Mc {
  double mean;
  double se;
};

Mc summarize(double sum, double sum_sq, double n) {
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

// P(argmax = k) for independent Gaussians by direct sampling.
std::vector<Mc> mc_argmax(const Eigen::VectorXd& mean, const Eigen::VectorXd& var, int draws,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  const auto k = mean.size();
  std::vector<double> hits(k, 0.0);
  Eigen::VectorXd f(k);
  for (int d = 0; d < draws; ++d) {
    for (Eigen::Index j = 0; j < k; ++j) f[j] = mean[j] + std::sqrt(var[j]) * gauss(rng);
    Eigen::Index best;
    f.maxCoeff(&best);
    hits[best] += 1.0;
  }
  std::vector<Mc> out;
  for (double h : hits) out.push_back(summarize(h, h, draws));
  return out;
}

VariationalState random_state(std::size_t m, std::size_t d, int k, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd z(m, d);
  for (auto& v : z.reshaped()) v = gauss(rng);
  auto s = VariationalState::at_prior(z, k);
  for (auto& v : s.mean.reshaped()) v = gauss(rng);
  for (auto& sc : s.scale) {
    for (Eigen::Index c = 0; c < sc.cols(); ++c)
      for (Eigen::Index r = c + 1; r < sc.rows(); ++r) sc(r, c) = 0.3 * gauss(rng);
    for (Eigen::Index i = 0; i < sc.rows(); ++i) sc(i, i) = 0.4 + 0.8 * std::abs(gauss(rng));
  }
  return s;
}

}  // namespace

TEST_CASE("Gauss-Hermite rule integrates normal moments") {
  for (int n : {1, 2, 5, 20, 40}) {
    GaussHermite gh(n);
    CHECK(gh.size() == n);
    double sum = 0, m2 = 0, m4 = 0, m1 = 0;
    for (int i = 0; i < n; ++i) {
      const double x = gh.abscissae()[i], w = gh.weights()[i];
      CHECK(w > 0);
      sum += w;
      m1 += w * x;
      m2 += w * x * x;
      m4 += w * x * x * x * x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(std::abs(m1) < 1e-12);
    if (n >= 2) CHECK(m2 == doctest::Approx(1.0).epsilon(1e-12));
    if (n >= 3) CHECK(m4 == doctest::Approx(3.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(GaussHermite(0), InputError);
}

TEST_CASE("robust-max validation") {
  CHECK_THROWS_AS((RobustMax{1, 1e-3}.validate()), InputError);
  CHECK_THROWS_AS((RobustMax{2, 0.0}.validate()), InputError);
  CHECK_THROWS_AS((RobustMax{2, 0.5}.validate()), InputError);
  CHECK_NOTHROW((RobustMax{3, 0.6}.validate()));
  RobustMax lik{4, 0.03};
  CHECK(lik.log_correct() == doctest::Approx(std::log(0.97)).epsilon(1e-14));
  CHECK(lik.log_incorrect() == doctest::Approx(std::log(0.01)).epsilon(1e-14));
}

TEST_CASE("kl_term examples") {
  auto prior = VariationalState::at_prior(Eigen::MatrixXd::Ones(4, 2), 3);
  CHECK(kl_term(prior) == 0.0);
  VariationalState one;
  one.z = Eigen::MatrixXd::Ones(1, 1);
  one.mean = Eigen::MatrixXd::Ones(1, 1);
  one.scale = {Eigen::MatrixXd::Ones(1, 1)};
  CHECK(kl_term(one) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("kl_term matches Monte-Carlo") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 3; ++trial) {
    auto s = random_state(3, 2, 2, rng);
    const double closed = kl_term(s);
    CHECK(closed > 0);
    const int draws = 1000000;
    double sum = 0, sum_sq = 0;
    for (int d = 0; d < draws; ++d) {
      double log_ratio = 0;
      for (std::size_t k = 0; k < s.n_classes(); ++k) {
        Eigen::VectorXd eps(3);
        for (auto& e : eps) e = gauss(rng);
        const Eigen::VectorXd v = s.mean.col(k) + s.scale[k] * eps;
        double log_det = 0;
        for (int i = 0; i < 3; ++i) log_det += std::log(s.scale[k](i, i));
        log_ratio += -0.5 * eps.squaredNorm() - log_det + 0.5 * v.squaredNorm();
      }
      sum += log_ratio;
      sum_sq += log_ratio * log_ratio;
    }
    auto mc = summarize(sum, sum_sq, draws);
    CAPTURE(closed);
    CAPTURE(mc.mean);
    CHECK(std::abs(closed - mc.mean) < 3 * mc.se);
  }
}

TEST_CASE("expected_loglik examples") {
  RobustMax lik{2, 1e-3};
  GaussHermite gh(20);
  Eigen::VectorXd mean(2), var(2);
  mean << 2.0, 0.0;
  var << 1e-14, 1e-14;
  CHECK(expected_loglik(mean, var, 0, lik, gh) == doctest::Approx(std::log(0.999)).epsilon(1e-9));
  CHECK(expected_loglik(mean, var, 0, lik, gh) == doctest::Approx(-0.0010005).epsilon(1e-4));

  mean << 0.3, 0.3;
  var << 0.7, 0.7;
  const double half = 0.5 * std::log(0.999) + 0.5 * std::log(0.001);
  CHECK(expected_loglik(mean, var, 1, lik, gh) == doctest::Approx(half).epsilon(1e-12));
  CHECK(half == doctest::Approx(-3.45438).epsilon(1e-5));

  var << 0.7, 0.0;
  CHECK_THROWS_AS(expected_loglik(mean, var, 0, lik, gh), InputError);
}

TEST_CASE("expected_loglik and predict_proba match Monte-Carlo") {
  std::mt19937_64 rng(32);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> uvar(0.2, 2.0);
  GaussHermite gh(20);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 3;
    RobustMax lik{k, 1e-3};
    Eigen::VectorXd mean(k), var(k);
    for (int j = 0; j < k; ++j) {
      mean[j] = gauss(rng);
      var[j] = uvar(rng);
    }
    auto mc = mc_argmax(mean, var, 1000000, rng);
    Marginals q{mean.transpose(), var.transpose()};
    const Eigen::MatrixXd probs = predict_proba_from_marginals(q, lik, gh);
    CHECK(std::abs(probs.sum() - 1.0) < 1e-10);
    const double spread = lik.log_correct() - lik.log_incorrect();
    const double scale = (1 - lik.epsilon) - lik.epsilon / (k - 1);
    for (int y = 0; y < k; ++y) {
      const double mc_ll = lik.log_incorrect() + spread * mc[y].mean;
      CHECK(std::abs(expected_loglik(mean, var, y, lik, gh) - mc_ll) <= 3 * spread * mc[y].se);
      const double mc_p = lik.epsilon / (k - 1) + scale * mc[y].mean;
      CHECK(std::abs(probs(0, y) - mc_p) <= 3 * scale * mc[y].se);
    }
  }
}

TEST_CASE("expected_loglik increases with the observed class mean") {
  RobustMax lik{3, 1e-3};
  GaussHermite gh(20);
  Eigen::VectorXd mean(3), var(3);
  mean << -1.0, 0.2, 0.5;
  var << 0.5, 1.0, 0.3;
  double prev = -1e300;
  for (int i = 0; i < 30; ++i) {
    mean[0] = -3.0 + 0.2 * i;
    const double v = expected_loglik(mean, var, 0, lik, gh);
    CHECK(v > prev);
    prev = v;
  }
}

TEST_CASE("prob_max_grad matches finite differences") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> gauss;
  GaussHermite gh(20);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd mean(4), var(4);
    for (int j = 0; j < 4; ++j) {
      mean[j] = gauss(rng);
      var[j] = 0.3 + std::abs(gauss(rng));
    }
    Eigen::VectorXd dm, dv;
    const double p = prob_max_grad(mean, var, 1, gh, dm, dv);
    CHECK(p == prob_max(mean, var, 1, gh));
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
      Eigen::VectorXd a = mean, b = mean;
      a[j] += h;
      b[j] -= h;
      CHECK(dm[j] == doctest::Approx((prob_max(a, var, 1, gh) - prob_max(b, var, 1, gh)) / (2 * h)).epsilon(1e-6));
      Eigen::VectorXd c = var, d = var;
      c[j] += h;
      d[j] -= h;
      CHECK(dv[j] == doctest::Approx((prob_max(mean, c, 1, gh) - prob_max(mean, d, 1, gh)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("predict_proba examples") {
  RobustMax lik{2, 1e-3};
  GaussHermite gh(20);
  Marginals sym{Eigen::MatrixXd::Constant(1, 2, 0.4), Eigen::MatrixXd::Constant(1, 2, 1.3)};
  auto p = predict_proba_from_marginals(sym, lik, gh);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(argmax_rows(p) == std::vector<int>{0});

  RobustMax lik3{3, 1e-3};
  Marginals sharp{Eigen::MatrixXd(1, 3), Eigen::MatrixXd::Constant(1, 3, 1e-12)};
  sharp.mean << 0.0, 3.0, 1.0;
  auto q = predict_proba_from_marginals(sharp, lik3, gh);
  CHECK(q(0, 1) == doctest::Approx(0.999).epsilon(1e-12));
  CHECK(q(0, 0) == doctest::Approx(0.0005).epsilon(1e-9));
  CHECK(argmax_rows(q) == std::vector<int>{1});
}

TEST_CASE("jitter ladder") {
  Eigen::MatrixXd rank1 = Eigen::MatrixXd::Ones(3, 3);
  auto chol = cholesky_with_jitter(rank1);
  CHECK(chol.jitter > 0);
  CHECK(chol.relative_jitter >= kBaseRelativeJitter);
  Eigen::MatrixXd recon = chol.lower * chol.lower.transpose();
  recon.diagonal().array() -= chol.jitter;
  CHECK(testing::max_abs_diff(recon, rank1) < 1e-12);

  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(1, 1) = -1;
  try {
    cholesky_with_jitter(indefinite);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.jitter_ladder().size() == 5);
    CHECK(e.jitter_ladder().front() == doctest::Approx(1e-6));
  }
}

TEST_CASE("marginal_q at the prior recovers prior marginals") {
  std::mt19937_64 rng(34);
  auto g = testing::erdos_renyi(15, 0.2, rng);
  auto feats = testing::random_features(15, 6, 0.5, rng);
  GgpPrior prior(g, feats, KernelSpec::polynomial(0.8, 1.0));
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd z(4, 6);
  for (auto& v : z.reshaped()) v = gauss(rng);
  auto state = VariationalState::at_prior(z, 2);
  std::vector<std::size_t> idx{0, 4, 9, 14};
  auto q = marginal_q(prior, state, idx);
  CHECK(q.mean.isZero());
  for (int k = 0; k < 2; ++k)
    CHECK(testing::max_abs_diff(q.var.col(k), prior.cov_hh_diag(idx)) < 1e-10 * prior.cov_hh_diag(idx).maxCoeff());
}

TEST_CASE("marginal_q interpolation limit") {
  std::vector<Edge> none;
  Eigen::MatrixXd x(1, 2);
  x << 0.6, 0.8;
  GgpPrior prior(SparseGraph::from_edge_list(1, none), FeatureMatrix::from_dense(x),
                 KernelSpec::linear(2.0));
  VariationalState s;
  s.z = x;
  s.mean = Eigen::MatrixXd::Constant(1, 2, 0.7);
  s.scale = {Eigen::MatrixXd::Constant(1, 1, 1e-4), Eigen::MatrixXd::Constant(1, 1, 1e-4)};
  std::vector<std::size_t> idx{0};
  auto q = marginal_q(prior, s, idx);
  CHECK(q.mean(0, 0) == doctest::Approx(0.7 * std::sqrt(2.0)).epsilon(1e-5));
  CHECK(q.var(0, 0) < 1e-5 * 2.0);
  CHECK(q.var(0, 0) > 0);
}

TEST_CASE("marginal_q matches dense unwhitened conditioning") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = testing::erdos_renyi(12, 0.25, rng);
    auto feats = testing::random_features(12, 5, 0.6, rng);
    GgpPrior prior(g, feats, trial % 2 ? KernelSpec::linear(1.3) : KernelSpec::polynomial(0.7, 0.5));
    auto state = random_state(4, 5, 3, rng);
    std::vector<std::size_t> idx{0, 3, 5, 11};
    auto q = marginal_q(prior, state, idx);

    // u = L v with q(v) = N(m, S S^T) gives q(u) = N(L m, L S S^T L^T).
    const auto chol = cholesky_with_jitter(cov_uu(state.z, prior.spec()));
    Eigen::MatrixXd kuu = cov_uu(state.z, prior.spec());
    kuu.diagonal().array() += chol.jitter;
    const Eigen::MatrixXd kuu_inv = kuu.fullPivLu().inverse();
    const Eigen::MatrixXd khu = prior.cov_hu(idx, state.z);
    const Eigen::VectorXd khh = prior.cov_hh_diag(idx);
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd mu_u = chol.lower * state.mean.col(k);
      const Eigen::MatrixXd sigma_u =
          chol.lower * state.scale[k] * state.scale[k].transpose() * chol.lower.transpose();
      const Eigen::MatrixXd proj = khu * kuu_inv;
      const Eigen::VectorXd mean = proj * mu_u;
      const Eigen::VectorXd var = khh - (proj * khu.transpose()).diagonal() +
                                  (proj * sigma_u * proj.transpose()).diagonal();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        CHECK(std::abs(q.mean(i, k) - mean[i]) <= 1e-8 * std::max(1.0, std::abs(mean[i])));
        CHECK(std::abs(q.var(i, k) - var[i]) <= 1e-8 * std::max(1.0, std::abs(var[i])));
        CHECK(q.var(i, k) > 0);
      }
    }
  }
}

TEST_CASE("elbo examples and invariants") {
  std::mt19937_64 rng(36);
  auto g = testing::erdos_renyi(10, 0.3, rng);
  auto feats = testing::random_features(10, 4, 0.6, rng);
  GgpPrior prior(g, feats, KernelSpec::polynomial(0.5, 1.0));
  RobustMax lik{3, 1e-3};
  GaussHermite gh(20);
  auto state = random_state(3, 4, 3, rng);

  std::vector<LabelledNode> none;
  CHECK(elbo(prior, state, none, lik, gh) == -kl_term(state));

  std::vector<LabelledNode> labels{{1, 0}, {4, 2}, {7, 1}, {9, 2}};
  auto at_prior = VariationalState::at_prior(state.z, 3);
  std::vector<std::size_t> nodes{1, 4, 7, 9};
  auto q = marginal_q(prior, at_prior, nodes);
  double sum = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    sum += expected_loglik(q.mean.row(i).transpose(), q.var.row(i).transpose(), labels[i].label, lik, gh);
  CHECK(elbo(prior, at_prior, labels, lik, gh) == doctest::Approx(sum).epsilon(1e-13));

  const double base = elbo(prior, state, labels, lik, gh);
  auto shuffled = labels;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(elbo(prior, state, shuffled, lik, gh) == doctest::Approx(base).epsilon(1e-13));
}

TEST_CASE("elbo lower-bounds the importance-sampled log marginal likelihood") {
  std::mt19937_64 rng(37);
  auto g = testing::random_connected(6, 0.2, rng);
  auto feats = testing::random_features(6, 4, 0.7, rng);
  GgpPrior prior(g, feats, KernelSpec::polynomial(0.6, 1.0));
  std::vector<LabelledNode> labels{{0, 0}, {2, 1}, {5, 0}};
  TrainConfig cfg;
  cfg.max_iters = 200;
  cfg.learning_rate = 0.02;
  cfg.train_z = false;
  auto model = fit(prior, labels, 2, cfg);
  const double bound = elbo(model.prior, model.state, labels, model.likelihood, GaussHermite(20));

  // Prior samples of h at the labelled nodes, weighted by the robust-max likelihood.
  std::vector<std::size_t> nodes{0, 2, 5};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.prior.cov_hh(nodes, nodes));
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  std::normal_distribution<double> gauss;
  const int draws = 100000;
  double sum = 0, sum_sq = 0;
  for (int d = 0; d < draws; ++d) {
    Eigen::MatrixXd h(3, 2);
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd e(3);
      for (auto& v : e) v = gauss(rng);
      h.col(k) = root * e;
    }
    double like = 1;
    for (int i = 0; i < 3; ++i) {
      Eigen::Index best;
      h.row(i).maxCoeff(&best);
      like *= best == labels[i].label ? 0.999 : 0.001;
    }
    sum += like;
    sum_sq += like * like;
  }
  auto mc = summarize(sum, sum_sq, draws);
  const double log_ml = std::log(mc.mean);
  const double log_se = mc.se / mc.mean;
  CAPTURE(bound);
  CAPTURE(log_ml);
  CHECK(bound <= log_ml + 3 * log_se);
  CHECK(model.final_elbo > model.initial_elbo);
}
