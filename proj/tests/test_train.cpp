#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ggp/data.hpp"
#include "ggp/error.hpp"
#include "ggp/train.hpp"
#include "test_support.hpp"

using namespace ggp;

namespace {

struct Instance {
  GgpPrior prior;
  VariationalState state;
  std::vector<LabelledNode> labels;
};

// Random 20-node, 3-class problem with a perturbed (non-prior) variational state.
Instance random_instance(std::uint64_t seed, KernelFamily family, std::size_t n = 20,
                         std::size_t m = 5, int k = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  auto g = testing::random_connected(n, 0.1, rng);
  Eigen::MatrixXd x(n, 6);
  for (auto& v : x.reshaped()) v = gauss(rng) * 0.5;
  auto features = FeatureMatrix::from_dense(x);
  const KernelSpec spec = family == KernelFamily::linear ? KernelSpec::linear(0.8)
                                                         : KernelSpec::polynomial(0.3, 0.7);
  GgpPrior prior(g, features, spec);

  std::vector<std::size_t> labelled;
  std::vector<LabelledNode> labels;
  for (std::size_t i = 0; i < m; ++i) {
    labelled.push_back(i * (n / m));
    labels.push_back({i * (n / m), static_cast<int>(i % k)});
  }
  TrainConfig cfg;
  cfg.seed = seed;
  auto state = initialize(prior, labelled, k, cfg);
  for (auto& v : state.z.reshaped()) v += 0.1 * gauss(rng);
  for (auto& v : state.mean.reshaped()) v = 0.7 * gauss(rng);
  for (auto& s : state.scale) {
    for (Eigen::Index c = 0; c < s.cols(); ++c)
      for (Eigen::Index r = c + 1; r < s.rows(); ++r) s(r, c) = 0.2 * gauss(rng);
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      s(i, i) = 0.5 + std::abs(gauss(rng)) * 0.3;
  }
  return {prior, state, labels};
}

}  // namespace

TEST_CASE("train config parsing and validation") {
  std::istringstream in("# defaults\nlearning_rate = 0.01\nmax_iters=10\n\nkernel=linear\ntrain_z=false\n");
  auto cfg = read_train_config(in);
  CHECK(cfg.learning_rate == 0.01);
  CHECK(cfg.max_iters == 10);
  CHECK(cfg.kernel == KernelFamily::linear);
  CHECK_FALSE(cfg.train_z);
  CHECK(cfg.quad_points == 20);

  std::istringstream bad_key("learning_rte=1\n");
  CHECK_THROWS_AS(read_train_config(bad_key), InputError);
  std::istringstream bad_value("learning_rate=-1\n");
  CHECK_THROWS_AS(read_train_config(bad_value).validate(), InputError);
  std::istringstream no_eq("max_iters 5\n");
  CHECK_THROWS_AS(read_train_config(no_eq), InputError);

  TrainConfig round;
  round.seed = 17;
  round.epsilon = 0.01;
  TrainConfig back;
  for (const auto& [key, value] : round.to_map()) back.apply(key, value);
  CHECK(back.to_map() == round.to_map());
}

TEST_CASE("softplus round trip") {
  for (double y : {1e-8, 1e-3, 0.5, 1.0, 7.0, 50.0}) CHECK(softplus(softplus_inverse(y)) == doctest::Approx(y).epsilon(1e-12));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(std::isfinite(softplus(800.0)));
}

TEST_CASE("parameter layout flatten and unflatten are inverse") {
  auto inst = random_instance(1, KernelFamily::polynomial);
  auto p = Parameters::from_model(inst.prior.spec(), inst.state);
  for (bool with_z : {true, false}) {
    ParameterLayout layout(p, with_z);
    auto x = layout.flatten(p);
    CHECK(static_cast<std::size_t>(x.size()) == layout.size());
    Parameters q = p;
    q.mean.setZero();
    layout.unflatten(x, q);
    CHECK(q.state() == p.state());
    std::size_t total = 0;
    for (const auto& b : layout.blocks()) total += b.size;
    CHECK(total == layout.size());
  }
  auto state = p.state();
  CHECK(state.scale[0](0, 0) == doctest::Approx(inst.state.scale[0](0, 0)).epsilon(1e-12));
  CHECK(p.kernel_spec().variance == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("grad_check on a quadratic toy is exact up to round-off") {
  Eigen::MatrixXd a(3, 3);
  a << 2, 0.5, 0, 0.5, 1, 0.2, 0, 0.2, 3;
  Eigen::VectorXd b(3);
  b << 1, -2, 0.5;
  ValueAndGrad f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    if (g) *g = -a * x + b;
    return -0.5 * x.dot(a * x) + b.dot(x);
  };
  Eigen::VectorXd x0(3);
  x0 << 0.3, -1.2, 2.0;
  auto report = grad_check(f, x0, {{"first", 0, 2}, {"second", 2, 1}});
  REQUIRE(report.blocks.size() == 2);
  CHECK(report.worst().max_rel_error < 1e-9);
}

TEST_CASE("ELBO gradient matches finite differences on every block") {
  for (auto family : {KernelFamily::polynomial, KernelFamily::linear}) {
    for (std::uint64_t seed : {3u, 4u}) {
      auto inst = random_instance(seed, family);
      auto report = grad_check(inst.prior, inst.state, inst.labels, TrainConfig{});
      CAPTURE(to_string(family));
      CAPTURE(seed);
      for (const auto& b : report.blocks) {
        CAPTURE(b.block);
        CAPTURE(b.analytic);
        CAPTURE(b.numeric);
        if (family == KernelFamily::linear && b.block == "kernel") {
          // Scaling a linear kernel scales every latent mean and standard
          // deviation alike, which leaves the robust-max probabilities unchanged.
          CHECK(std::abs(b.analytic) < 1e-10);
          CHECK(std::abs(b.numeric) < 1e-8);
        } else {
          CHECK(b.max_rel_error < 1e-4);
        }
      }
      CHECK(report.blocks.size() == 4);
    }
  }
}

TEST_CASE("ELBO objective value agrees with svgp elbo") {
  auto inst = random_instance(5, KernelFamily::polynomial);
  RobustMax lik{3, 1e-3};
  GaussHermite quad(20);
  ElboObjective objective(inst.prior, inst.labels, lik, quad);
  const auto p = Parameters::from_model(inst.prior.spec(), inst.state);
  const double direct = elbo(inst.prior.with_spec(p.kernel_spec()), p.state(), inst.labels, lik, quad);
  CHECK(objective.value(p) == doctest::Approx(direct).epsilon(1e-10));
  Parameters g;
  CHECK(objective.value_and_grad(p, g) == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("quadrature order changes the gradient") {
  auto inst = random_instance(6, KernelFamily::polynomial);
  RobustMax lik{3, 1e-3};
  const auto p = Parameters::from_model(inst.prior.spec(), inst.state);
  Parameters g1, g20;
  ElboObjective(inst.prior, inst.labels, lik, GaussHermite(1)).value_and_grad(p, g1);
  ElboObjective(inst.prior, inst.labels, lik, GaussHermite(20)).value_and_grad(p, g20);
  CHECK((g1.mean - g20.mean).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("initialize places inducing inputs at averaged features") {
  std::vector<Edge> none;
  Eigen::MatrixXd x(2, 3);
  x << 1, 0, 2, 0, 1, 0;
  auto feats = FeatureMatrix::from_dense(x);
  GgpPrior isolated(SparseGraph::from_edge_list(2, none), feats, KernelSpec::linear(1.0));
  std::vector<std::size_t> one{0};
  auto s = initialize(isolated, one, 2, TrainConfig{});
  REQUIRE(s.n_inducing() == 1);
  CHECK((s.z.row(0) - x.row(0)).cwiseAbs().maxCoeff() < 0.05);
  CHECK(s.mean.isZero());
  CHECK(s.scale[0] == Eigen::MatrixXd::Identity(1, 1));

  GgpPrior path(testing::path_graph(2), feats, KernelSpec::linear(1.0));
  std::vector<std::size_t> both{0, 1};
  auto t = initialize(path, both, 2, TrainConfig{});
  REQUIRE(t.n_inducing() == 2);
  const Eigen::RowVectorXd avg = 0.5 * (x.row(0) + x.row(1));
  CHECK((t.z.row(0) - avg).cwiseAbs().maxCoeff() < 0.05);
  CHECK((t.z.row(1) - avg).cwiseAbs().maxCoeff() < 0.05);
  CHECK(t.z.row(0) != t.z.row(1));

  std::vector<std::size_t> empty;
  CHECK_THROWS_AS(initialize(path, empty, 2, TrainConfig{}), InputError);
}

TEST_CASE("initial kernel normalizes the averaged embeddings") {
  auto inst = random_instance(7, KernelFamily::linear);
  std::vector<std::size_t> nodes;
  for (auto& l : inst.labels) nodes.push_back(l.node);
  auto spec = initial_kernel(inst.prior, nodes, KernelFamily::linear);
  auto mu = inst.prior.averaged_features(nodes);
  CHECK(spec.variance * mu.rowwise().squaredNorm().mean() == doctest::Approx(1.0));
  CHECK(initial_kernel(inst.prior, nodes, KernelFamily::polynomial).offset == 1.0);
}

TEST_CASE("adam ascends a concave quadratic") {
  Adam adam(2, 0.05);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  Eigen::VectorXd target(2);
  target << 3, -1;
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd grad = -(x - target);
    adam.step(x, grad);
  }
  CHECK((x - target).norm() < 1e-2);
}

TEST_CASE("fit with zero iterations returns the initialization") {
  auto ds = synth_sbm({});
  GgpPrior prior(ds.graph, tfidf_transform(ds.features), KernelSpec::polynomial(1, 1));
  TrainConfig cfg;
  cfg.max_iters = 0;
  auto labels = ds.labelled(ds.splits.train);
  auto model = fit(prior, labels, ds.n_classes, cfg);
  CHECK(model.elbo_trace.empty());
  std::vector<std::size_t> nodes;
  for (auto& l : labels) nodes.push_back(l.node);
  auto init = initialize(model.prior, nodes, ds.n_classes, cfg);
  CHECK(model.state == init);
  CHECK(model.final_elbo == model.initial_elbo);
}

TEST_CASE("fit separates two cliques and is reproducible") {
  SbmParams params;
  params.n_per_block = 5;
  params.seed = 2;
  auto ds = synth_sbm(params);
  GgpPrior prior(ds.graph, tfidf_transform(ds.features), KernelSpec::polynomial(1, 1));
  TrainConfig cfg;
  cfg.max_iters = 300;
  cfg.seed = 11;
  for (auto family : {KernelFamily::polynomial, KernelFamily::linear}) {
    cfg.kernel = family;
    auto labels = ds.labelled(ds.splits.train);
    auto model = fit(prior, labels, ds.n_classes, cfg);
    std::vector<std::size_t> all(ds.n_nodes());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    auto pred = predict(model, all);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(pred[i] == ds.labels[i]);
    CHECK(model.final_elbo > model.initial_elbo);
    CHECK(model.elbo_trace.size() == 300);
    for (double e : model.elbo_trace) CHECK(std::isfinite(e));

    auto again = fit(prior, labels, ds.n_classes, cfg);
    CHECK(again.state == model.state);
    CHECK(again.elbo_trace == model.elbo_trace);
  }
}

TEST_CASE("fit warns about classes without labels") {
  auto ds = synth_sbm({});
  GgpPrior prior(ds.graph, ds.features, KernelSpec::linear(1));
  std::vector<LabelledNode> labels{{0, 0}};
  TrainConfig cfg;
  cfg.max_iters = 5;
  auto model = fit(prior, labels, 3, cfg);
  CHECK(model.warnings.size() == 2);
}
