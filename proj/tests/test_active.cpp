#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include <Eigen/LU>

#include "ggp/active.hpp"
#include "ggp/error.hpp"
#include "test_support.hpp"

using namespace ggp;

namespace {

Eigen::MatrixXd fresh_cov(const SparseGraph& g, const std::vector<std::size_t>& unlabelled) {
  const Eigen::MatrixXd l = testing::dense_laplacian(g);
  const auto u = static_cast<Eigen::Index>(unlabelled.size());
  Eigen::MatrixXd luu(u, u);
  for (Eigen::Index i = 0; i < u; ++i)
    for (Eigen::Index j = 0; j < u; ++j) luu(i, j) = l(unlabelled[i], unlabelled[j]);
  return luu.inverse();
}

}  // namespace

TEST_CASE("sopt_init hand examples") {
  auto path = testing::path_graph(3);
  std::vector<std::size_t> mid{1};
  auto a = sopt_init(path, mid);
  CHECK(a.unlabelled == std::vector<std::size_t>{0, 2});
  CHECK(testing::max_abs_diff(a.cov, Eigen::MatrixXd::Identity(2, 2)) < 1e-15);

  std::vector<std::size_t> end{0};
  auto b = sopt_init(path, end);
  Eigen::MatrixXd expect(2, 2);
  expect << 1, 1, 1, 2;
  CHECK(testing::max_abs_diff(b.cov, expect) < 1e-14);

  std::vector<std::size_t> all{0, 1, 2};
  auto c = sopt_init(path, all);
  CHECK(c.empty());
  CHECK_THROWS_AS(sopt_select(c), StateError);

  std::vector<Edge> split{{0, 1}, {2, 3}};
  CHECK_THROWS_AS(sopt_init(SparseGraph::from_edge_list(4, split), end), InputError);
}

TEST_CASE("sopt_select hand examples") {
  auto path = testing::path_graph(3);
  std::vector<std::size_t> end{0}, mid{1};
  CHECK(sopt_select(sopt_init(path, end)) == 2);
  CHECK(sopt_select(sopt_init(path, mid)) == 0);
  std::vector<std::size_t> two{0, 1};
  CHECK(sopt_select(sopt_init(path, two)) == 2);
}

TEST_CASE("sopt_update hand example and errors") {
  auto path = testing::path_graph(3);
  std::vector<std::size_t> end{0};
  auto s = sopt_update(sopt_init(path, end), 2);
  CHECK(s.unlabelled == std::vector<std::size_t>{1});
  CHECK(s.cov(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(sopt_update(s, 0), InputError);
  s = sopt_update(s, 1);
  CHECK(s.empty());
}

TEST_CASE("incremental SOPT inverse equals fresh inverse") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 12 + rng() % 29;
    auto g = testing::random_connected(n, 0.08, rng);
    std::vector<std::size_t> labelled{static_cast<std::size_t>(rng() % n)};
    auto state = sopt_init(g, labelled);
    std::set<std::size_t> seen(labelled.begin(), labelled.end());
    for (int step = 0; step < 10; ++step) {
      const auto v = sopt_select(state);
      CHECK(seen.insert(v).second);
      state = sopt_update(std::move(state), v);
      labelled.push_back(v);
      CHECK(state.unlabelled.size() + labelled.size() == n);
      CHECK(testing::max_abs_diff(state.cov, fresh_cov(g, state.unlabelled)) < 1e-8);
      std::vector<std::size_t> sorted = labelled;
      std::sort(sorted.begin(), sorted.end());
      auto fresh = sopt_init(g, sorted);
      CHECK(fresh.unlabelled == state.unlabelled);
      CHECK(testing::max_abs_diff(state.cov, fresh.cov) < 1e-8);
    }
  }
}

TEST_CASE("lp_predict examples") {
  auto p3 = testing::path_graph(3);
  std::vector<LabelledNode> ends{{0, 0}, {2, 1}};
  auto lp = lp_predict(p3, ends, 2);
  CHECK(lp.scores(1, 0) == doctest::Approx(0.5));
  CHECK(lp.predictions == std::vector<int>{0, 0, 1});

  auto p4 = testing::path_graph(4);
  std::vector<LabelledNode> ends4{{0, 0}, {3, 1}};
  auto lp4 = lp_predict(p4, ends4, 2);
  CHECK(lp4.scores(1, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(lp4.scores(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(lp4.predictions[1] == 0);
  CHECK(lp4.predictions[2] == 1);

  std::vector<LabelledNode> all{{0, 1}, {1, 0}, {2, 1}};
  CHECK(lp_predict(p3, all, 2).predictions == std::vector<int>{1, 0, 1});

  std::vector<Edge> split{{0, 1}, {2, 3}};
  std::vector<LabelledNode> first{{0, 0}};
  CHECK_THROWS_AS(lp_predict(SparseGraph::from_edge_list(4, split), first, 2), InputError);
}

TEST_CASE("lp scores are convex combinations") {
  std::mt19937_64 rng(42);
  auto g = testing::random_connected(30, 0.1, rng);
  std::vector<LabelledNode> labels{{0, 0}, {7, 1}, {15, 2}, {22, 1}};
  auto lp = lp_predict(g, labels, 3);
  for (Eigen::Index i = 0; i < lp.scores.rows(); ++i) {
    CHECK(std::abs(lp.scores.row(i).sum() - 1.0) < 1e-10);
    CHECK(lp.scores.row(i).minCoeff() >= -1e-12);
  }
}

TEST_CASE("alc") {
  LearningCurve ones{{{1, 1.0}, {2, 1.0}, {3, 1.0}}};
  CHECK(alc(ones) == 1.0);
  LearningCurve halves{{{1, 0.5}, {2, 0.5}}};
  CHECK(alc(halves) == 0.5);
  CHECK_THROWS_AS(alc(LearningCurve{}), InputError);
}

TEST_CASE("active loop shape, determinism and bookkeeping") {
  std::mt19937_64 rng(43);
  auto g = testing::random_connected(25, 0.1, rng);
  std::vector<int> truth(25);
  for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = static_cast<int>(i % 3);
  NodeClassifier oracle = [&](std::span<const LabelledNode>) { return truth; };
  NodeClassifier lp = [&](std::span<const LabelledNode> labels) {
    return lp_predict(g, labels, 3).predictions;
  };

  ActiveLoopConfig one{Acquisition::sopt, 1, 0.0};
  auto r1 = active_run(g, truth, 3, oracle, one, 5);
  REQUIRE(r1.curve.points.size() == 1);
  CHECK(r1.curve.points[0].labels_acquired == 1);
  CHECK(r1.queried.size() == 1);

  for (auto acq : {Acquisition::sopt, Acquisition::rand}) {
    ActiveLoopConfig cfg{acq, 10, 0.0};
    auto perfect = active_run(g, truth, 3, oracle, cfg, 9);
    CHECK(alc(perfect.curve) == 1.0);
    std::vector<std::uint64_t> seeds{1, 2, 3};
    auto runs = active_loop(g, truth, 3, lp, cfg, seeds);
    auto again = active_loop(g, truth, 3, lp, cfg, seeds);
    REQUIRE(runs.size() == 3);
    for (std::size_t s = 0; s < runs.size(); ++s) {
      CHECK(runs[s].seed == seeds[s]);
      CHECK(runs[s].queried == again[s].queried);
      CHECK(runs[s].curve.points.size() == 10);
      CHECK(runs[s].queried.size() == 10);
      std::set<std::size_t> uniq(runs[s].queried.begin(), runs[s].queried.end());
      CHECK(uniq.size() == 10);
      for (std::size_t t = 0; t < 10; ++t) {
        CHECK(runs[s].curve.points[t].labels_acquired == t + 1);
        CHECK(runs[s].curve.points[t].test_accuracy >= 0.0);
        CHECK(runs[s].curve.points[t].test_accuracy <= 1.0);
      }
    }
  }

  ActiveLoopConfig too_big{Acquisition::rand, 26, 0.0};
  CHECK_THROWS_AS(active_run(g, truth, 3, oracle, too_big, 1), InputError);
}

TEST_CASE("SOPT query sequence depends only on the initial node") {
  std::mt19937_64 rng(44);
  auto g = testing::random_connected(20, 0.1, rng);
  std::vector<int> truth(20, 0);
  truth[0] = 1;
  int calls = 0;
  NodeClassifier noisy = [&](std::span<const LabelledNode>) {
    ++calls;
    std::vector<int> p(20, calls % 2);
    return p;
  };
  ActiveLoopConfig cfg{Acquisition::sopt, 8, 0.0};
  auto a = active_run(g, truth, 2, noisy, cfg, 3);
  auto b = active_run(g, truth, 2, noisy, cfg, 3);
  CHECK(a.queried == b.queried);
}
