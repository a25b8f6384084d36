#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "caps/evaluator.hpp"
#include "caps/forest.hpp"
#include "caps/metrics.hpp"
#include "caps/rng.hpp"

using namespace caps;
using namespace caps::forest;
using data::Task;

namespace {

data::Dataset make_dataset(Matrix x, std::vector<double> y, Task task, int classes = 2) {
  data::Dataset ds;
  ds.x = std::move(x);
  ds.y = std::move(y);
  ds.task = task;
  for (int j = 0; j < ds.x.cols(); ++j) ds.feature_names.push_back("f" + std::to_string(j));
  if (task != Task::kRegression) {
    for (int c = 0; c < classes; ++c) ds.class_names.push_back(std::to_string(c));
  }
  return ds;
}

// Minimal reference CART for the single-tree comparison: exhaustive over all
// features and midpoint thresholds, Gini gain, lowest-feature-then-threshold
// ties, leaves predict the lowest majority class.
struct OracleNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;
  double label = 0.0;
  std::unique_ptr<OracleNode> l, r;
};

double oracle_gini(const std::vector<double>& ys) {
  double c0 = 0, c1 = 0;
  for (double y : ys) (y == 0.0 ? c0 : c1) += 1.0;
  const double n = c0 + c1;
  return 1.0 - (c0 * c0 + c1 * c1) / (n * n);
}

std::unique_ptr<OracleNode> oracle_build(const Matrix& x, const std::vector<double>& y,
                                         std::vector<int> rows) {
  auto node = std::make_unique<OracleNode>();
  std::vector<double> ys;
  for (int r : rows) ys.push_back(y[static_cast<std::size_t>(r)]);
  bool pure = true;
  for (double v : ys) pure = pure && v == ys[0];
  if (pure || rows.size() < 2) {
    double c0 = 0, c1 = 0;
    for (double v : ys) (v == 0.0 ? c0 : c1) += 1.0;
    node->label = c0 >= c1 ? 0.0 : 1.0;
    return node;
  }
  const double parent = oracle_gini(ys);
  double best_gain = 0.0;
  int best_feature = -1;
  double best_threshold = 0.0;
  for (int f = 0; f < x.cols(); ++f) {
    std::vector<double> vals;
    for (int r : rows) vals.push_back(x(r, f));
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const double thr = 0.5 * (sorted[i] + sorted[i + 1]);
      std::vector<double> ly, ry;
      for (int r : rows) {
        (x(r, f) <= thr ? ly : ry).push_back(y[static_cast<std::size_t>(r)]);
      }
      if (ly.empty() || ry.empty()) continue;
      const double gain = parent -
                          (static_cast<double>(ly.size()) / static_cast<double>(rows.size())) * oracle_gini(ly) -
                          (static_cast<double>(ry.size()) / static_cast<double>(rows.size())) * oracle_gini(ry);
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
        best_threshold = thr;
      }
    }
  }
  if (best_feature < 0) {
    double c0 = 0, c1 = 0;
    for (double v : ys) (v == 0.0 ? c0 : c1) += 1.0;
    node->label = c0 >= c1 ? 0.0 : 1.0;
    return node;
  }
  node->leaf = false;
  node->feature = best_feature;
  node->threshold = best_threshold;
  std::vector<int> lrows, rrows;
  for (int r : rows) (x(r, best_feature) <= best_threshold ? lrows : rrows).push_back(r);
  node->l = oracle_build(x, y, lrows);
  node->r = oracle_build(x, y, rrows);
  return node;
}

double oracle_predict(const OracleNode* n, const Matrix& x, Eigen::Index row) {
  while (!n->leaf) n = x(row, n->feature) <= n->threshold ? n->l.get() : n->r.get();
  return n->label;
}

}  // namespace

TEST_CASE("forest reaches training accuracy 1.0 on separable data") {
  SeededRng rng(1);
  Matrix x(40, 2);
  std::vector<double> y(40);
  for (int i = 0; i < 40; ++i) {
    const bool pos = i >= 20;
    x(i, 0) = (pos ? 1.0 : -1.0) + rng.uniform(-0.4, 0.4);
    x(i, 1) = rng.uniform(-1.0, 1.0);
    y[static_cast<std::size_t>(i)] = pos ? 1.0 : 0.0;
  }
  ForestConfig cfg;
  cfg.n_trees = 7;
  cfg.seed = 5;
  Forest f = fit_forest(x, y, Task::kBinary, cfg);
  auto pred = predict_forest(f, x);
  CHECK(data::accuracy(y, pred) == 1.0);
}

TEST_CASE("single tree without bootstrap reproduces the reference CART") {
  Matrix x(6, 2);
  x << 1.0, 5.0,
       2.0, 4.0,
       3.0, 7.0,
       4.0, 6.0,
       5.0, 2.0,
       6.0, 1.0;
  std::vector<double> y{0, 0, 1, 1, 0, 1};

  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.max_features = 2;  // consider every column, like the oracle
  cfg.seed = 77;
  Forest f = fit_forest(x, y, Task::kBinary, cfg);

  auto oracle = oracle_build(x, y, {0, 1, 2, 3, 4, 5});

  // Training rows and a grid of unseen points must agree.
  for (int r = 0; r < 6; ++r) {
    CHECK(f.trees[0].predict_row(x, r) == oracle_predict(oracle.get(), x, r));
  }
  SeededRng rng(3);
  Matrix probe(20, 2);
  for (int i = 0; i < 20; ++i) {
    probe(i, 0) = rng.uniform(0.0, 7.0);
    probe(i, 1) = rng.uniform(0.0, 8.0);
  }
  for (int r = 0; r < 20; ++r) {
    CHECK(f.trees[0].predict_row(probe, r) == oracle_predict(oracle.get(), probe, r));
  }
}

TEST_CASE("forest training is deterministic in the seed") {
  SeededRng rng(9);
  Matrix x(30, 3);
  std::vector<double> y(30);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);
    y[static_cast<std::size_t>(i)] = x(i, 1) > 0 ? 1.0 : 0.0;
  }
  ForestConfig cfg;
  cfg.n_trees = 9;
  cfg.seed = 1234;
  auto p1 = predict_forest(fit_forest(x, y, Task::kBinary, cfg), x);
  auto p2 = predict_forest(fit_forest(x, y, Task::kBinary, cfg), x);
  CHECK(p1 == p2);
  // Parallel fitting gives identical trees (per-tree streams).
  auto p3 = predict_forest(fit_forest(x, y, Task::kBinary, cfg, 4), x);
  CHECK(p1 == p3);
}

TEST_CASE("vote ties resolve to the lower class id") {
  Forest f;
  f.task = Task::kBinary;
  f.columns = 1;
  f.classes = 2;
  for (int i = 0; i < 4; ++i) {
    Tree t;
    TreeNode leaf;
    leaf.is_leaf = true;
    leaf.histogram = i < 2 ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
    t.nodes.push_back(leaf);
    f.trees.push_back(t);
  }
  Matrix x = Matrix::Zero(1, 1);
  CHECK(predict_forest(f, x)[0] == 0.0);

  // All trees agree -> that label.
  for (auto& t : f.trees) t.nodes[0].histogram = {0.0, 1.0};
  CHECK(predict_forest(f, x)[0] == 1.0);

  // Single tree -> its own prediction.
  Forest single;
  single.task = Task::kBinary;
  single.columns = 1;
  single.classes = 2;
  single.trees.push_back(f.trees[0]);
  CHECK(predict_forest(single, x)[0] == f.trees[0].predict_row(x, 0));
}

TEST_CASE("column-count mismatch and single-class fits are rejected") {
  Matrix x = Matrix::Random(12, 2);
  std::vector<double> y(12, 0.0);
  ForestConfig cfg;
  CHECK_THROWS_AS(fit_forest(x, y, Task::kBinary, cfg), ContractError);

  for (int i = 0; i < 6; ++i) y[static_cast<std::size_t>(i)] = 1.0;
  Forest f = fit_forest(x, y, Task::kBinary, cfg);
  Matrix wrong = Matrix::Random(3, 5);
  CHECK_THROWS_AS(predict_forest(f, wrong), DimensionError);
}

TEST_CASE("duplicated column does not change single-tree predictions") {
  SeededRng rng(15);
  Matrix x2(24, 2);
  std::vector<double> y(24);
  for (int i = 0; i < 24; ++i) {
    x2(i, 0) = rng.uniform(-1, 1);
    x2(i, 1) = rng.uniform(-1, 1);
    y[static_cast<std::size_t>(i)] = (x2(i, 0) + 0.3 * x2(i, 1) > 0) ? 1.0 : 0.0;
  }
  Matrix x3(24, 3);
  x3.leftCols(2) = x2;
  x3.col(2) = x2.col(0);

  ForestConfig cfg;
  cfg.n_trees = 1;
  cfg.bootstrap = false;
  cfg.seed = 4;
  ForestConfig cfg2 = cfg;
  cfg2.max_features = 2;
  ForestConfig cfg3 = cfg;
  cfg3.max_features = 3;

  Forest f2 = fit_forest(x2, y, Task::kBinary, cfg2);
  Forest f3 = fit_forest(x3, y, Task::kBinary, cfg3);
  for (int r = 0; r < 24; ++r) {
    CHECK(f2.trees[0].predict_row(x2, r) == f3.trees[0].predict_row(x3, r));
  }
}

TEST_CASE("evaluate_subset caches and canonicalizes") {
  SeededRng rng(21);
  Matrix x(60, 4);
  std::vector<double> y(60);
  for (int i = 0; i < 60; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = rng.uniform(-1, 1);
    y[static_cast<std::size_t>(i)] = x(i, 2) > 0 ? 1.0 : 0.0;
  }
  data::Dataset ds = make_dataset(std::move(x), std::move(y), Task::kBinary);
  EvaluatorConfig cfg;
  cfg.fold_seed = 3;
  cfg.forest_seed = 4;
  cfg.forest.n_trees = 5;
  SubsetEvaluator eval(ds, cfg);

  const double v1 = eval.evaluate(FeatureSubset({2, 0}));
  CHECK(eval.cache_misses() == 1);
  const double v2 = eval.evaluate(FeatureSubset({0, 2}));
  CHECK(eval.cache_hits() == 1);
  CHECK(v1 == v2);
  CHECK(v1 >= 0.0);
  CHECK(v1 <= 1.0);

  CHECK_THROWS_AS(eval.evaluate(FeatureSubset()), ContractError);

  // Cached score equals a fresh evaluation under the same seeds.
  SubsetEvaluator fresh(ds, cfg);
  CHECK(fresh.evaluate(FeatureSubset({0, 2})) == v1);
}

TEST_CASE("pure-noise single feature scores near chance on balanced data") {
  double sum = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    SeededRng rng(100 + static_cast<std::uint64_t>(trial));
    Matrix x(200, 2);
    std::vector<double> y(200);
    for (int i = 0; i < 200; ++i) {
      x(i, 0) = rng.uniform(-1, 1);
      x(i, 1) = rng.uniform(-1, 1);
      y[static_cast<std::size_t>(i)] = static_cast<double>(i % 2);
    }
    data::Dataset ds = make_dataset(std::move(x), std::move(y), Task::kBinary);
    EvaluatorConfig cfg;
    cfg.fold_seed = 7;
    cfg.forest_seed = static_cast<std::uint64_t>(trial);
    cfg.forest.n_trees = 10;
    SubsetEvaluator eval(ds, cfg);
    sum += eval.evaluate(FeatureSubset({0}));
  }
  const double mean = sum / 20.0;
  CHECK(mean > 0.35);
  CHECK(mean < 0.65);
}

TEST_CASE("regression scores are clipped into [0,1] for v") {
  SeededRng rng(31);
  Matrix x(50, 3);
  std::vector<double> y(50);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);
    y[static_cast<std::size_t>(i)] = rng.uniform(-5, 5);  // labels unrelated to features
  }
  data::Dataset ds = make_dataset(std::move(x), std::move(y), Task::kRegression, 0);
  EvaluatorConfig cfg;
  cfg.fold_seed = 9;
  cfg.forest_seed = 2;
  cfg.forest.n_trees = 4;
  SubsetEvaluator eval(ds, cfg);
  FoldScores s = eval.evaluate_detailed(FeatureSubset({0, 1, 2}));
  CHECK(s.v >= 0.0);
  CHECK(s.v <= 1.0);
  CHECK(s.v == std::clamp(s.mean_raw, 0.0, 1.0));
}

TEST_CASE("holdout_score runs and stays in metric range for classification") {
  SeededRng rng(41);
  Matrix x(100, 3);
  std::vector<double> y(100);
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.uniform(-1, 1);
    y[static_cast<std::size_t>(i)] = x(i, 0) > 0 ? 1.0 : 0.0;
  }
  data::Dataset ds = make_dataset(std::move(x), std::move(y), Task::kBinary);
  ForestConfig fc;
  fc.n_trees = 5;
  fc.seed = 11;
  const double m = holdout_score(ds, FeatureSubset({0}), 13, fc);
  CHECK(m >= 0.0);
  CHECK(m <= 1.0);
  CHECK(m > 0.8);  // feature 0 determines the label
}
