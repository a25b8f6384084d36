#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "caps/common.hpp"
#include "caps/dataset.hpp"

namespace caps::forest {

struct ForestConfig {
  int n_trees = 20;
  // Split-candidate count per node; 0 means ceil(sqrt(column count)).
  int max_features = 0;
  int min_samples_leaf = 1;
  int max_depth = -1;  // -1: unlimited
  bool bootstrap = true;
  std::uint64_t seed = 0;

  int resolved_max_features(int columns) const;
};

// CART node: either an internal split {feature, threshold, children} or a
// leaf {class histogram | mean}. Split gain is Gini impurity decrease for
// classification and variance reduction for regression. Tie-breaking is
// deterministic: lowest feature index, then lowest threshold; thresholds are
// midpoints between consecutive sorted unique values.
struct TreeNode {
  bool is_leaf = true;
  int feature = -1;        // column index within the restricted matrix
  double threshold = 0.0;  // go left when x <= threshold
  int left = -1;
  int right = -1;
  std::vector<double> histogram;  // class counts (classification leaves)
  double mean = 0.0;              // regression leaves
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict_row(const Matrix& x, Eigen::Index row) const;
};

struct Forest {
  std::vector<Tree> trees;
  data::Task task = data::Task::kBinary;
  int columns = 0;
  int classes = 0;
};

// Fits n_trees CART trees, each on its own seeded bootstrap sample (n draws
// with replacement) and its own split-candidate stream, so results are
// identical whether trees are fit sequentially or in parallel.
Forest fit_forest(const Matrix& x, std::span<const double> y, data::Task task,
                  const ForestConfig& config, int threads = 1);

// Majority vote (ties toward the lower class id) or mean over trees.
std::vector<double> predict_forest(const Forest& forest, const Matrix& x);

// Fraction of trees voting class 1; report-only score for ROC/AUC.
std::vector<double> predict_positive_fraction(const Forest& forest, const Matrix& x);

}  // namespace caps::forest
