#include "caps/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "caps/rng.hpp"

namespace caps::forest {

namespace {

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

double gini_from_counts(const std::vector<double>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double sum_sq = 0.0;
  for (double c : counts) sum_sq += c * c;
  return 1.0 - sum_sq / (total * total);
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, data::Task task,
              const ForestConfig& config, int classes, SeededRng& rng)
      : x_(x), y_(y), task_(task), config_(config), classes_(classes), rng_(rng) {}

  Tree build(std::vector<Eigen::Index> rows) {
    tree_.nodes.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  bool is_classification() const { return task_ != data::Task::kRegression; }

  int make_leaf(const std::vector<Eigen::Index>& rows) {
    TreeNode node;
    node.is_leaf = true;
    if (is_classification()) {
      node.histogram.assign(static_cast<std::size_t>(classes_), 0.0);
      for (Eigen::Index r : rows) node.histogram[static_cast<std::size_t>(y_[static_cast<std::size_t>(r)])] += 1.0;
    } else {
      double sum = 0.0;
      for (Eigen::Index r : rows) sum += y_[static_cast<std::size_t>(r)];
      node.mean = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());
    }
    tree_.nodes.push_back(std::move(node));
    return static_cast<int>(tree_.nodes.size()) - 1;
  }

  // Candidate columns: max_features distinct indices from this tree's stream,
  // evaluated in ascending order so equal gains resolve to the lowest index.
  std::vector<int> draw_candidates() {
    const int columns = static_cast<int>(x_.cols());
    const int k = config_.resolved_max_features(columns);
    std::vector<int> all(static_cast<std::size_t>(columns));
    std::iota(all.begin(), all.end(), 0);
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(columns - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    all.resize(static_cast<std::size_t>(k));
    std::sort(all.begin(), all.end());
    return all;
  }

  SplitChoice best_split_classification(const std::vector<Eigen::Index>& rows, int col,
                                        std::vector<std::pair<double, double>>& scratch) const {
    scratch.clear();
    for (Eigen::Index r : rows) scratch.emplace_back(x_(r, col), y_[static_cast<std::size_t>(r)]);
    std::sort(scratch.begin(), scratch.end());

    const double n = static_cast<double>(scratch.size());
    std::vector<double> total(static_cast<std::size_t>(classes_), 0.0);
    for (const auto& [v, label] : scratch) total[static_cast<std::size_t>(label)] += 1.0;
    const double parent = gini_from_counts(total, n);

    SplitChoice best;
    std::vector<double> left(static_cast<std::size_t>(classes_), 0.0);
    double n_left = 0.0;
    for (std::size_t i = 0; i + 1 < scratch.size(); ++i) {
      left[static_cast<std::size_t>(scratch[i].second)] += 1.0;
      n_left += 1.0;
      if (scratch[i].first == scratch[i + 1].first) continue;
      const double n_right = n - n_left;
      if (n_left < config_.min_samples_leaf || n_right < config_.min_samples_leaf) continue;
      double sum_sq_left = 0.0, sum_sq_right = 0.0;
      for (std::size_t c = 0; c < left.size(); ++c) {
        sum_sq_left += left[c] * left[c];
        const double rc = total[c] - left[c];
        sum_sq_right += rc * rc;
      }
      const double gini_left = 1.0 - sum_sq_left / (n_left * n_left);
      const double gini_right = 1.0 - sum_sq_right / (n_right * n_right);
      const double gain = parent - (n_left / n) * gini_left - (n_right / n) * gini_right;
      if (gain > best.gain) {
        best.found = true;
        best.feature = col;
        best.threshold = 0.5 * (scratch[i].first + scratch[i + 1].first);
        best.gain = gain;
      }
    }
    return best;
  }

  SplitChoice best_split_regression(const std::vector<Eigen::Index>& rows, int col,
                                    std::vector<std::pair<double, double>>& scratch) const {
    scratch.clear();
    for (Eigen::Index r : rows) scratch.emplace_back(x_(r, col), y_[static_cast<std::size_t>(r)]);
    std::sort(scratch.begin(), scratch.end());

    const double n = static_cast<double>(scratch.size());
    double sum = 0.0, sum_sq = 0.0;
    for (const auto& [v, t] : scratch) {
      sum += t;
      sum_sq += t * t;
    }
    const double parent_var = sum_sq / n - (sum / n) * (sum / n);

    SplitChoice best;
    double ls = 0.0, lss = 0.0, n_left = 0.0;
    for (std::size_t i = 0; i + 1 < scratch.size(); ++i) {
      ls += scratch[i].second;
      lss += scratch[i].second * scratch[i].second;
      n_left += 1.0;
      if (scratch[i].first == scratch[i + 1].first) continue;
      const double n_right = n - n_left;
      if (n_left < config_.min_samples_leaf || n_right < config_.min_samples_leaf) continue;
      const double rs = sum - ls;
      const double rss = sum_sq - lss;
      const double var_left = lss / n_left - (ls / n_left) * (ls / n_left);
      const double var_right = rss / n_right - (rs / n_right) * (rs / n_right);
      const double gain = parent_var - (n_left / n) * var_left - (n_right / n) * var_right;
      if (gain > best.gain) {
        best.found = true;
        best.feature = col;
        best.threshold = 0.5 * (scratch[i].first + scratch[i + 1].first);
        best.gain = gain;
      }
    }
    return best;
  }

  bool node_is_pure(const std::vector<Eigen::Index>& rows) const {
    const double first = y_[static_cast<std::size_t>(rows.front())];
    for (Eigen::Index r : rows) {
      if (y_[static_cast<std::size_t>(r)] != first) return false;
    }
    return true;
  }

  int grow(std::vector<Eigen::Index> rows, int depth) {
    const bool depth_capped = config_.max_depth >= 0 && depth >= config_.max_depth;
    if (rows.size() < 2 * static_cast<std::size_t>(config_.min_samples_leaf) ||
        rows.size() < 2 || depth_capped || node_is_pure(rows)) {
      return make_leaf(rows);
    }

    const auto candidates = draw_candidates();
    std::vector<std::pair<double, double>> scratch;
    scratch.reserve(rows.size());
    SplitChoice best;
    for (int col : candidates) {
      const SplitChoice s = is_classification() ? best_split_classification(rows, col, scratch)
                                                : best_split_regression(rows, col, scratch);
      // Strict > keeps the first (lowest feature, lowest threshold) on ties.
      if (s.found && s.gain > best.gain) best = s;
    }
    if (!best.found) return make_leaf(rows);

    std::vector<Eigen::Index> left_rows, right_rows;
    for (Eigen::Index r : rows) {
      (x_(r, best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    TreeNode node;
    node.is_leaf = false;
    node.feature = best.feature;
    node.threshold = best.threshold;
    tree_.nodes.push_back(std::move(node));
    const int self = static_cast<int>(tree_.nodes.size()) - 1;
    const int left = grow(std::move(left_rows), depth + 1);
    const int right = grow(std::move(right_rows), depth + 1);
    tree_.nodes[static_cast<std::size_t>(self)].left = left;
    tree_.nodes[static_cast<std::size_t>(self)].right = right;
    return self;
  }

  const Matrix& x_;
  std::span<const double> y_;
  data::Task task_;
  const ForestConfig& config_;
  int classes_;
  SeededRng& rng_;
  Tree tree_;
};

double leaf_class(const TreeNode& node) {
  // Argmax with ties toward the lowest class id.
  int best = 0;
  for (std::size_t c = 1; c < node.histogram.size(); ++c) {
    if (node.histogram[c] > node.histogram[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return static_cast<double>(best);
}

}  // namespace

int ForestConfig::resolved_max_features(int columns) const {
  if (columns < 1) throw ContractError("forest: no feature columns");
  int k = max_features > 0 ? max_features
                           : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(columns))));
  return std::min(k, columns);
}

double Tree::predict_row(const Matrix& x, Eigen::Index row) const {
  int at = 0;
  while (!nodes[static_cast<std::size_t>(at)].is_leaf) {
    const TreeNode& n = nodes[static_cast<std::size_t>(at)];
    at = x(row, n.feature) <= n.threshold ? n.left : n.right;
  }
  const TreeNode& leaf = nodes[static_cast<std::size_t>(at)];
  return leaf.histogram.empty() ? leaf.mean : leaf_class(leaf);
}

Forest fit_forest(const Matrix& x, std::span<const double> y, data::Task task,
                  const ForestConfig& config, int threads) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw DimensionError("fit_forest: " + std::to_string(x.rows()) + " rows vs " +
                         std::to_string(y.size()) + " labels");
  }
  if (x.rows() < 2) throw ContractError("fit_forest: need at least 2 rows");
  if (config.n_trees < 1) throw ContractError("fit_forest: n_trees must be >= 1");

  int classes = 0;
  if (task != data::Task::kRegression) {
    for (double label : y) classes = std::max(classes, static_cast<int>(label) + 1);
    int distinct = 0;
    std::vector<char> seen(static_cast<std::size_t>(classes), 0);
    for (double label : y) {
      char& flag = seen[static_cast<std::size_t>(label)];
      if (!flag) {
        flag = 1;
        ++distinct;
      }
    }
    if (distinct < 2) throw ContractError("fit_forest: classification target has a single class");
  }

  Forest forest;
  forest.task = task;
  forest.columns = static_cast<int>(x.cols());
  forest.classes = classes;
  forest.trees.resize(static_cast<std::size_t>(config.n_trees));

  const Eigen::Index n = x.rows();
  auto fit_one = [&](std::size_t i) {
    // Per-tree stream: bootstrap draws first, then split candidates.
    SeededRng rng(derive_seed(config.seed, "tree-" + std::to_string(i)));
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(n));
    if (config.bootstrap) {
      for (Eigen::Index k = 0; k < n; ++k) {
        rows.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
      }
    } else {
      for (Eigen::Index k = 0; k < n; ++k) rows.push_back(k);
    }
    TreeBuilder builder(x, y, task, config, classes, rng);
    forest.trees[i] = builder.build(std::move(rows));
  };

  if (threads <= 1 || config.n_trees == 1) {
    for (std::size_t i = 0; i < forest.trees.size(); ++i) fit_one(i);
  } else {
    parallel_chunks(forest.trees.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) fit_one(i);
    });
  }
  return forest;
}

std::vector<double> predict_forest(const Forest& forest, const Matrix& x) {
  if (static_cast<int>(x.cols()) != forest.columns) {
    throw DimensionError("predict_forest: trained on " + std::to_string(forest.columns) +
                         " columns, got " + std::to_string(x.cols()));
  }
  std::vector<double> out(static_cast<std::size_t>(x.rows()), 0.0);
  if (forest.task == data::Task::kRegression) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double sum = 0.0;
      for (const Tree& t : forest.trees) sum += t.predict_row(x, r);
      out[static_cast<std::size_t>(r)] = sum / static_cast<double>(forest.trees.size());
    }
    return out;
  }
  std::vector<int> votes(static_cast<std::size_t>(forest.classes));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::fill(votes.begin(), votes.end(), 0);
    for (const Tree& t : forest.trees) {
      votes[static_cast<std::size_t>(t.predict_row(x, r))] += 1;
    }
    int best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = static_cast<double>(best);
  }
  return out;
}

std::vector<double> predict_positive_fraction(const Forest& forest, const Matrix& x) {
  if (forest.task == data::Task::kRegression) {
    throw ContractError("predict_positive_fraction: classification forests only");
  }
  std::vector<double> out(static_cast<std::size_t>(x.rows()), 0.0);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int ones = 0;
    for (const Tree& t : forest.trees) {
      if (t.predict_row(x, r) == 1.0) ++ones;
    }
    out[static_cast<std::size_t>(r)] = static_cast<double>(ones) / static_cast<double>(forest.trees.size());
  }
  return out;
}

}  // namespace caps::forest
