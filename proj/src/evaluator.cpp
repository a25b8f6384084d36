#include "caps/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "caps/metrics.hpp"
#include "caps/rng.hpp"

namespace caps::forest {

namespace {

Matrix take_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<double> take_labels(const std::vector<double>& y, const std::vector<Eigen::Index>& rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (Eigen::Index r : rows) out.push_back(y[static_cast<std::size_t>(r)]);
  return out;
}

double task_metric(data::Task task, std::span<const double> y_true, std::span<const double> y_pred,
                   int classes, int positive_class) {
  switch (task) {
    case data::Task::kBinary:
      return data::f1_binary(y_true, y_pred, positive_class).f1;
    case data::Task::kMulticlass:
      return data::micro_f1(y_true, y_pred, classes);
    case data::Task::kRegression:
      return data::one_minus_rae(y_true, y_pred);
  }
  throw ContractError("task_metric: unknown task");
}

}  // namespace

double split_score(const data::Dataset& dataset, const FeatureSubset& subset,
                   const std::vector<Eigen::Index>& train, const std::vector<Eigen::Index>& test,
                   const ForestConfig& forest_config, int positive_class, int fit_threads) {
  const Matrix restricted = dataset.restrict_columns(subset);
  const Matrix x_train = take_rows(restricted, train);
  const Matrix x_test = take_rows(restricted, test);
  const std::vector<double> y_train = take_labels(dataset.y, train);
  const std::vector<double> y_test = take_labels(dataset.y, test);
  Forest f = fit_forest(x_train, y_train, dataset.task, forest_config, fit_threads);
  // Prediction histograms must cover every class in the dataset, not just the
  // ones present in this training split.
  if (dataset.task != data::Task::kRegression) f.classes = std::max(f.classes, dataset.class_count());
  const std::vector<double> pred = predict_forest(f, x_test);
  return task_metric(dataset.task, y_test, pred, dataset.class_count(), positive_class);
}

SubsetEvaluator::SubsetEvaluator(const data::Dataset& dataset, EvaluatorConfig config)
    : dataset_(dataset), config_(std::move(config)),
      folds_(data::kfold(dataset.n(), config_.folds, config_.fold_seed)) {}

FoldScores SubsetEvaluator::compute(const FeatureSubset& subset) const {
  if (subset.empty()) throw ContractError("evaluate_subset: empty subset");
  FoldScores scores;
  scores.per_fold.reserve(static_cast<std::size_t>(folds_.k));
  for (int fold = 0; fold < folds_.k; ++fold) {
    ForestConfig fc = config_.forest;
    fc.seed = derive_seed(config_.forest_seed, "fold-" + std::to_string(fold));
    const double m = split_score(dataset_, subset, folds_.complement_indices(fold),
                                 folds_.fold_indices(fold), fc, config_.positive_class,
                                 config_.fit_threads);
    scores.per_fold.push_back(m);
  }
  double sum = 0.0;
  for (double m : scores.per_fold) sum += m;
  scores.mean_raw = sum / static_cast<double>(scores.per_fold.size());
  scores.v = std::clamp(scores.mean_raw, 0.0, 1.0);
  return scores;
}

double SubsetEvaluator::evaluate(const FeatureSubset& subset) {
  if (subset.empty()) throw ContractError("evaluate_subset: empty subset");
  const std::string key = subset.key();
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++hits_;
      return it->second;
    }
    ++misses_;
  }
  const double v = compute(subset).v;
  {
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(key, v);
  }
  return v;
}

FoldScores SubsetEvaluator::evaluate_detailed(const FeatureSubset& subset) {
  FoldScores scores = compute(subset);
  std::lock_guard<std::mutex> lock(mu_);
  cache_.emplace(subset.key(), scores.v);
  return scores;
}

double holdout_score(const data::Dataset& dataset, const FeatureSubset& subset,
                     std::uint64_t split_seed, const ForestConfig& forest_config,
                     int positive_class) {
  const Eigen::Index n = dataset.n();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  SeededRng rng(split_seed);
  rng.shuffle(order);
  const std::size_t train_count = static_cast<std::size_t>(static_cast<double>(n) * 0.8);
  if (train_count == 0 || train_count == order.size()) {
    throw ContractError("holdout_score: dataset too small for an 80/20 split");
  }
  std::vector<Eigen::Index> train(order.begin(), order.begin() + static_cast<long>(train_count));
  std::vector<Eigen::Index> test(order.begin() + static_cast<long>(train_count), order.end());
  return split_score(dataset, subset, train, test, forest_config, positive_class);
}

}  // namespace caps::forest
