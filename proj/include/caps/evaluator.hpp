#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "caps/dataset.hpp"
#include "caps/forest.hpp"

namespace caps::forest {

struct EvaluatorConfig {
  int folds = 5;
  std::uint64_t fold_seed = 0;
  std::uint64_t forest_seed = 0;
  ForestConfig forest;
  int positive_class = 1;  // binary F1 positive class
  int fit_threads = 1;
};

struct FoldScores {
  std::vector<double> per_fold;  // raw metric per held-out fold
  double mean_raw = 0.0;         // unclipped mean
  double v = 0.0;                // mean clipped into [0, 1]
};

// The downstream model M: v(subset) = mean over k folds of the task metric on
// the held-out fold (F1 / micro-F1 / 1-RAE), forest refit per fold with a
// fold-derived seed. Scores are memoized by canonical subset key; lookups and
// inserts are linearizable, so the evaluator is safe to share across threads.
class SubsetEvaluator {
 public:
  SubsetEvaluator(const data::Dataset& dataset, EvaluatorConfig config);

  // Cached score in [0, 1].
  double evaluate(const FeatureSubset& subset);

  // Uncached detailed evaluation (also primes the cache with the mean).
  FoldScores evaluate_detailed(const FeatureSubset& subset);

  const data::FoldPlan& folds() const { return folds_; }
  const data::Dataset& dataset() const { return dataset_; }
  const EvaluatorConfig& config() const { return config_; }

  std::uint64_t cache_hits() const { return hits_; }
  std::uint64_t cache_misses() const { return misses_; }

 private:
  FoldScores compute(const FeatureSubset& subset) const;

  const data::Dataset& dataset_;
  EvaluatorConfig config_;
  data::FoldPlan folds_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, double> cache_;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
};

// Single 80/20 holdout score (report-only companion to the CV mean).
double holdout_score(const data::Dataset& dataset, const FeatureSubset& subset,
                     std::uint64_t split_seed, const ForestConfig& forest_config,
                     int positive_class = 1);

// Task metric on one (train, test) pair; exposed for oracle-style tests.
double split_score(const data::Dataset& dataset, const FeatureSubset& subset,
                   const std::vector<Eigen::Index>& train, const std::vector<Eigen::Index>& test,
                   const ForestConfig& forest_config, int positive_class = 1, int fit_threads = 1);

}  // namespace caps::forest
