#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caps/common.hpp"

namespace caps::data {

enum class Task { kBinary, kMulticlass, kRegression };

std::string task_name(Task t);
Task task_from_name(const std::string& name);

// In-memory dataset. Immutable after load; safe for concurrent reads.
struct Dataset {
  Matrix x;                                // n x D
  std::vector<double> y;                   // class ids (as doubles) or targets
  std::vector<std::string> feature_names;  // length D
  std::vector<std::string> class_names;    // label value per class id (classification)
  Task task = Task::kBinary;
  int dropped_rows = 0;

  Eigen::Index n() const { return x.rows(); }
  int feature_count() const { return static_cast<int>(x.cols()); }
  int class_count() const { return static_cast<int>(class_names.size()); }

  // Column-restricted copy X[:, subset].
  Matrix restrict_columns(const FeatureSubset& subset) const;
};

// CSV loader: UTF-8, header row, comma separator, '.' decimal point. Lines
// starting with '#' are skipped. Rows with unparseable feature cells are
// dropped (counted in dropped_rows). Task is inferred unless overridden:
// regression if any label is a non-integer real, binary at exactly two
// classes, multiclass otherwise; string labels map to 0-based ids in
// first-appearance order.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 std::optional<Task> task_override = std::nullopt);

// k-fold assignment: seeded shuffle, round-robin. Deterministic in (n, k, seed).
struct FoldPlan {
  int k = 5;
  std::vector<int> assignment;  // length n, values in [0, k)
  std::uint64_t seed = 0;

  std::vector<Eigen::Index> fold_indices(int fold) const;
  std::vector<Eigen::Index> complement_indices(int fold) const;
};

FoldPlan kfold(Eigen::Index n, int k, std::uint64_t seed);

// Eq.-style one-hot representation of a subset over D features.
RowVector one_hot_rep(const FeatureSubset& subset, int d);

// Inverse of one_hot_rep (entries >= 0.5 count as selected).
FeatureSubset subset_from_one_hot(const RowVector& rep);

}  // namespace caps::data
