#pragma once

#include <span>

#include "caps/common.hpp"

namespace caps::data {

struct BinaryScore {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// F1 = 2PR/(P+R); any zero denominator yields 0. Labels must be in {0, 1}.
BinaryScore f1_binary(std::span<const double> y_true, std::span<const double> y_pred,
                      int positive_class = 1);

// Micro-averaged F1 over C classes: global TP / (TP + (FP+FN)/2). Equals
// plain accuracy for single-label prediction.
double micro_f1(std::span<const double> y_true, std::span<const double> y_pred, int classes);

// 1 - sum|y - yhat| / sum|y - mean(y)|. May be negative; callers clip for
// reward use. Constant y_true has no defined denominator.
double one_minus_rae(std::span<const double> y_true, std::span<const double> y_pred);

// Report-only metrics.
double accuracy(std::span<const double> y_true, std::span<const double> y_pred);
double one_minus_mae(std::span<const double> y_true, std::span<const double> y_pred);
double one_minus_mse(std::span<const double> y_true, std::span<const double> y_pred);
double one_minus_rmse(std::span<const double> y_true, std::span<const double> y_pred);

// Rank-statistic ROC/AUC from positive-class scores (ties get average rank).
double roc_auc(std::span<const double> y_true, std::span<const double> scores);

}  // namespace caps::data
