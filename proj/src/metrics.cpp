#include "caps/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace caps::data {

namespace {

void require_equal_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace

BinaryScore f1_binary(std::span<const double> y_true, std::span<const double> y_pred,
                      int positive_class) {
  require_equal_lengths(y_true.size(), y_pred.size(), "f1_binary");
  long tp = 0, fp = 0, fn = 0;
  const double pos = static_cast<double>(positive_class);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const bool truth = y_true[i] == pos;
    const bool pred = y_pred[i] == pos;
    if (pred && truth) ++tp;
    if (pred && !truth) ++fp;
    if (!pred && truth) ++fn;
  }
  BinaryScore s;
  s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double micro_f1(std::span<const double> y_true, std::span<const double> y_pred, int classes) {
  require_equal_lengths(y_true.size(), y_pred.size(), "micro_f1");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int truth = static_cast<int>(y_true[i]);
    const int pred = static_cast<int>(y_pred[i]);
    if (truth < 0 || truth >= classes) {
      throw IndexError("micro_f1: label " + std::to_string(truth) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    if (pred < 0 || pred >= classes) {
      throw IndexError("micro_f1: prediction " + std::to_string(pred) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    if (pred == truth) {
      ++tp;
    } else {
      ++fp;  // predicted class gains a false positive...
      ++fn;  // ...and the true class a false negative.
    }
  }
  const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn);
  return denom > 0.0 ? static_cast<double>(tp) / denom : 0.0;
}

double one_minus_rae(std::span<const double> y_true, std::span<const double> y_pred) {
  require_equal_lengths(y_true.size(), y_pred.size(), "one_minus_rae");
  if (y_true.empty()) throw ContractError("one_minus_rae: empty input");
  const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) /
                      static_cast<double>(y_true.size());
  double abs_err = 0.0, abs_dev = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    abs_err += std::abs(y_true[i] - y_pred[i]);
    abs_dev += std::abs(y_true[i] - mean);
  }
  if (abs_dev <= 0.0) throw ContractError("one_minus_rae: constant y_true, denominator undefined");
  return 1.0 - abs_err / abs_dev;
}

double accuracy(std::span<const double> y_true, std::span<const double> y_pred) {
  require_equal_lengths(y_true.size(), y_pred.size(), "accuracy");
  if (y_true.empty()) return 0.0;
  long hit = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] == y_pred[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(y_true.size());
}

double one_minus_mae(std::span<const double> y_true, std::span<const double> y_pred) {
  require_equal_lengths(y_true.size(), y_pred.size(), "one_minus_mae");
  double err = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) err += std::abs(y_true[i] - y_pred[i]);
  return 1.0 - err / static_cast<double>(y_true.size());
}

double one_minus_mse(std::span<const double> y_true, std::span<const double> y_pred) {
  require_equal_lengths(y_true.size(), y_pred.size(), "one_minus_mse");
  double err = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double d = y_true[i] - y_pred[i];
    err += d * d;
  }
  return 1.0 - err / static_cast<double>(y_true.size());
}

double one_minus_rmse(std::span<const double> y_true, std::span<const double> y_pred) {
  return 1.0 - std::sqrt(1.0 - one_minus_mse(y_true, y_pred));
}

double roc_auc(std::span<const double> y_true, std::span<const double> scores) {
  require_equal_lengths(y_true.size(), scores.size(), "roc_auc");
  const std::size_t n = y_true.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Average ranks across score ties.
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  long pos = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (y_true[k] == 1.0) {
      pos_rank_sum += rank[k];
      ++pos;
    }
  }
  const long neg = static_cast<long>(n) - pos;
  if (pos == 0 || neg == 0) throw ContractError("roc_auc: needs both classes present");
  const double u = pos_rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

}  // namespace caps::data
