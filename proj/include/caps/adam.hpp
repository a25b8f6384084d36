#pragma once

#include <vector>

#include "caps/common.hpp"

namespace caps::diff {

// Bias-corrected Adam. Moment arrays mirror the parameter list one-to-one;
// step_count increments by exactly 1 per update.
struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void init(const std::vector<Matrix*>& params);
  bool initialized() const { return !first_moment.empty(); }
};

// One update: m = b1*m + (1-b1)*g, v = b2*v + (1-b2)*g^2,
// p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr);

}  // namespace caps::diff
