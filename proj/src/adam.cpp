#include "caps/adam.hpp"

#include <cmath>
#include <string>

namespace caps::diff {

void AdamState::init(const std::vector<Matrix*>& params) {
  first_moment.clear();
  second_moment.clear();
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const Matrix* p : params) {
    first_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
    second_moment.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  step_count = 0;
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads,
               AdamState& state, double lr) {
  if (!state.initialized()) state.init(params);
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads vs " +
                         std::to_string(state.first_moment.size()) + " moment slots");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    if (p.rows() != g.rows() || p.cols() != g.cols()) {
      throw DimensionError("adam_step: param " + shape_str(p) + " vs grad " + shape_str(g));
    }
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = (state.beta2 * v.array() + (1.0 - state.beta2) * g.array().square()).matrix();
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  }
}

}  // namespace caps::diff
