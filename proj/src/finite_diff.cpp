#include "caps/finite_diff.hpp"

#include <cmath>

namespace caps::diff {

std::vector<Matrix> finite_diff_grad(const std::function<double()>& f,
                                     const std::vector<Matrix*>& params, double h) {
  if (h <= 0.0) throw ContractError("finite_diff_grad: h must be positive");
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (Matrix* p : params) {
    Matrix g(p->rows(), p->cols());
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      double* coeff = p->data() + i;
      const double saved = *coeff;
      *coeff = saved + h;
      const double up = f();
      *coeff = saved - h;
      const double down = f();
      *coeff = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double max_rel_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric,
                     double floor) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError("max_rel_error: list sizes disagree");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const Matrix& a = analytic[k];
    const Matrix& n = numeric[k];
    if (a.rows() != n.rows() || a.cols() != n.cols()) {
      throw DimensionError("max_rel_error: " + shape_str(a) + " vs " + shape_str(n));
    }
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double av = a.data()[i];
      const double nv = n.data()[i];
      const double denom = std::max({floor, std::abs(av), std::abs(nv)});
      worst = std::max(worst, std::abs(av - nv) / denom);
    }
  }
  return worst;
}

}  // namespace caps::diff
