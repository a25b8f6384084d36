#pragma once

#include <functional>
#include <vector>

#include "caps/common.hpp"

namespace caps::diff {

// Central-difference gradient oracle: (f(p+h) - f(p-h)) / (2h) per
// coordinate. `f` must be a deterministic function of the matrices behind
// `params`; each entry is perturbed in place and restored. Independent of the
// tape machinery by construction.
std::vector<Matrix> finite_diff_grad(const std::function<double()>& f,
                                     const std::vector<Matrix*>& params, double h = 1e-5);

// max over coordinates of |a - n| / max(floor, |a|, |n|). The floor keeps the
// quotient meaningful where both gradients are (numerically) zero.
double max_rel_error(const std::vector<Matrix>& analytic, const std::vector<Matrix>& numeric,
                     double floor = 1e-5);

}  // namespace caps::diff
