#pragma once

#include <span>
#include <vector>

#include "caps/tape.hpp"

namespace caps::diff {

// Differentiable operations over tape tensors. Each function validates
// shapes, computes the forward value eagerly and records a backward rule when
// any operand requires a gradient. Shapes are exactly as stated; there is no
// implicit broadcasting beyond the *_rowwise / *_bcast variants.

// C = A * B, [m x k] x [k x n] -> [m x n].
Var matmul(Var a, Var b);

// C = A * B^T, [m x k] x [n x k] -> [m x n].
Var matmul_nt(Var a, Var b);

// Elementwise, equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);

// Elementwise with a compile-time constant.
Var scale(Var x, double c);
Var add_const(Var x, double c);

Var exp(Var x);
Var relu(Var x);

// Clamp into [lo, hi]; gradient passes where lo <= x <= hi.
Var clamp(Var x, double lo, double hi);

// Elementwise min; ties route the gradient to `a`.
Var minimum(Var a, Var b);

// X [m x n] op v [1 x n], applied to every row.
Var add_rowwise(Var x, Var v);
Var mul_rowwise(Var x, Var v);

// X [m x n] + s [1 x 1] broadcast to every entry.
Var add_scalar_bcast(Var x, Var s);

// Reductions.
Var sum_rows(Var x);  // [m x n] -> [m x 1]
Var sum_all(Var x);   // -> [1 x 1]
Var mean_all(Var x);  // -> [1 x 1]

// Per-row softmax with the max-subtraction guard; rows sum to 1.
Var row_softmax(Var x);

// Per-row normalization with population variance and epsilon 1e-5:
//   y = (x - mean) / sqrt(var + eps) .* gain + bias,  gain/bias [1 x n].
Var layer_norm(Var x, Var gain, Var bias);

// Gathers rows of `table` [V x d] at `ids`; backward scatters into the table.
Var lookup_rows(Var table, std::span<const int> ids);

// Mean over rows of -log softmax(logits)[row][target], stable via
// log-sum-exp. logits [m x V], targets length m with values in [0, V).
Var cross_entropy_logits(Var logits, std::span<const int> targets);

// Column concatenation / slicing.
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);

// x * w + b with b [1 x n] broadcast over rows.
inline Var affine(Var x, Var w, Var b) { return add_rowwise(matmul(x, w), b); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var x) { return scale(x, c); }

}  // namespace caps::diff
