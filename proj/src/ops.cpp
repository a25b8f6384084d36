#include "caps/ops.hpp"

#include <cmath>
#include <string>

namespace caps::diff {

namespace {

using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;

Tape& tape_of(Var a) {
  if (!a.valid()) throw ContractError("op: invalid tensor handle");
  return *a.tape;
}

Tape& same_tape(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape != &t) throw ContractError("op: operands live on different tapes");
  return t;
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

void require_row_vector(const Matrix& v, Eigen::Index n, const char* op) {
  if (v.rows() != 1 || v.cols() != n) {
    throw DimensionError(std::string(op) + ": expected [1x" + std::to_string(n) + "], got " + shape_str(v));
  }
}

bool any_grad(Var a) { return a.tape->requires_grad(a); }
bool any_grad(Var a, Var b) { return a.tape->requires_grad(a) || b.tape->requires_grad(b); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(av) + " vs " + shape_str(bv));
  }
  Matrix out = av * bv;
  return t.emit(std::move(out), any_grad(a, b), [a, b](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(a.id, Matrix(g * tp.value(b).transpose()));
    tp.accumulate_grad(b.id, Matrix(tp.value(a).transpose() * g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(av) + " vs " + shape_str(bv));
  }
  Matrix out = av * bv.transpose();
  return t.emit(std::move(out), any_grad(a, b), [a, b](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(a.id, Matrix(g * tp.value(b)));
    tp.accumulate_grad(b.id, Matrix(g.transpose() * tp.value(a)));
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a) + t.value(b);
  return t.emit(std::move(out), any_grad(a, b), [a, b](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(a.id, g);
    tp.accumulate_grad(b.id, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "sub");
  Matrix out = t.value(a) - t.value(b);
  return t.emit(std::move(out), any_grad(a, b), [a, b](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(a.id, g);
    tp.accumulate_grad(b.id, Matrix(-g));
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "mul");
  Matrix out = t.value(a).cwiseProduct(t.value(b));
  return t.emit(std::move(out), any_grad(a, b), [a, b](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(a.id, Matrix(g.cwiseProduct(tp.value(b))));
    tp.accumulate_grad(b.id, Matrix(g.cwiseProduct(tp.value(a))));
  });
}

Var scale(Var x, double c) {
  Tape& t = tape_of(x);
  Matrix out = t.value(x) * c;
  return t.emit(std::move(out), any_grad(x), [x, c](Tape& tp, int out_id) {
    tp.accumulate_grad(x.id, Matrix(tp.grad(Var{&tp, out_id}) * c));
  });
}

Var add_const(Var x, double c) {
  Tape& t = tape_of(x);
  Matrix out = (t.value(x).array() + c).matrix();
  return t.emit(std::move(out), any_grad(x), [x](Tape& tp, int out_id) {
    tp.accumulate_grad(x.id, tp.grad(Var{&tp, out_id}));
  });
}

Var exp(Var x) {
  Tape& t = tape_of(x);
  Matrix out = t.value(x).array().exp().matrix();
  return t.emit(std::move(out), any_grad(x), [x](Tape& tp, int out_id) {
    Var out_v{&tp, out_id};
    tp.accumulate_grad(x.id, Matrix(tp.grad(out_v).cwiseProduct(tp.value(out_v))));
  });
}

Var relu(Var x) {
  Tape& t = tape_of(x);
  Matrix out = t.value(x).cwiseMax(0.0);
  return t.emit(std::move(out), any_grad(x), [x](Tape& tp, int out_id) {
    // Subgradient at 0 is 0.
    const Matrix mask = (tp.value(x).array() > 0.0).cast<double>().matrix();
    tp.accumulate_grad(x.id, Matrix(tp.grad(Var{&tp, out_id}).cwiseProduct(mask)));
  });
}

Var clamp(Var x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  Tape& t = tape_of(x);
  Matrix out = t.value(x).cwiseMax(lo).cwiseMin(hi);
  return t.emit(std::move(out), any_grad(x), [x, lo, hi](Tape& tp, int out_id) {
    const auto& v = tp.value(x).array();
    const Matrix mask = (v >= lo && v <= hi).cast<double>().matrix();
    tp.accumulate_grad(x.id, Matrix(tp.grad(Var{&tp, out_id}).cwiseProduct(mask)));
  });
}

Var minimum(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(t.value(a), t.value(b), "minimum");
  Matrix out = t.value(a).cwiseMin(t.value(b));
  return t.emit(std::move(out), any_grad(a, b), [a, b](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    const Matrix take_a = (tp.value(a).array() <= tp.value(b).array()).cast<double>().matrix();
    tp.accumulate_grad(a.id, Matrix(g.cwiseProduct(take_a)));
    tp.accumulate_grad(b.id, Matrix(g.cwiseProduct((1.0 - take_a.array()).matrix())));
  });
}

Var add_rowwise(Var x, Var v) {
  Tape& t = same_tape(x, v);
  const Matrix& xv = t.value(x);
  require_row_vector(t.value(v), xv.cols(), "add_rowwise");
  Matrix out = xv.rowwise() + t.value(v).row(0);
  return t.emit(std::move(out), any_grad(x, v), [x, v](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(x.id, g);
    tp.accumulate_grad(v.id, Matrix(g.colwise().sum()));
  });
}

Var mul_rowwise(Var x, Var v) {
  Tape& t = same_tape(x, v);
  const Matrix& xv = t.value(x);
  require_row_vector(t.value(v), xv.cols(), "mul_rowwise");
  Matrix out = (xv.array().rowwise() * RowArray(t.value(v).row(0).array())).matrix();
  return t.emit(std::move(out), any_grad(x, v), [x, v](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(x.id, Matrix((g.array().rowwise() * RowArray(tp.value(v).row(0).array())).matrix()));
    tp.accumulate_grad(v.id, Matrix(g.cwiseProduct(tp.value(x)).colwise().sum()));
  });
}

Var add_scalar_bcast(Var x, Var s) {
  Tape& t = same_tape(x, s);
  const Matrix& sv = t.value(s);
  if (sv.rows() != 1 || sv.cols() != 1) {
    throw DimensionError("add_scalar_bcast: expected scalar, got " + shape_str(sv));
  }
  Matrix out = (t.value(x).array() + sv(0, 0)).matrix();
  return t.emit(std::move(out), any_grad(x, s), [x, s](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(x.id, g);
    Matrix gs(1, 1);
    gs(0, 0) = g.sum();
    tp.accumulate_grad(s.id, gs);
  });
}

Var sum_rows(Var x) {
  Tape& t = tape_of(x);
  Matrix out = x.tape->value(x).rowwise().sum();
  return t.emit(std::move(out), any_grad(x), [x](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(x.id, Matrix(g.replicate(1, tp.value(x).cols())));
  });
}

Var sum_all(Var x) {
  Tape& t = tape_of(x);
  Matrix out(1, 1);
  out(0, 0) = t.value(x).sum();
  return t.emit(std::move(out), any_grad(x), [x](Tape& tp, int out_id) {
    const double g = tp.grad(Var{&tp, out_id})(0, 0);
    const Matrix& xv = tp.value(x);
    tp.accumulate_grad(x.id, Matrix(Matrix::Constant(xv.rows(), xv.cols(), g)));
  });
}

Var mean_all(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = t.value(x);
  const double inv_n = 1.0 / static_cast<double>(xv.size());
  Matrix out(1, 1);
  out(0, 0) = xv.sum() * inv_n;
  return t.emit(std::move(out), any_grad(x), [x, inv_n](Tape& tp, int out_id) {
    const double g = tp.grad(Var{&tp, out_id})(0, 0) * inv_n;
    const Matrix& v = tp.value(x);
    tp.accumulate_grad(x.id, Matrix(Matrix::Constant(v.rows(), v.cols(), g)));
  });
}

Var row_softmax(Var x) {
  Tape& t = tape_of(x);
  const Matrix& xv = t.value(x);
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    // Max subtraction keeps exp() finite for any finite input.
    const double m = xv.row(i).maxCoeff();
    out.row(i) = (xv.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return t.emit(std::move(out), any_grad(x), [x](Tape& tp, int out_id) {
    Var out_v{&tp, out_id};
    const Matrix& y = tp.value(out_v);
    const Matrix& g = tp.grad(out_v);
    Matrix gx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      gx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    tp.accumulate_grad(x.id, gx);
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  constexpr double kEps = 1e-5;
  Tape& t = same_tape(x, gain);
  same_tape(x, bias);
  const Matrix& xv = t.value(x);
  if (xv.cols() < 2) throw ContractError("layer_norm: needs at least 2 columns, got " + shape_str(xv));
  require_row_vector(t.value(gain), xv.cols(), "layer_norm gain");
  require_row_vector(t.value(bias), xv.cols(), "layer_norm bias");

  const Eigen::Index n = xv.cols();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    const double mean = xv.row(i).mean();
    const double var = (xv.row(i).array() - mean).square().sum() / static_cast<double>(n);
    inv_std(i) = 1.0 / std::sqrt(var + kEps);
    xhat.row(i) = ((xv.row(i).array() - mean) * inv_std(i)).matrix();
  }
  Matrix out = ((xhat.array().rowwise() * RowArray(t.value(gain).row(0).array())).rowwise() +
                RowArray(t.value(bias).row(0).array()))
                   .matrix();
  const bool grad = t.requires_grad(x) || t.requires_grad(gain) || t.requires_grad(bias);
  return t.emit(std::move(out), grad, [x, gain, bias, xhat, inv_std](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    tp.accumulate_grad(gain.id, Matrix(g.cwiseProduct(xhat).colwise().sum()));
    tp.accumulate_grad(bias.id, Matrix(g.colwise().sum()));
    if (!tp.requires_grad(x)) return;
    const RowArray gain_row = tp.value(gain).row(0).array();
    Matrix gx(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const RowArray u = g.row(i).array() * gain_row;
      const RowArray xh = xhat.row(i).array();
      const double mu = u.mean();
      const double mx = (u * xh).mean();
      gx.row(i) = ((u - mu - xh * mx) * inv_std(i)).matrix();
    }
    tp.accumulate_grad(x.id, gx);
  });
}

Var lookup_rows(Var table, std::span<const int> ids) {
  Tape& t = tape_of(table);
  const Matrix& tv = t.value(table);
  const Eigen::Index v_count = tv.rows();
  Matrix out(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= v_count) {
      throw IndexError("lookup_rows: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(v_count) + ")");
    }
    out.row(static_cast<Eigen::Index>(i)) = tv.row(id);
  }
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return t.emit(std::move(out), any_grad(table), [table, ids_copy](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    Matrix gt = Matrix::Zero(tp.value(table).rows(), tp.value(table).cols());
    for (std::size_t i = 0; i < ids_copy.size(); ++i) {
      gt.row(ids_copy[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    tp.accumulate_grad(table.id, gt);
  });
}

Var cross_entropy_logits(Var logits, std::span<const int> targets) {
  Tape& t = tape_of(logits);
  const Matrix& z = t.value(logits);
  if (static_cast<std::size_t>(z.rows()) != targets.size()) {
    throw DimensionError("cross_entropy_logits: " + std::to_string(z.rows()) + " rows vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const Eigen::Index vocab = z.cols();
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0 || target >= vocab) {
      throw IndexError("cross_entropy_logits: target " + std::to_string(target) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    total += lse - z(i, target);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(z.rows());
  std::vector<int> tg(targets.begin(), targets.end());
  return t.emit(std::move(out), any_grad(logits), [logits, tg](Tape& tp, int out_id) {
    const double g = tp.grad(Var{&tp, out_id})(0, 0);
    const Matrix& z = tp.value(logits);
    const double w = g / static_cast<double>(z.rows());
    Matrix gz(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double m = z.row(i).maxCoeff();
      RowArray p = (z.row(i).array() - m).exp();
      p /= p.sum();
      gz.row(i) = p.matrix();
      gz(i, tg[static_cast<std::size_t>(i)]) -= 1.0;
    }
    tp.accumulate_grad(logits.id, Matrix(gz * w));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& t = tape_of(parts[0]);
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (Var p : parts) {
    same_tape(parts[0], p);
    if (t.value(p).rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(t.value(parts[0])) + " vs " +
                           shape_str(t.value(p)));
    }
    cols += t.value(p).cols();
    grad = grad || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    const Matrix& pv = t.value(p);
    out.middleCols(at, pv.cols()) = pv;
    at += pv.cols();
  }
  std::vector<Var> parts_copy = parts;
  return t.emit(std::move(out), grad, [parts_copy](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    Eigen::Index at = 0;
    for (Var p : parts_copy) {
      const Eigen::Index w = tp.value(p).cols();
      tp.accumulate_grad(p.id, Matrix(g.middleCols(at, w)));
      at += w;
    }
  });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(x);
  const Matrix& xv = t.value(x);
  if (start < 0 || count <= 0 || start + count > xv.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(xv));
  }
  Matrix out = xv.middleCols(start, count);
  return t.emit(std::move(out), any_grad(x), [x, start, count](Tape& tp, int out_id) {
    const Matrix& g = tp.grad(Var{&tp, out_id});
    const Matrix& xv = tp.value(x);
    Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
    gx.middleCols(start, count) = g;
    tp.accumulate_grad(x.id, gx);
  });
}

}  // namespace caps::diff
