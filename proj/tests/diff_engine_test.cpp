#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "caps/adam.hpp"
#include "caps/finite_diff.hpp"
#include "caps/ops.hpp"
#include "caps/rng.hpp"
#include "caps/tape.hpp"

using namespace caps;
using namespace caps::diff;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

Matrix scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

// Gradient-checks `build` (tape + bound inputs -> scalar loss) against
// central differences on every input, for several seeded inputs.
void check_grads(const char* name,
                 const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes,
                 const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                 int seeds = 10, double lo = -1.0, double hi = 1.0) {
  for (int s = 0; s < seeds; ++s) {
    SeededRng rng(derive_seed(4242, name) + static_cast<std::uint64_t>(s));
    std::vector<Matrix> inputs;
    for (auto [r, c] : shapes) inputs.push_back(random_matrix(r, c, rng, lo, hi));

    auto run = [&](bool with_grad, std::vector<Matrix>* grads_out) {
      Tape tape;
      std::vector<Var> vars;
      for (Matrix& m : inputs) vars.push_back(with_grad ? tape.variable(m) : tape.constant(m));
      Var loss = build(tape, vars);
      double value = scalar_value(loss);
      if (with_grad) {
        tape.backward(loss);
        grads_out->clear();
        for (std::size_t i = 0; i < vars.size(); ++i) {
          grads_out->push_back(tape.has_grad(vars[i])
                                   ? tape.grad(vars[i])
                                   : Matrix::Zero(inputs[i].rows(), inputs[i].cols()));
        }
      }
      return value;
    };

    std::vector<Matrix> analytic;
    run(true, &analytic);

    std::vector<Matrix*> param_ptrs;
    for (Matrix& m : inputs) param_ptrs.push_back(&m);
    auto numeric = finite_diff_grad([&] { return run(false, nullptr); }, param_ptrs, 1e-5);

    const double err = max_rel_error(analytic, numeric);
    INFO(name, " seed ", s, " max rel err ", err);
    CHECK(err <= 1e-4);
  }
}

// Loss shaped as sum(out .* C) with a fixed random C, so every output entry
// receives a distinct gradient signal.
Var weighted_sum(Tape& t, Var out, std::uint64_t salt) {
  const Matrix& v = t.value(out);
  SeededRng rng(salt);
  Matrix c = random_matrix(v.rows(), v.cols(), rng);
  return sum_all(mul(out, t.constant(c)));
}

}  // namespace

TEST_CASE("matmul forward examples") {
  Tape t;
  Matrix id2 = Matrix::Identity(2, 2);
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(t.value(matmul(t.constant(id2), t.constant(a))).isApprox(a, 0));

  Matrix b(2, 2);
  b << 5, 6, 7, 8;
  Matrix expect(2, 2);
  expect << 19, 22, 43, 50;
  CHECK(t.value(matmul(t.constant(a), t.constant(b))).isApprox(expect, 0));
}

TEST_CASE("matmul dimension error names both shapes") {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(4, 2));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
  try {
    matmul(a, b);
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[4x2]") != std::string::npos);
  }
}

TEST_CASE("row_softmax closed forms") {
  Tape t;
  Matrix x(1, 2);
  x << 0.0, std::log(2.0);
  Matrix y = t.value(row_softmax(t.constant(x)));
  CHECK(y(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  Matrix c = Matrix::Constant(1, 3, 7.25);
  Matrix yc = t.value(row_softmax(t.constant(c)));
  for (int i = 0; i < 3; ++i) CHECK(yc(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("row_softmax survives huge logits, matches extended precision") {
  Tape t;
  Matrix x(1, 2);
  x << 1000.0, 0.0;
  Matrix y = t.value(row_softmax(t.constant(x)));
  CHECK(std::isfinite(y(0, 0)));
  CHECK(std::isfinite(y(0, 1)));
  // Long-double oracle with the same guard.
  long double e0 = expl(0.0L), e1 = expl(-1000.0L);
  long double z = e0 + e1;
  CHECK(y(0, 0) == doctest::Approx(static_cast<double>(e0 / z)).epsilon(1e-12));
  CHECK(y(0, 1) == doctest::Approx(static_cast<double>(e1 / z)).epsilon(1e-12));
}

TEST_CASE("row_softmax rows sum to one and are shift invariant") {
  SeededRng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x = random_matrix(4, 6, rng, -5.0, 5.0);
    Tape t;
    Matrix y = t.value(row_softmax(t.constant(x)));
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      CHECK(std::abs(y.row(i).sum() - 1.0) <= 1e-12);
    }
    const double c = rng.uniform(-100.0, 100.0);
    Matrix shifted = (x.array() + c).matrix();
    Matrix y2 = t.value(row_softmax(t.constant(shifted)));
    CHECK((y - y2).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("layer_norm hand cases") {
  Tape t;
  Var gain = t.constant(Matrix::Ones(1, 2));
  Var bias = t.constant(Matrix::Zero(1, 2));

  Matrix flat = Matrix::Constant(1, 2, 3.5);
  Matrix y0 = t.value(layer_norm(t.constant(flat), gain, bias));
  CHECK(std::abs(y0(0, 0)) <= 1e-9);
  CHECK(std::abs(y0(0, 1)) <= 1e-9);

  Matrix x(1, 2);
  x << 1.0, 3.0;
  Matrix y = t.value(layer_norm(t.constant(x), gain, bias));
  CHECK(y(0, 0) == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y(0, 1) == doctest::Approx(1.0).epsilon(1e-4));

  Var zero_gain = t.constant(Matrix::Zero(1, 2));
  Var b = t.constant(Matrix::Constant(1, 2, 0.75));
  Matrix yb = t.value(layer_norm(t.constant(x), zero_gain, b));
  CHECK(yb(0, 0) == doctest::Approx(0.75));
  CHECK(yb(0, 1) == doctest::Approx(0.75));
}

TEST_CASE("relu examples and idempotence") {
  Tape t;
  Matrix x(1, 3);
  x << -1.0, 0.0, 2.0;
  Matrix y = t.value(relu(t.constant(x)));
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 0.0);
  CHECK(y(0, 2) == 2.0);

  Matrix neg = Matrix::Constant(2, 2, -3.0);
  CHECK(t.value(relu(t.constant(neg))).isZero(0));

  SeededRng rng(5);
  Matrix r = random_matrix(3, 4, rng, -2.0, 2.0);
  Var v = t.constant(r);
  CHECK(t.value(relu(relu(v))) == t.value(relu(v)));
}

TEST_CASE("lookup_rows gather and errors") {
  Tape t;
  SeededRng rng(7);
  Matrix table = random_matrix(5, 3, rng);
  Var tv = t.constant(table);

  std::vector<int> first{0};
  CHECK(t.value(lookup_rows(tv, first)).row(0) == table.row(0));

  std::vector<int> dup{2, 2};
  Matrix out = t.value(lookup_rows(tv, dup));
  CHECK(out.row(0) == table.row(2));
  CHECK(out.row(1) == table.row(2));

  std::vector<int> bad{5};
  CHECK_THROWS_WITH_AS(lookup_rows(tv, bad), doctest::Contains("5"), IndexError);
}

TEST_CASE("cross_entropy_logits closed forms") {
  Tape t;
  std::vector<int> targets{1, 3, 0};
  Var uniform = t.constant(Matrix::Zero(3, 4));
  CHECK(scalar_value(cross_entropy_logits(uniform, targets)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Matrix z(1, 2);
  z << 10.0, -10.0;
  std::vector<int> t0{0};
  CHECK(scalar_value(cross_entropy_logits(t.constant(z), t0)) < 1e-6);

  SeededRng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix logits = random_matrix(4, 6, rng, -8.0, 8.0);
    std::vector<int> tg;
    for (int i = 0; i < 4; ++i) tg.push_back(rng.uniform_int(0, 6));
    CHECK(scalar_value(cross_entropy_logits(t.constant(logits), tg)) >= 0.0);
  }

  std::vector<int> bad{9};
  Matrix one = Matrix::Zero(1, 4);
  CHECK_THROWS_AS(cross_entropy_logits(t.constant(one), bad), IndexError);
}

TEST_CASE("backward basics: sum, product, fan-out") {
  {
    Tape t;
    SeededRng rng(3);
    Var x = t.variable(random_matrix(3, 3, rng));
    Var loss = sum_all(x);
    t.backward(loss);
    CHECK(t.grad(x) == Matrix::Ones(3, 3));
  }
  {
    Tape t;
    Var x = t.variable(scalar(3.0));
    Var y = t.variable(scalar(-2.0));
    t.backward(mul(x, y));
    CHECK(t.grad(x)(0, 0) == -2.0);
    CHECK(t.grad(y)(0, 0) == 3.0);
  }
  {
    // d(sum(x) + sum(x))/dx accumulates to exactly 2.
    Tape t;
    SeededRng rng(4);
    Var x = t.variable(random_matrix(2, 5, rng));
    Var loss = add(sum_all(x), sum_all(x));
    t.backward(loss);
    CHECK(t.grad(x) == Matrix::Constant(2, 5, 2.0));
  }
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape t;
  Var x = t.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("replaying backward twice is bitwise identical") {
  Tape t;
  SeededRng rng(9);
  Var x = t.variable(random_matrix(4, 4, rng));
  Var w = t.variable(random_matrix(4, 4, rng));
  Var loss = mean_all(relu(matmul(x, w)));
  t.backward(loss);
  Matrix gx = t.grad(x), gw = t.grad(w);
  t.backward(loss);
  CHECK(t.grad(x) == gx);
  CHECK(t.grad(w) == gw);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Matrix p = Matrix::Constant(2, 2, 1.5);
  Matrix g = Matrix::Zero(2, 2);
  AdamState st;
  Matrix before = p;
  adam_step({&p}, {&g}, st, 0.1);
  CHECK(p == before);
  CHECK(st.step_count == 1);
}

TEST_CASE("adam: first step is approximately -lr * sign(g)") {
  Matrix p = scalar(0.0);
  Matrix g = scalar(1.0);
  AdamState st;
  adam_step({&p}, {&g}, st, 0.1);
  CHECK(p(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam: same gradient stream gives bitwise-identical parameters") {
  SeededRng rng(21);
  Matrix g1 = random_matrix(3, 2, rng), g2 = random_matrix(3, 2, rng);
  auto run = [&] {
    Matrix p = Matrix::Constant(3, 2, 0.5);
    AdamState st;
    adam_step({&p}, {&g1}, st, 0.01);
    adam_step({&p}, {&g2}, st, 0.01);
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("adam: shape mismatch raises dimension error") {
  Matrix p = Matrix::Zero(2, 2);
  Matrix g = Matrix::Zero(3, 2);
  AdamState st;
  CHECK_THROWS_AS(adam_step({&p}, {&g}, st, 0.1), DimensionError);
}

TEST_CASE("finite_diff_grad on closed-form functions") {
  Matrix p = scalar(3.0);
  auto grads = finite_diff_grad([&] { return p(0, 0) * p(0, 0); }, {&p});
  CHECK(grads[0](0, 0) == doctest::Approx(6.0).epsilon(1e-8));

  auto zero = finite_diff_grad([&] { return 42.0; }, {&p});
  CHECK(zero[0](0, 0) == 0.0);
}

TEST_CASE("backward matches finite differences on a random 3-layer net") {
  SeededRng rng(31);
  Matrix x = random_matrix(4, 5, rng);
  Matrix w1 = random_matrix(5, 6, rng), b1 = random_matrix(1, 6, rng);
  Matrix w2 = random_matrix(6, 6, rng), b2 = random_matrix(1, 6, rng);
  Matrix w3 = random_matrix(6, 2, rng), b3 = random_matrix(1, 2, rng);
  std::vector<Matrix*> params{&w1, &b1, &w2, &b2, &w3, &b3};

  auto forward = [&](Tape& t, bool grad, std::vector<Var>* vars_out) {
    std::vector<Var> vars;
    for (Matrix* m : params) vars.push_back(grad ? t.variable(*m) : t.constant(*m));
    Var h1 = relu(affine(t.constant(x), vars[0], vars[1]));
    Var h2 = relu(affine(h1, vars[2], vars[3]));
    Var out = affine(h2, vars[4], vars[5]);
    if (vars_out) *vars_out = vars;
    return mean_all(mul(out, out));
  };

  Tape t;
  std::vector<Var> vars;
  Var loss = forward(t, true, &vars);
  t.backward(loss);
  std::vector<Matrix> analytic;
  for (Var v : vars) analytic.push_back(t.grad(v));

  auto numeric = finite_diff_grad(
      [&] {
        Tape t2;
        return scalar_value(forward(t2, false, nullptr));
      },
      params);
  CHECK(max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("gradient check: every differentiable operation") {
  using V = std::vector<Var>;
  check_grads("matmul", {{3, 4}, {4, 2}}, [](Tape& t, const V& v) {
    return weighted_sum(t, matmul(v[0], v[1]), 1);
  });
  check_grads("matmul_nt", {{3, 4}, {2, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, matmul_nt(v[0], v[1]), 2);
  });
  check_grads("add", {{3, 3}, {3, 3}}, [](Tape& t, const V& v) {
    return weighted_sum(t, add(v[0], v[1]), 3);
  });
  check_grads("sub", {{3, 3}, {3, 3}}, [](Tape& t, const V& v) {
    return weighted_sum(t, sub(v[0], v[1]), 4);
  });
  check_grads("mul", {{3, 3}, {3, 3}}, [](Tape& t, const V& v) {
    return weighted_sum(t, mul(v[0], v[1]), 5);
  });
  check_grads("scale", {{2, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, scale(v[0], -1.7), 6);
  });
  check_grads("add_const", {{2, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, add_const(v[0], 0.3), 7);
  });
  check_grads("exp", {{2, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, diff::exp(v[0]), 8);
  });
  // Inputs bounded away from the relu/clamp/min kinks so central differences
  // see a smooth function.
  check_grads("relu", {{3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, relu(add_const(v[0], 0.001)), 9);
  });
  check_grads("clamp", {{3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, clamp(v[0], -0.5004, 0.5004), 10);
  });
  check_grads("minimum", {{3, 4}, {3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, minimum(v[0], add_const(v[1], 2.0)), 11);
  });
  check_grads("add_rowwise", {{3, 4}, {1, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, add_rowwise(v[0], v[1]), 12);
  });
  check_grads("mul_rowwise", {{3, 4}, {1, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, mul_rowwise(v[0], v[1]), 13);
  });
  check_grads("add_scalar_bcast", {{3, 4}, {1, 1}}, [](Tape& t, const V& v) {
    return weighted_sum(t, add_scalar_bcast(v[0], v[1]), 14);
  });
  check_grads("sum_rows", {{3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, sum_rows(v[0]), 15);
  });
  check_grads("sum_all", {{3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, sum_all(v[0]), 16);
  });
  check_grads("mean_all", {{3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, mean_all(v[0]), 17);
  });
  check_grads("row_softmax", {{3, 5}}, [](Tape& t, const V& v) {
    return weighted_sum(t, row_softmax(v[0]), 18);
  });
  check_grads("layer_norm", {{3, 5}, {1, 5}, {1, 5}}, [](Tape& t, const V& v) {
    return weighted_sum(t, layer_norm(v[0], v[1], v[2]), 19);
  });
  check_grads("lookup_rows", {{5, 3}}, [](Tape& t, const V& v) {
    std::vector<int> ids{0, 2, 2, 4};
    return weighted_sum(t, lookup_rows(v[0], ids), 20);
  });
  check_grads("cross_entropy_logits", {{4, 5}}, [](Tape& t, const V& v) {
    std::vector<int> tg{1, 0, 4, 2};
    return cross_entropy_logits(v[0], tg);
  });
  check_grads("concat_cols", {{3, 2}, {3, 4}}, [](Tape& t, const V& v) {
    return weighted_sum(t, concat_cols({v[0], v[1]}), 21);
  });
  check_grads("slice_cols", {{3, 6}}, [](Tape& t, const V& v) {
    return weighted_sum(t, slice_cols(v[0], 1, 3), 22);
  });
}

TEST_CASE("seeded rng is reproducible and portable transforms behave") {
  SeededRng a(1234), b(1234);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  SeededRng r(99);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  // below(n) stays in range.
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);

  CHECK(derive_seed(1, "collector") != derive_seed(1, "codec"));
  CHECK(derive_seed(1, "collector") == derive_seed(1, "collector"));
  CHECK(derive_seed(1, "collector") != derive_seed(2, "collector"));
}
