#include <doctest.h>

#include <cmath>

#include "dcl/adam.hpp"
#include "dcl/gradcheck.hpp"
#include "dcl/linalg.hpp"
#include "dcl/rng.hpp"
#include "dcl/tape.hpp"
#include "support.hpp"

using namespace dcl;

TEST_CASE("rng: identical seeds give bit-identical tensors") {
  Rng a(42), b(42);
  Tensor ta = Tensor::normal({17, 5}, a);
  Tensor tb = Tensor::normal({17, 5}, b);
  CHECK(ta == tb);

  Rng c(43);
  Tensor tc = Tensor::normal({17, 5}, c);
  CHECK_FALSE(ta == tc);
}

TEST_CASE("rng: named streams are independent of consumption order") {
  Rng root(7);
  Rng gumbel_first = root.stream("gumbel");
  (void)gumbel_first.next_u64();
  Rng init_after = root.stream("init");

  Rng root2(7);
  Rng init_direct = root2.stream("init");
  CHECK(init_after.next_u64() == init_direct.next_u64());
}

TEST_CASE("rng: moments are sane") {
  Rng rng(1);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("grad: loss = x^2 at x = 3 gives dx = 6") {
  Parameter x{"x", Tensor::full({1, 1}, 3)};
  Tape tape;
  Var xv = tape.param(x);
  Var loss = ops::sum_all(ops::mul(xv, xv));
  tape.backward(loss);
  CHECK(tape.grad_of(x)[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad: sum(W x) matches finite differences") {
  Rng rng(3);
  std::vector<Parameter> params{{"W", Tensor::uniform({4, 3}, rng, -1, 1)}};
  Tensor x = Tensor::uniform({3, 2}, rng, -1, 1);
  auto result = check_gradients(
      [&](Tape& t, std::span<Parameter> p) {
        return ops::sum_all(ops::matmul(t.param(p[0]), t.constant(x)));
      },
      params, 1e-5, 1e-4);
  CHECK(result.passed);

  // Structure: d/dW sum(W x) = ones * x^T (outer-product structure).
  Tape tape;
  Var loss = ops::sum_all(ops::matmul(tape.param(params[0]), tape.constant(x)));
  tape.backward(loss);
  Tensor g = tape.grad_of(params[0]);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      real rowsum = x.at(j, 0) + x.at(j, 1);
      CHECK(g.at(i, j) == doctest::Approx(rowsum).epsilon(1e-10));
    }
}

TEST_CASE("grad: unreachable parameter gets zero gradient") {
  Rng rng(4);
  Parameter used{"used", Tensor::uniform({2, 2}, rng, -1, 1)};
  Parameter unused{"unused", Tensor::uniform({2, 2}, rng, -1, 1)};
  Tape tape;
  Var u = tape.param(used);
  (void)tape.param(unused);
  Var loss = ops::sum_all(ops::mul(u, u));
  tape.backward(loss);
  Tensor g = tape.grad_of(unused);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("grad: non-scalar loss is rejected") {
  Parameter x{"x", Tensor::full({2, 2}, 1)};
  Tape tape;
  Var v = tape.param(x);
  CHECK_THROWS_AS(tape.backward(v), std::invalid_argument);
}

TEST_CASE("tape: backward visits every node exactly once") {
  Rng rng(5);
  Parameter a{"a", Tensor::uniform({3, 3}, rng, -1, 1)};
  Parameter b{"b", Tensor::uniform({3, 3}, rng, -1, 1)};
  Tape tape;
  Var av = tape.param(a), bv = tape.param(b);
  Var v = ops::matmul(av, bv);
  v = ops::add(v, av);
  v = ops::gelu(v);
  Var loss = ops::mean_all(v);
  tape.backward(loss);
  CHECK(tape.backward_visits() == tape.size());
}

TEST_CASE("tape: rebinding a parameter reuses the same leaf") {
  Parameter a{"a", Tensor::full({1, 1}, 2)};
  Tape tape;
  Var first = tape.param(a);
  Var second = tape.param(a);
  CHECK(first.idx == second.idx);
  // Gradient accumulates across both uses: d/da (a*a) = 2a = 4.
  Var loss = ops::sum_all(ops::mul(first, second));
  tape.backward(loss);
  CHECK(tape.grad_of(a)[0] == doctest::Approx(4.0));
}

TEST_CASE("primitive gradients match finite differences (randomized)") {
  auto sweep = dcl::testing::run_primitive_sweep(10, 2024);
  INFO("worst: ", sweep.worst_case, " rel err ", sweep.worst_rel);
  CHECK(sweep.passed);
}

TEST_CASE("adam: zero gradient and zero lr leave parameters unchanged") {
  Tensor p0 = Tensor::full({3}, 1.5);

  Tensor p = p0;
  AdamState state(p);
  state.step(p, Tensor::zeros({3}));
  CHECK(frobenius_distance(p, p0) == 0.0);

  AdamConfig cfg;
  cfg.lr = 0;
  Tensor q = p0;
  AdamState s2(q, cfg);
  Tensor g = Tensor::full({3}, 0.7);
  s2.step(q, g);
  CHECK(frobenius_distance(q, p0) == 0.0);
}

TEST_CASE("adam: constant gradient matches the hand-iterated recurrence") {
  AdamConfig cfg;
  cfg.lr = 1e-2;
  Tensor p = Tensor::full({1}, 0.0);
  AdamState state(p, cfg);
  const real g = 0.3;

  // Independent scalar recurrence.
  long double m = 0, v = 0, x = 0;
  for (int t = 1; t <= 1000; ++t) {
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    long double mhat = m / (1 - std::pow((long double)cfg.beta1, t));
    long double vhat = v / (1 - std::pow((long double)cfg.beta2, t));
    x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    Tensor grad = Tensor::full({1}, g);
    state.step(p, grad);
  }
  CHECK(p[0] == doctest::Approx(static_cast<double>(x)).epsilon(1e-10));
  // With a constant gradient the bias-corrected update approaches lr * sign(g).
  CHECK(std::abs(p[0] + 1000 * cfg.lr) < 0.05 * 1000 * cfg.lr);
  CHECK(state.step_count == 1000);
}

TEST_CASE("adam: shape mismatch raises") {
  Tensor p = Tensor::zeros({3});
  AdamState state(p);
  CHECK_THROWS_AS(state.step(p, Tensor::zeros({4})), std::invalid_argument);
}

TEST_CASE("lstsq: exact fit, orthonormal shortcut, and underdetermined error") {
  Rng rng(11);

  SUBCASE("Y = 2X has coefficient 2I and zero residual") {
    Tensor x = Tensor::uniform({40, 3}, rng, -1, 1);
    Tensor y({40, 3});
    for (std::size_t i = 0; i < 40; ++i)
      for (std::size_t j = 0; j < 3; ++j) y.at(i, j) = 2 * x.at(i, j);
    auto fit = lstsq(x, y);
    CHECK(fit.residual < 1e-10);
    CHECK_FALSE(fit.rank_deficient);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        CHECK(fit.coef.at(i, j) == doctest::Approx(i == j ? 2.0 : 0.0).epsilon(1e-9));
  }

  SUBCASE("orthonormal X: coef equals X^T Y (vs brute-force normal equations)") {
    Tensor x = orthonormal_columns(Tensor::normal({30, 4}, rng));
    Tensor y = Tensor::uniform({30, 2}, rng, -1, 1);
    auto fit = lstsq(x, y);
    // Brute-force normal equations: (X^T X)^-1 X^T Y with X^T X = I.
    Tensor expected = matmul(x.transposed(), y);
    CHECK(frobenius_distance(fit.coef, expected) < 1e-10);
  }

  SUBCASE("T < p is rejected") {
    Tensor x = Tensor::uniform({3, 5}, rng, -1, 1);
    Tensor y = Tensor::uniform({3, 1}, rng, -1, 1);
    CHECK_THROWS_AS(lstsq(x, y), std::invalid_argument);
  }

  SUBCASE("rank-deficient X falls back to minimum norm and flags it") {
    Tensor x({20, 3});
    for (std::size_t i = 0; i < 20; ++i) {
      x.at(i, 0) = static_cast<real>(i) * 0.1;
      x.at(i, 1) = 2 * x.at(i, 0);  // duplicate direction
      x.at(i, 2) = 1.0;
    }
    Tensor y = Tensor::uniform({20, 1}, rng, -1, 1);
    auto fit = lstsq(x, y);
    CHECK(fit.rank_deficient);
    CHECK(fit.rank == 2);
  }
}

TEST_CASE("gelu: exact values") {
  CHECK(gelu_scalar(0.0) == 0.0);
  CHECK(std::abs(gelu_scalar(10.0) - 10.0) < 1e-6);
  // x Phi(x) at x = 1 with high-precision erf.
  CHECK(gelu_scalar(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(gelu_scalar(-1.0) == doctest::Approx(-(1 - 0.8413447460685429)).epsilon(1e-9));
}

TEST_CASE("tensor: shape invariants and finiteness checks") {
  Tensor t({3, 4});
  CHECK(t.size() == 12);
  CHECK(t.rows() == 3);
  CHECK(t.cols() == 4);
  t.at(1, 2) = std::numeric_limits<real>::infinity();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.require_finite("test"), std::runtime_error);
}

TEST_CASE("matrix helpers: inverse, power, condition number") {
  Rng rng(13);
  Tensor a = Tensor::uniform({4, 4}, rng, -1, 1);
  for (std::size_t i = 0; i < 4; ++i) a.at(i, i) += 3;  // well-conditioned
  Tensor inv = matrix_inverse(a);
  CHECK(frobenius_distance(matmul(a, inv), Tensor::identity(4)) < 1e-10);

  Tensor sq = matrix_power(a, 2);
  CHECK(frobenius_distance(sq, matmul(a, a)) < 1e-12);

  Tensor id = Tensor::identity(5);
  CHECK(condition_number(id) == doctest::Approx(1.0));
}
