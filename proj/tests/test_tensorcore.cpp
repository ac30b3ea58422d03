#include <doctest.h>

#include <cmath>
#include <random>

#include "astar/gradcheck.hpp"
#include "astar/tape.hpp"
#include "fixtures.hpp"

using namespace astar;

namespace {

double max_rel(const GradCheckResult& r) { return r.max_rel_error; }

// |x - y| < gap for some pair drawn from a and b at the same index.
bool near_tie(const Tensor& a, const Tensor& b, std::size_t i, double gap = 1e-6) {
  return std::abs(a[i] - b[i]) < gap;
}

}  // namespace

TEST_CASE("tensor construction validates size and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({1}, std::vector<double>{NAN}), NumericError);
  CHECK(Tensor::scalar(3.0).is_scalar());
  CHECK(Tensor({2, 3}).size() == 6);
}

TEST_CASE("elementwise forward values") {
  Tape t;
  const auto a = t.variable(Tensor({2}, {1, 2}));
  const auto b = t.variable(Tensor({2}, {3, 4}));
  CHECK(t.value(t.add(a, b)) == Tensor({2}, {4, 6}));
  CHECK(t.value(t.subtract(a, b)) == Tensor({2}, {-2, -2}));
  const Tensor av = t.value(a);
  const Tensor prod = t.value(t.multiply(a, t.constant(Tensor::ones_like(av))));
  CHECK(prod == av);
  CHECK(t.value(t.divide(b, a)) == Tensor({2}, {3, 2}));
  CHECK(t.value(t.minimum(a, b)) == Tensor({2}, {1, 2}));
  CHECK(t.value(t.sum(b)).item() == 7.0);
  CHECK(t.value(t.clamp(b, 0.0, 3.5)) == Tensor({2}, {3, 3.5}));
}

TEST_CASE("matmul dimension rule") {
  Tape t;
  const auto a = t.variable(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  const auto v = t.variable(Tensor({3, 1}, {1, 0, -1}));
  const auto r = t.matmul(a, v);
  CHECK(t.value(r).shape() == Shape{2, 1});
  CHECK(t.value(r) == Tensor({2, 1}, {-2, -2}));
  try {
    t.matmul(a, a);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("elementwise ops reject mismatched shapes") {
  Tape t;
  const auto a = t.variable(Tensor({2}, {1, 2}));
  const auto b = t.variable(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_AS(t.add(a, b), ShapeError);
  CHECK_THROWS_AS(t.minimum(a, b), ShapeError);
}

TEST_CASE("backward basics") {
  SUBCASE("sum gives ones") {
    Tape t;
    const auto x = t.variable(fixtures::uniform({3, 4}, -1, 1, 1));
    const auto g = t.backward(t.sum(x));
    CHECK(g.at(x) == Tensor({3, 4}, 1.0));
  }
  SUBCASE("sum of squares gives 2x") {
    Tape t;
    const auto x = t.variable(Tensor({3}, {1, 2, 3}));
    const auto g = t.backward(t.sum(t.multiply(x, x)));
    CHECK(g.at(x) == Tensor({3}, {2, 4, 6}));
  }
  SUBCASE("non-scalar root rejected") {
    Tape t;
    const auto x = t.variable(Tensor({3}, {1, 2, 3}));
    CHECK_THROWS_AS(t.backward(x), std::invalid_argument);
  }
  SUBCASE("unreached inputs get zeros") {
    Tape t;
    const auto x = t.variable(Tensor({2}, {1, 2}));
    const auto y = t.variable(Tensor({2}, {1, 2}));
    const auto g = t.backward(t.sum(x));
    CHECK_FALSE(g.reached(y));
    CHECK(g.wrt(y, t.value(y)) == Tensor({2}, 0.0));
  }
}

TEST_CASE("minimum splits ties equally") {
  Tape t;
  const auto a = t.variable(Tensor({2}, {1.0, 2.0}));
  const auto b = t.variable(Tensor({2}, {1.0, 3.0}));
  const auto g = t.backward(t.sum(t.minimum(a, b)));
  CHECK(g.at(a) == Tensor({2}, {0.5, 1.0}));
  CHECK(g.wrt(b, t.value(b)) == Tensor({2}, {0.5, 0.0}));
}

TEST_CASE("division by zero is a numeric error naming the op") {
  Tape t;
  const auto a = t.variable(Tensor({1}, 1.0));
  const auto z = t.constant(Tensor({1}, 0.0));
  try {
    t.divide(a, z);
    FAIL("expected an error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("divide") != std::string::npos);
  }
}

TEST_CASE("every primitive passes the finite-difference check") {
  const Tensor x = fixtures::uniform({3, 4}, -1, 1, 42);
  const Tensor y = fixtures::uniform({3, 4}, -1, 1, 43);
  const double h = 1e-5, tol = 1e-4;

  CHECK(max_rel(finite_diff_check([](Tape& t, NodeId a) { return t.sum(a); }, x, h)) < 1e-9);
  CHECK(max_rel(finite_diff_check(
            [&](Tape& t, NodeId a) { return t.sum(t.multiply(t.add(a, t.constant(y)), t.subtract(a, t.constant(y)))); },
            x, h)) < tol);
  CHECK(max_rel(finite_diff_check([](Tape& t, NodeId a) { return t.sum(t.scale(t.exp(a), -2.5)); }, x, h)) < tol);
  CHECK(max_rel(finite_diff_check(
            [&](Tape& t, NodeId a) {
              const auto denom = t.add(t.exp(a), t.constant(Tensor({3, 4}, 0.5)));
              return t.sum(t.divide(t.constant(y), denom));
            },
            x, h)) < tol);
  CHECK(max_rel(finite_diff_check([&](Tape& t, NodeId a) { return t.sum(t.minimum(a, t.constant(y))); }, x, h,
                                  [&](std::size_t i) { return near_tie(x, y, i); })) < tol);
  CHECK(max_rel(finite_diff_check([](Tape& t, NodeId a) { return t.sum(t.multiply(t.clamp(a, -0.5, 0.5), a)); }, x,
                                  h, [&](std::size_t i) {
                                    return std::abs(std::abs(x[i]) - 0.5) < 1e-6;
                                  })) < tol);
  CHECK(max_rel(finite_diff_check(
            [&](Tape& t, NodeId a) {
              const auto w = t.constant(fixtures::uniform({4, 2}, -1, 1, 7));
              const auto m = t.matmul(a, w);
              return t.sum(t.multiply(m, m));
            },
            x, h)) < tol);
  for (std::size_t axis : {0u, 1u}) {
    CHECK(max_rel(finite_diff_check(
              [&](Tape& t, NodeId a) { return t.sum(t.multiply(t.softmax(a, axis), t.constant(y))); }, x, h)) < tol);
  }
  CHECK(max_rel(finite_diff_check(
            [](Tape& t, NodeId a) { return t.add(t.reduce_max(a), t.scale(t.reduce_min(a), 3.0)); }, x, h)) < tol);
  CHECK(max_rel(finite_diff_check(
            [&](Tape& t, NodeId a) {
              const auto col = t.column(a, 2);
              const auto b = t.broadcast(t.sum(col), {3});
              return t.sum(t.multiply(b, t.column(t.reshape(a, {3, 4}), 0)));
            },
            x, h)) < tol);
}

TEST_CASE("a wrong adjoint is caught by the finite-difference check") {
  const Tensor x = fixtures::uniform({6}, -1, 1, 5);
  const auto bad_square = [](Tape& t, NodeId a) {
    const Tensor& v = t.value(a);
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = v[i] * v[i];
    const NodeId inputs[] = {a};
    const NodeId y = t.custom(inputs, Tensor(v.shape(), sq), [](const Tensor& g, auto in, const Tensor&) {
      std::vector<double> d(g.size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * (*in[0])[i];  // missing factor 2
      return std::vector<Tensor>{Tensor(g.shape(), d)};
    });
    return t.sum(y);
  };
  CHECK(finite_diff_check(bad_square, x, 1e-5).max_rel_error > 1e-2);
}

TEST_CASE("finite_diff_check rejects non-positive steps") {
  CHECK_THROWS_AS(finite_diff_check([](Tape& t, NodeId a) { return t.sum(a); }, Tensor({1}, 1.0), 0.0),
                  std::invalid_argument);
}

TEST_CASE("backward is linear") {
  const Tensor x = fixtures::uniform({5}, -1, 1, 9);
  const auto grad = [&](double a, double b) {
    Tape t;
    const auto v = t.variable(x);
    const auto f = t.sum(t.exp(v));
    const auto g = t.sum(t.multiply(v, v));
    return t.backward(t.add(t.scale(f, a), t.scale(g, b))).at(v);
  };
  const Tensor gf = grad(1, 0), gg = grad(0, 1), combo = grad(2.5, -0.75);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(combo[i] - (2.5 * gf[i] - 0.75 * gg[i])) <= 1e-12);
}

TEST_CASE("forward and backward are bitwise deterministic") {
  const Tensor x = fixtures::uniform({4, 3}, -1, 1, 11);
  const auto once = [&] {
    Tape t;
    const auto v = t.variable(x);
    const auto root = t.sum(t.multiply(t.softmax(v, 1), t.exp(v)));
    return std::make_pair(t.value(root), t.backward(root).at(v));
  };
  const auto a = once(), b = once();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
