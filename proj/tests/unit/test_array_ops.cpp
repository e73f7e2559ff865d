#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "msfa/numcore/graph.hpp"
#include "msfa/numcore/rng.hpp"

using namespace msfa;

namespace {

Array random_array(Rng& rng, Shape shape, double scale = 1.0) {
  Array a(std::move(shape));
  for (Real& v : a.data()) v = static_cast<Real>(rng.uniform(-scale, scale));
  return a;
}

}  // namespace

TEST_CASE("matmul forward values") {
  const auto eye = Var::constant(Array::matrix({{1, 0}, {0, 1}}));
  const auto m = Var::constant(Array::matrix({{1, 2}, {3, 4}}));
  CHECK(matmul(eye, m).value() == Array::matrix({{1, 2}, {3, 4}}));

  const auto row = Var::constant(Array::matrix({{1, 2}}));
  const auto col = Var::constant(Array::matrix({{3}, {4}}));
  CHECK(matmul(row, col).value() == Array::matrix({{11}}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const auto a = Var::constant(Array(Shape{2, 3}));
  const auto b = Var::constant(Array(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(std::count(msg.begin(), msg.end(), '[') == 2);
  }
}

TEST_CASE("elementwise analytic values") {
  const auto zero = Var::constant(Array::scalar(0));
  CHECK(tanh(zero).value().item() == 0.0);
  CHECK(sigmoid(zero).value().item() == 0.5);
  CHECK(relu(Var::constant(Array::vector({-1, 2}))).value() == Array::vector({0, 2}));

  const auto x = Var::leaf(Array::scalar(0));
  const auto g = gradients(tanh(x), std::vector<Var>{x});
  CHECK(g[0].item() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("broadcasting follows trailing-dimension alignment") {
  const auto m = Var::constant(Array::matrix({{1, 2, 3}, {4, 5, 6}}));
  const auto bias = Var::constant(Array::vector({10, 20, 30}));
  CHECK(add(m, bias).value() == Array::matrix({{11, 22, 33}, {14, 25, 36}}));

  const auto col = Var::constant(Array::matrix({{2}, {3}}));
  CHECK(mul(m, col).value() == Array::matrix({{2, 4, 6}, {12, 15, 18}}));

  const auto a = Var::constant(Array(Shape{2, 1, 3}, 1));
  const auto b = Var::constant(Array(Shape{4, 1}, 2));
  CHECK(mul(a, b).shape() == Shape{2, 4, 3});

  CHECK_THROWS_AS(add(m, Var::constant(Array::vector({1, 2}))), DimensionError);
}

TEST_CASE("softmax symmetric and stable") {
  const auto s = softmax(Var::constant(Array::vector({0, 0, 0})), 0).value();
  for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto big = softmax(Var::constant(Array::vector({1000, 0})), 0).value();
  CHECK(std::abs(big[0] - 1.0) < 1e-12);
  CHECK(std::abs(big[1]) < 1e-12);
}

TEST_CASE("softmax normalises and is permutation-equivariant") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t rows = 1 + rng.index(4), cols = 2 + rng.index(7);
    Array x = random_array(rng, {rows, cols}, 20.0);
    const Array y = softmax(Var::constant(x), 1).value();
    for (std::size_t r = 0; r < rows; ++r) {
      Real total = 0;
      for (std::size_t c = 0; c < cols; ++c) {
        CHECK(y.at(r, c) >= 0);
        total += y.at(r, c);
      }
      CHECK(std::abs(total - 1) < 1e-12);
    }
    std::vector<std::size_t> perm(cols);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = cols; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    Array xp(x.shape());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) xp.at(r, c) = x.at(r, perm[c]);
    const Array yp = softmax(Var::constant(xp), 1).value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) CHECK(std::abs(yp.at(r, c) - y.at(r, perm[c])) < 1e-15);
  }
}

TEST_CASE("softmax along a leading axis") {
  const auto y = softmax(Var::constant(Array::matrix({{0, 1}, {0, 1}})), 0).value();
  CHECK(y == Array::matrix({{0.5, 0.5}, {0.5, 0.5}}));
  CHECK_THROWS_AS(softmax(Var::constant(Array::vector({1, 2})), 1), DimensionError);
}

TEST_CASE("reductions and structural ops") {
  const auto m = Var::constant(Array::matrix({{1, 2, 3}, {4, 5, 6}}));
  CHECK(sum(m).value().item() == 21);
  CHECK(sum(m, 0).value() == Array::vector({5, 7, 9}));
  CHECK(sum(m, 1).value() == Array::vector({6, 15}));
  CHECK(slice(m, 1, 1, 3).value() == Array::matrix({{2, 3}, {5, 6}}));
  CHECK(slice(m, 0, 1, 2).value() == Array::matrix({{4, 5, 6}}));
  const std::vector<Var> parts{m, m};
  CHECK(concat(parts, 1).value() == Array::matrix({{1, 2, 3, 1, 2, 3}, {4, 5, 6, 4, 5, 6}}));
  CHECK(concat(parts, 0).shape() == Shape{4, 3});
  CHECK(reshape(m, {3, 2}).value() == Array::matrix({{1, 2}, {3, 4}, {5, 6}}));
  CHECK_THROWS_AS(reshape(m, {4, 2}), DimensionError);
  CHECK_THROWS_AS(slice(m, 1, 2, 4), DimensionError);
}

TEST_CASE("non-finite results raise NumericError") {
  const auto big = Var::constant(Array::vector({1e300}));
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("array invariants") {
  CHECK_THROWS_AS(Array(Shape{2, 2}, std::vector<Real>{1, 2, 3}), DimensionError);
  Array a(Shape{3, 0});
  CHECK(a.size() == 0);
  CHECK(Array::scalar(4).item() == 4);
}
