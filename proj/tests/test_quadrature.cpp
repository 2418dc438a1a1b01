#include "doctest.h"

#include <cmath>

#include "blockpde/quadrature.hpp"

using namespace blockpde;

namespace {
double integrate(const QuadratureGrid& g, double (*f)(double)) {
  double s = 0.0;
  for (int q = 0; q < g.Q(); ++q) s += g.w[q] * f(g.x[q]);
  return s;
}
}  // namespace

TEST_CASE("one-point rule") {
  const auto g = gauss_legendre_grid(1);
  CHECK(g.x[0] == 0.0);
  CHECK(g.w[0] == 2.0);
}

TEST_CASE("two-point rule against Newton-root oracle") {
  // oracle: root of P2(x) = (3x^2-1)/2 is 1/sqrt(3); weight 2/((1-x^2) P2'(x)^2)
  const double root = 1.0 / std::sqrt(3.0);
  const double w = 2.0 / ((1.0 - root * root) * 9.0 * root * root);
  const auto g = gauss_legendre_grid(2);
  CHECK(g.x[0] == doctest::Approx(-root).epsilon(1e-15));
  CHECK(g.x[1] == doctest::Approx(root).epsilon(1e-15));
  CHECK(g.w[0] == doctest::Approx(w).epsilon(1e-15));
  CHECK(g.w[1] == doctest::Approx(w).epsilon(1e-15));
}

TEST_CASE("Q=256 integrates x^10 exactly") {
  const auto g = gauss_legendre_grid(256);
  const double got = integrate(g, [](double x) { return std::pow(x, 10); });
  CHECK(std::abs(got - 2.0 / 11.0) < 1e-13);
}

TEST_CASE("nodes strictly increasing, weights positive, sum = 2") {
  for (int Q : {3, 7, 32, 97, 256}) {
    const auto g = gauss_legendre_grid(Q);
    double sum = 0.0;
    for (int q = 0; q < Q; ++q) {
      CHECK(g.w[q] > 0.0);
      if (q > 0) CHECK(g.x[q] > g.x[q - 1]);
      sum += g.w[q];
    }
    CHECK(std::abs(sum - 2.0) < 1e-12 * 2.0);
  }
}

TEST_CASE("exactness up to degree 2Q-1") {
  // highest even monomial below the exactness limit
  const auto g = gauss_legendre_grid(16);
  double s = 0.0;
  for (int q = 0; q < g.Q(); ++q) s += g.w[q] * std::pow(g.x[q], 30);
  CHECK(s == doctest::Approx(2.0 / 31.0).epsilon(1e-12));
}

TEST_CASE("Q=0 rejected") {
  CHECK_THROWS_AS(gauss_legendre_grid(0), std::invalid_argument);
}
