#include <cmath>
#include <vector>

#include "doctest.h"
#include "tiltdid/dose_grid.hpp"
#include "tiltdid/error.hpp"

using namespace tiltdid;

TEST_CASE("grid points are cell midpoints with equal weights") {
  DoseGrid g(101);
  CHECK(g.size() == 101);
  CHECK(g.point(0) == doctest::Approx(1.0 / 202.0).epsilon(1e-15));
  CHECK(g.point(100) == doctest::Approx(1.0 - 1.0 / 202.0).epsilon(1e-15));
  double total = 0.0;
  for (double w : g.weights()) total += w;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t m = 1; m < g.size(); ++m) CHECK(g.point(m) > g.point(m - 1));
  CHECK(g.point(0) > 0.0);
  CHECK(g.point(100) <= 1.0);
}

TEST_CASE("grid size below the minimum is rejected") {
  CHECK_THROWS_AS(DoseGrid(10), Error);
  CHECK_NOTHROW(DoseGrid(11));
}

TEST_CASE("grid integration of simple monomials") {
  DoseGrid g(101);
  std::vector<double> one(g.size(), 1.0), d(g.size()), d2(g.size());
  for (std::size_t m = 0; m < g.size(); ++m) {
    d[m] = g.point(m);
    d2[m] = d[m] * d[m];
  }
  CHECK(g.integrate(one) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(g.integrate(d) - 0.5) <= 1e-6);
  CHECK(std::abs(g.integrate(d2) - 1.0 / 3.0) <= 1e-4);
  CHECK(std::abs(g.integrate_product(d, d) - g.integrate(d2)) <= 1e-15);
}

TEST_CASE("interpolation is exact on grid points, linear between, clamped outside") {
  DoseGrid g(21);
  std::vector<double> v(g.size());
  for (std::size_t m = 0; m < g.size(); ++m) v[m] = 3.0 * g.point(m) - 1.0;
  for (std::size_t m = 0; m < g.size(); ++m) CHECK(g.interpolate(v, g.point(m)) == doctest::Approx(v[m]));
  CHECK(g.interpolate(v, 0.37) == doctest::Approx(3.0 * 0.37 - 1.0));
  CHECK(g.interpolate(v, 0.0) == doctest::Approx(v.front()));
  CHECK(g.interpolate(v, 1.0) == doctest::Approx(v.back()));
}
