#include "doctest.h"

#include <cmath>

#include "nvrf/bessel.hpp"

using namespace nvrf;

TEST_CASE("bessel sequence matches the standard library") {
  for (double x : {0.0, 1e-3, 0.5, 1.33, 1.62, 3.8316, 7.0, 12.5, 20.0}) {
    const auto j = bessel_j_sequence(60, x);
    REQUIRE(j.size() == 61);
    for (int n = 0; n <= 60; ++n) {
      const double ref = std::cyl_bessel_j(double(n), x);
      INFO("x=" << x << " n=" << n);
      CHECK(std::abs(j[n] - ref) < 1e-12);
    }
  }
}

TEST_CASE("negative argument parity") {
  for (int n = 0; n <= 8; ++n) {
    const double s = (n % 2 == 0) ? 1.0 : -1.0;
    CHECK(bessel_j(n, -2.3) == doctest::Approx(s * bessel_j(n, 2.3)).epsilon(1e-13));
  }
}

TEST_CASE("values at zero") {
  const auto j = bessel_j_sequence(5, 0.0);
  CHECK(j[0] == 1.0);
  for (int n = 1; n <= 5; ++n) CHECK(j[n] == 0.0);
}

TEST_CASE("tail bound dominates the discarded terms") {
  for (double x : {0.5, 1.33, 5.0, 10.0}) {
    for (int n_max : {5, 10, 20}) {
      double tail = 0.0;
      for (int n = n_max + 1; n <= 80; ++n) tail += std::abs(std::cyl_bessel_j(double(n), x));
      CHECK(bessel_tail_bound(n_max, x) >= tail);
    }
  }
  CHECK(bessel_tail_bound(30, 1.33) < 1e-30);
}
