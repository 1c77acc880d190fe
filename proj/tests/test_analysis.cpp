#include <cmath>

#include "doctest.h"
#include "tsoftmax/analysis.hpp"
#include "tsoftmax/error.hpp"
#include "tsoftmax/rng.hpp"

using namespace tsoftmax;

TEST_SUITE("analysis") {
  TEST_CASE("exact power laws are recovered") {
    Rng rng(RngStream{1, "fits", 0});
    for (int trial = 0; trial < 50; ++trial) {
      const double p = rng.uniform(-2.0, 2.0);
      const double c = rng.uniform(0.1, 10.0);
      std::vector<double> x, y;
      for (double a = 1; a <= 1e4; a *= 1.3) {
        x.push_back(a);
        y.push_back(c * std::pow(a, p));
      }
      const auto f = fit_loglog_slope(x, y, 1, 1e4);
      CHECK(f.slope == doctest::Approx(p).epsilon(1e-10));
      CHECK(std::exp(f.intercept) == doctest::Approx(c).epsilon(1e-9));
      CHECK(f.r_squared == doctest::Approx(1.0));
    }
  }

  TEST_CASE("window, non-positive values and degenerate input") {
    const std::vector<double> x{1, 10, 100, 1000};
    const std::vector<double> y{1, 0.1, -5, 0.001};
    const auto f = fit_loglog_slope(x, y, 1, 1000);
    CHECK(f.points == 3);
    CHECK(f.slope == doctest::Approx(-1.0));
    CHECK_THROWS_AS(fit_loglog_slope(x, y, 2, 9), EstimationError);
    CHECK_THROWS_AS(fit_loglog_slope({1, 2}, {1}, 1, 2), PreconditionError);
  }

  TEST_CASE("entry into a power-law band") {
    // Slope 0 up to alpha = 100, then -1/3.
    std::vector<double> x, y;
    for (int k = 0; k <= 50; ++k) {
      const double a = std::pow(10.0, k / 10.0);
      x.push_back(a);
      y.push_back(a <= 100 ? 1.0 : std::pow(a / 100, -1.0 / 3));
    }
    const auto entry = power_law_entry_alpha(x, y, -0.3333 - 0.01, -0.3333 + 0.01);
    REQUIRE(entry.has_value());
    CHECK(*entry == doctest::Approx(100.0));
    CHECK_FALSE(power_law_entry_alpha(x, y, -2, -1).has_value());
    // A late excursion out of the band pushes the entry back with `stay`.
    y[49] *= 3;
    const auto strict = power_law_entry_alpha(x, y, -0.35, -0.3);
    const auto loose = power_law_entry_alpha(x, y, -0.35, -0.3, 10.0, false);
    CHECK_FALSE(strict.has_value());
    CHECK(loose.has_value());
  }
}
