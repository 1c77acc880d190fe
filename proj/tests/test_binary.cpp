#include <cmath>

#include "doctest.h"
#include "tsoftmax/analysis.hpp"
#include "tsoftmax/binary.hpp"
#include "tsoftmax/error.hpp"
#include "tsoftmax/numerics.hpp"
#include "tsoftmax/rng.hpp"

using namespace tsoftmax;

namespace {

// Expected update of (rho, Q) by sampling the jointly Gaussian fields (u, t).
std::pair<RunningStats, RunningStats> mc_flow(double rho, double Q, double eta, int samples) {
  Rng rng(RngStream{1, "binary-oracle", 0});
  RunningStats drho, dQ;
  const double orth = std::sqrt(Q - rho * rho);
  for (int i = 0; i < samples; ++i) {
    const double u = rng.normal();
    const double t = rho * u + orth * rng.normal();
    const double tau = u > 0 ? 1.0 : -1.0;
    const double delta = (tau - std::erf(t / std::sqrt(2.0))) * std::sqrt(2 / kPi) * std::exp(-t * t / 2);
    drho.add(eta * delta * u);
    dQ.add(2 * eta * delta * t + eta * eta * delta * delta);
  }
  return {drho, dQ};
}

}  // namespace

TEST_SUITE("binary") {
  TEST_CASE("flow matches a Monte Carlo oracle") {
    for (auto [rho, Q] : {std::pair{0.0, 1.0}, std::pair{0.8, 1.0}, std::pair{2.0, 5.0}, std::pair{9.0, 100.0}}) {
      const auto rhs = binary_flow_rhs({rho, Q}, 0.5);
      const auto [drho, dQ] = mc_flow(rho, Q, 0.5, 2000000);
      CHECK(std::abs(rhs.drho - drho.mean()) < 4 * drho.std_error());
      CHECK(std::abs(rhs.dQ - dQ.mean()) < 4 * dQ.std_error());
    }
  }

  TEST_CASE("flow special values and domain") {
    const auto zero = binary_flow_rhs({0.3, 2.0}, 0.0);
    CHECK(zero.drho == 0.0);
    CHECK(zero.dQ == 0.0);
    CHECK(binary_flow_rhs({0.0, 1.0}, 0.7).drho == doctest::Approx(0.7 * std::sqrt(2.0) / kPi));
    CHECK_THROWS_AS(binary_flow_rhs({0.0, 0.0}, 0.5), PreconditionError);
    CHECK_THROWS_AS(binary_flow_rhs({3.0, 1.0}, 0.5), PreconditionError);
  }

  TEST_CASE("reduced functions") {
    const double J0 = kPi + 2 * std::asin(1.0 / 3) - 4 * std::asin(1 / std::sqrt(3.0));
    CHECK(J0 == doctest::Approx(1.35935).epsilon(1e-5));
    CHECK(reduced_functions(0.0, 1.0).J == doctest::Approx(J0));
    CHECK(reduced_functions(0.0, 0.5).r3 == doctest::Approx(0.25 / (kPi * kPi * std::sqrt(2.0)) * J0));
    CHECK(reduced_functions(0.0, 0.5).r3 > 0.0);
    CHECK(reduced_functions(1e3, 0.5).r3 < 0.0);
    CHECK_THROWS_AS(reduced_functions(-1.0, 0.5), PreconditionError);
  }

  TEST_CASE("s star: residual and monotonicity") {
    double prev = 0.0;
    for (double eta = 0.1; eta <= 2.0 + 1e-9; eta += 0.1) {
      const double s = s_star(eta);
      CHECK(std::abs(reduced_functions(s, eta).r3) < 1e-10);
      CHECK(s > prev);
      prev = s;
    }
    CHECK_THROWS_AS(s_star(0.0), PreconditionError);
  }

  TEST_CASE("large-Q expansion of the flow") {
    const double eta = 0.5, Q = 1e4;
    const double s = s_star(eta);
    const BinaryState st{(1 - s / Q) * std::sqrt(Q), Q};
    const auto rf = reduced_functions(s, eta);
    CHECK(binary_flow_rhs(st, eta).dQ == doctest::Approx(rf.c / std::sqrt(Q)).epsilon(0.02));
    // Away from the root r3 dominates the drift of r.
    for (double s2 : {0.1, 1.0, 10.0}) {
      const double Qb = 1e6;
      const BinaryState b{(1 - s2 / Qb) * std::sqrt(Qb), Qb};
      CHECK(binary_dr_dalpha(b, eta) * std::pow(Qb, 1.5) ==
            doctest::Approx(reduced_functions(s2, eta).r3).epsilon(0.05));
    }
  }

  TEST_CASE("binary error") {
    CHECK(binary_error(1.0) == 0.0);
    CHECK(binary_error(0.0) == doctest::Approx(0.5));
    CHECK(binary_error(1 - 2e-4) == doctest::Approx(0.006366).epsilon(1e-3));
    Diagnostics d;
    CHECK(binary_error(1.0 + 1e-12, &d) == 0.0);
    CHECK_FALSE(d.empty());
  }

  TEST_CASE("online run: frozen at eta = 0, MC error tracks arccos") {
    BinaryRunConfig c;
    c.N = 100;
    c.alpha_max = 50;
    c.test_samples = 20000;
    c.schedule = Schedule::constant(0.0);
    const auto frozen = run_binary_online(c, 1);
    for (const auto& r : frozen.rows) CHECK(r.state.Q == frozen.rows.front().state.Q);

    c.schedule = Schedule::constant(0.5);
    const auto t = run_binary_online(c, 3);
    CHECK_FALSE(t.diverged);
    for (const auto& r : t.rows) {
      CHECK(std::abs(r.eps_g_mc - r.eps_g) <= 3 * std::max(r.eps_g_mc_stderr, 1.0 / c.test_samples));
    }
    CHECK(t.rows.back().eps_g < t.rows.front().eps_g);
    const auto again = run_binary_online(c, 3);
    CHECK(again.rows.back().state.Q == t.rows.back().state.Q);
  }

  TEST_CASE("flow integration") {
    const auto rows = integrate_binary_flow({0.1, 1.0}, Schedule::constant(0.5), 1.0, {1.0, 10.0, 100.0});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].state.Q == 1.0);
    CHECK(rows[2].state.Q > rows[1].state.Q);
    CHECK(rows[2].eps_g < rows[0].eps_g);
  }
}
