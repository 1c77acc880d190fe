#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsoftmax/error.hpp"
#include "tsoftmax/schedule.hpp"

namespace tsoftmax {

/// Binary erf student against a sign teacher: rho = J.T/N, Q = J.J/N.
struct BinaryState {
  double rho = 0.0;
  double Q = 1.0;

  double R() const;
  double r() const { return 1.0 - R(); }
};

struct BinaryRhs {
  double drho = 0.0;
  double dQ = 0.0;
};

/// Thermodynamic-limit flow of (rho, Q), including the eta^2 update-variance term.
BinaryRhs binary_flow_rhs(const BinaryState& state, double eta);

/// dr/dalpha from the flow, with r = 1 - rho/sqrt(Q).
double binary_dr_dalpha(const BinaryState& state, double eta);

struct ReducedFunctions {
  double c = 0.0;
  double r3 = 0.0;
  double J = 0.0;
};

/// Large-Q coefficients at s = Q r:
///   dQ/dalpha ~ c Q^(-1/2),  dr/dalpha ~ r3 Q^(-3/2).
ReducedFunctions reduced_functions(double s, double eta);

/// Root of r3(., eta) on (0, s_hi]; s_hi starts at 1 and doubles up to 2^20.
double s_star(double eta);

/// arccos(R)/pi. |R| slightly above 1 is clamped and reported in `diag`.
double binary_error(double R, Diagnostics* diag = nullptr);

struct BinaryRunConfig {
  int N = 500;
  Schedule schedule = Schedule::constant(0.5);
  double alpha_max = 1e4;
  int checkpoints_per_decade = 10;
  double alpha_start = 0.0;
  /// Samples of the Monte Carlo sign-agreement estimate of eps_g.
  std::int64_t test_samples = 100000;

  void validate() const;
};

struct BinaryRow {
  double alpha = 0.0;
  double eta = 0.0;
  BinaryState state;
  double eps_g = 0.0;
  double eps_g_mc = 0.0;
  double eps_g_mc_stderr = 0.0;
};

struct BinaryTrajectory {
  std::uint64_t seed = 0;
  std::vector<BinaryRow> rows;
  bool diverged = false;
  std::string status = "ok";
  Diagnostics diagnostics;
};

/// Finite-N online SGD with squared loss on erf(t / sqrt 2).
BinaryTrajectory run_binary_online(const BinaryRunConfig& config, std::uint64_t seed);

struct BinaryFlowRow {
  double alpha = 0.0;
  BinaryState state;
  double eps_g = 0.0;
};

/// Integrates the flow from `start` at alpha_start and samples it on a grid.
std::vector<BinaryFlowRow> integrate_binary_flow(const BinaryState& start,
                                                 const Schedule& schedule, double alpha_start,
                                                 const std::vector<double>& alpha_grid,
                                                 double abs_tol = 1e-10, double rel_tol = 1e-10);

}  // namespace tsoftmax
