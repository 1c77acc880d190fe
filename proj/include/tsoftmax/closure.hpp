#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsoftmax/error.hpp"
#include "tsoftmax/rng.hpp"
#include "tsoftmax/schedule.hpp"

namespace tsoftmax {

/// Monte Carlo settings for averages over the centered Gaussian representation
///   h_a = D (u_a - ubar) + sqrt(Delta) (z_a - zbar),   u, z iid N(0, 1).
struct ClosureEstimatorConfig {
  std::int64_t samples = 100000;
  RngStream stream{0, "closure", 0};
  /// Pair every draw (u, z) with (u, -z).
  bool antithetic = true;
  /// For K = 2, evaluate the brackets by deterministic quadrature instead.
  bool exact_k2 = false;
};

struct ClosureRhs {
  double dD = 0.0;
  double dDelta = 0.0;
  double dQeff = 0.0;
  double dD_stderr = 0.0;
  double dDelta_stderr = 0.0;
};

/// Right-hand side of the exact centered closure
///   dD/dalpha      = K/(K-1) eta <g_1 (u_1 - ubar)>
///   dQeff/dalpha   = K/(K-1) (2 eta <g_1 h_1> + eta^2 <g_1^2>)
///   dDelta/dalpha  = dQeff/dalpha - 2 D dD/dalpha
/// with g_a = 1{u_a = max u} - softmax(h)_a.
///
/// The brackets are estimated in class-symmetrized form, e.g.
/// <g_1 (u_1 - ubar)> = <sum_a g_a u_a> / K, which is exact under the symmetric
/// law and cancels the O(1) boundary offset sample by sample. dDelta is
/// accumulated per sample as 2 eta sqrt(Delta) sum_a g_a z_a + eta^2 sum_a g_a^2.
ClosureRhs closure_rhs(double D, double Delta, double eta, int K,
                       const ClosureEstimatorConfig& est);

/// K = 2 brackets by quadrature over the two independent gaps
/// w = (u_1 - u_2)/sqrt 2 and y = (z_1 - z_2)/sqrt 2.
ClosureRhs closure_rhs_k2_quadrature(double D, double Delta, double eta);

/// One draw from the representation, with the update vector g.
struct CenteredSample {
  Eigen::VectorXd u;
  Eigen::VectorXd z;
  Eigen::VectorXd h;
  Eigen::VectorXd g;
  int label = 0;
};

CenteredSample sample_centered_fields(double D, double Delta, int K, Rng& rng);

struct ObservableEstimate {
  double eps_g = 0.0;
  double eps_g_stderr = 0.0;
  double test_loss = 0.0;
  double test_loss_stderr = 0.0;
};

/// Pr[argmax h != argmax u] and E[-log p_y] at fixed (D, Delta), by Monte Carlo.
ObservableEstimate theory_observables(double D, double Delta, int K,
                                      const ClosureEstimatorConfig& est);

enum class CurveSource { exact_closure, fixed_eta_asymptote, schedule_asymptote };

std::string source_name(CurveSource source);

struct TheoryRow {
  double alpha = 0.0;
  double D = 0.0;
  double Delta = 0.0;
  double eps_g = 0.0;
  double test_loss = 0.0;
  double eta = 0.0;
};

struct TheoryCurve {
  CurveSource source = CurveSource::exact_closure;
  std::vector<TheoryRow> rows;
  Diagnostics diagnostics;
};

struct FlowOptions {
  double alpha_start = 0.0;
  double abs_tol = 1e-8;
  double rel_tol = 1e-6;
  /// Steps are capped at this fraction of max(alpha, 1).
  double max_step_fraction = 0.25;
  /// Negative Delta beyond this is reported before clamping to 0.
  double negative_delta_tol = 1e-6;
  bool fill_observables = true;
  /// Samples per observable evaluation; 0 uses the estimator's count.
  std::int64_t observable_samples = 0;
};

/// Integrates the closure from (D0, Delta0) at options.alpha_start and records
/// the state at every grid point. The Monte Carlo seed of each step is derived
/// from the step index, so the curve is deterministic.
TheoryCurve integrate_flow(double D0, double Delta0, const Schedule& schedule,
                           const std::vector<double>& alpha_grid, int K,
                           const ClosureEstimatorConfig& est, const FlowOptions& options = {});

}  // namespace tsoftmax
