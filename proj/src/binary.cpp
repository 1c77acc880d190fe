#include "tsoftmax/binary.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Core>
#include <boost/numeric/odeint.hpp>

#include "tsoftmax/numerics.hpp"
#include "tsoftmax/rng.hpp"
#include "tsoftmax/sim.hpp"

namespace tsoftmax {

double BinaryState::R() const {
  require(Q > 0.0, "BinaryState: Q must be > 0");
  return rho / std::sqrt(Q);
}

BinaryRhs binary_flow_rhs(const BinaryState& state, double eta) {
  const double Q = state.Q;
  const double rho = state.rho;
  require(std::isfinite(Q) && Q > 0.0, "binary_flow_rhs: Q must be > 0");
  require(std::isfinite(rho), "binary_flow_rhs: rho must be finite");
  const double gap = Q - rho * rho + 1.0;
  require(gap >= 0.0, "binary_flow_rhs: Q - rho^2 + 1 < 0");
  if (eta == 0.0) return {};

  const double s2q = std::sqrt(2.0 * Q + 1.0);
  const double sgap = std::sqrt(gap);
  const double drho = 2.0 * eta / (kPi * (Q + 1.0)) * (sgap - rho / s2q);
  const double drift = 4.0 * eta / (kPi * (Q + 1.0)) * (rho / sgap - Q / s2q);
  double ratio = rho / std::sqrt((3.0 * Q + 1.0) * (2.0 * (Q - rho * rho) + 1.0));
  ratio = std::clamp(ratio, -1.0, 1.0);
  const double noise = 2.0 * eta * eta / (kPi * kPi * s2q) *
                       (kPi + 2.0 * std::asin(Q / (3.0 * Q + 1.0)) - 4.0 * std::asin(ratio));
  return {drho, drift + noise};
}

double binary_dr_dalpha(const BinaryState& state, double eta) {
  const auto rhs = binary_flow_rhs(state, eta);
  // d(rho Q^-1/2) = drho Q^-1/2 - rho Q^-3/2 dQ / 2
  const double sq = std::sqrt(state.Q);
  return 0.5 * state.rho / (state.Q * sq) * rhs.dQ - rhs.drho / sq;
}

ReducedFunctions reduced_functions(double s, double eta) {
  require(std::isfinite(s) && s >= 0.0, "reduced_functions: s must be >= 0");
  const double J = kPi + 2.0 * std::asin(1.0 / 3.0) - 4.0 * std::asin(1.0 / std::sqrt(3.0 * (1.0 + 4.0 * s)));
  const double root = std::sqrt(1.0 + 2.0 * s);
  const double c = 4.0 * eta / kPi * (1.0 / root - 1.0 / kSqrt2) + kSqrt2 / (kPi * kPi) * eta * eta * J;
  const double r3 = -4.0 * eta * s / (kPi * root) + eta * eta / (kPi * kPi * kSqrt2) * J;
  return {c, r3, J};
}

double s_star(double eta) {
  require(std::isfinite(eta) && eta > 0.0, "s_star: eta must be > 0");
  const auto r3 = [eta](double s) { return reduced_functions(s, eta).r3; };
  // r3(0) > 0; grow the bracket until r3 turns negative.
  double hi = 1.0;
  while (r3(hi) >= 0.0) {
    hi *= 2.0;
    if (hi > 1048576.0) throw NumericalError("s_star: no sign change of r3 on (0, 2^20]");
  }
  return find_root(r3, 0.0, hi, 0.0);
}

double binary_error(double R, Diagnostics* diag) {
  require(std::isfinite(R), "binary_error: R must be finite");
  if (std::abs(R) > 1.0) {
    if (diag) diag->warn("binary_error: |R| = " + std::to_string(std::abs(R)) + " clamped to 1");
    R = std::clamp(R, -1.0, 1.0);
  }
  return std::acos(R) / kPi;
}

void BinaryRunConfig::validate() const {
  require(N >= 1, "binary: N must be >= 1");
  schedule.validate();
  require(std::isfinite(alpha_max) && alpha_max > 0.0, "binary: alpha_max must be > 0");
  require(checkpoints_per_decade >= 1, "binary: checkpoints_per_decade must be >= 1");
  require(alpha_start >= 0.0 && alpha_start <= alpha_max, "binary: alpha_start out of range");
  require(test_samples >= 1, "binary: test_samples must be >= 1");
}

BinaryTrajectory run_binary_online(const BinaryRunConfig& config, std::uint64_t seed) {
  config.validate();
  const int N = config.N;
  const double sqrt_n = std::sqrt(static_cast<double>(N));
  const double kGPrime = std::sqrt(2.0 / kPi);

  BinaryTrajectory traj;
  traj.seed = seed;

  Eigen::VectorXd T(N), J(N), xi(N);
  Rng teacher_rng(RngStream{seed, "binary-teacher", 0});
  teacher_rng.fill_normal(T);
  T *= sqrt_n / T.norm();
  Rng student_rng(RngStream{seed, "binary-student", 0});
  student_rng.fill_normal(J);
  Rng train(RngStream{seed, "train", 0});
  const RngStream eval_base{seed, "eval", 0};

  const auto steps = checkpoint_steps(config.alpha_max, config.checkpoints_per_decade, N,
                                      config.alpha_start);
  std::int64_t mu = 0;
  const auto record = [&](std::int64_t step, std::size_t index) {
    const double alpha = static_cast<double>(step) / N;
    BinaryState s{T.dot(J) / N, J.squaredNorm() / N};
    BinaryRow row;
    row.alpha = alpha;
    row.eta = eta_at(config.schedule, alpha);
    row.state = s;
    const double R = s.R();
    row.eps_g = binary_error(R, &traj.diagnostics);
    // Sign disagreement of (u, v) with correlation R.
    Rng eval(eval_base.child("checkpoint", index));
    const double Rc = std::clamp(R, -1.0, 1.0);
    const double orth = std::sqrt(std::max(0.0, 1.0 - Rc * Rc));
    std::int64_t wrong = 0;
    for (std::int64_t i = 0; i < config.test_samples; ++i) {
      const double u = eval.normal();
      const double v = Rc * u + orth * eval.normal();
      wrong += ((u > 0.0) != (v > 0.0)) ? 1 : 0;
    }
    const double M = static_cast<double>(config.test_samples);
    row.eps_g_mc = wrong / M;
    row.eps_g_mc_stderr = std::sqrt(row.eps_g_mc * (1.0 - row.eps_g_mc) / M);
    traj.rows.push_back(row);
  };

  for (std::size_t c = 0; c < steps.size(); ++c) {
    const std::int64_t target = steps[c];
    while (mu < target) {
      const double eta = eta_at(config.schedule, static_cast<double>(mu + 1) / N);
      train.fill_normal(xi);
      const double u = T.dot(xi) / sqrt_n;
      const double t = J.dot(xi) / sqrt_n;
      const double tau = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
      const double delta = (tau - std::erf(t / kSqrt2)) * kGPrime * std::exp(-0.5 * t * t);
      J.noalias() += (eta * delta / sqrt_n) * xi;
      ++mu;
      if ((mu & 1023) == 0 && !(J.allFinite() && J.lpNorm<Eigen::Infinity>() < 1e12)) break;
    }
    if (!(J.allFinite() && J.lpNorm<Eigen::Infinity>() < 1e12)) {
      traj.diverged = true;
      traj.status = "diverged at alpha=" + std::to_string(static_cast<double>(mu) / N);
      break;
    }
    record(target, c);
  }
  return traj;
}

std::vector<BinaryFlowRow> integrate_binary_flow(const BinaryState& start,
                                                 const Schedule& schedule, double alpha_start,
                                                 const std::vector<double>& alpha_grid,
                                                 double abs_tol, double rel_tol) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 2>;
  schedule.validate();
  require(start.Q > 0.0, "integrate_binary_flow: Q must be > 0");
  require(!alpha_grid.empty() && std::is_sorted(alpha_grid.begin(), alpha_grid.end()),
          "integrate_binary_flow: grid must be non-empty and sorted");
  require(alpha_grid.front() >= alpha_start, "integrate_binary_flow: grid starts before start");

  const auto system = [&](const State& x, State& dxdt, double alpha) {
    const auto rhs = binary_flow_rhs({x[0], x[1]}, eta_at(schedule, std::max(alpha, 0.0)));
    dxdt = {rhs.drho, rhs.dQ};
  };
  std::vector<double> times;
  times.push_back(alpha_start);
  for (double a : alpha_grid) {
    if (a > times.back()) times.push_back(a);
  }
  std::vector<BinaryFlowRow> rows;
  const auto observe = [&](const State& x, double alpha) {
    const BinaryState s{x[0], x[1]};
    rows.push_back({alpha, s, binary_error(s.R())});
  };
  State x{start.rho, start.Q};
  if (times.size() == 1) {
    observe(x, alpha_start);
  } else {
    auto stepper = odeint::make_dense_output(abs_tol, rel_tol, odeint::runge_kutta_dopri5<State>());
    odeint::integrate_times(stepper, system, x, times.begin(), times.end(),
                            1e-3 * std::max(alpha_start, 1.0), observe);
  }
  // Drop the start point unless the caller asked for it.
  if (!rows.empty() && alpha_grid.front() > alpha_start) rows.erase(rows.begin());
  return rows;
}

}  // namespace tsoftmax
