#include "tsoftmax/closure.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <boost/numeric/odeint.hpp>

#include "tsoftmax/model.hpp"
#include "tsoftmax/numerics.hpp"

namespace tsoftmax {

namespace {

void check_state(double D, double Delta, int K) {
  require(K >= 2, "closure: K must be >= 2");
  require(std::isfinite(D) && D >= 0.0, "closure: D must be finite and >= 0");
  require(std::isfinite(Delta) && Delta >= 0.0, "closure: Delta must be finite and >= 0");
}

/// Scratch buffers and per-sample evaluation of the symmetrized brackets.
class BracketKernel {
public:
  BracketKernel(double D, double Delta, int K)
      : D_(D), sqrt_delta_(std::sqrt(Delta)), K_(K), u_(K), z_(K), h_(K), p_(K) {}

  Eigen::VectorXd& u() { return u_; }
  Eigen::VectorXd& z() { return z_; }

  struct Sums {
    double gu = 0.0;  // sum_a g_a u_a
    double gh = 0.0;  // sum_a g_a h_a
    double gz = 0.0;  // sum_a g_a z_a
    double g2 = 0.0;  // sum_a g_a^2
  };

  /// Evaluates with z scaled by `sign` (antithetic partner uses -1).
  Sums evaluate(double sign) {
    const double ubar = u_.mean();
    const double zbar = z_.mean();
    for (int a = 0; a < K_; ++a) {
      h_[a] = D_ * (u_[a] - ubar) + sign * sqrt_delta_ * (z_[a] - zbar);
    }
    const int label = argmax(u_);
    softmax_into(h_, p_);
    Sums s;
    for (int a = 0; a < K_; ++a) {
      const double g = (a == label ? 1.0 : 0.0) - p_[a];
      s.gu += g * u_[a];
      s.gh += g * h_[a];
      s.gz += g * sign * z_[a];
      s.g2 += g * g;
    }
    return s;
  }

private:
  double D_;
  double sqrt_delta_;
  int K_;
  Eigen::VectorXd u_, z_, h_, p_;
};

}  // namespace

ClosureRhs closure_rhs(double D, double Delta, double eta, int K,
                       const ClosureEstimatorConfig& est) {
  check_state(D, Delta, K);
  require(est.samples >= 1, "closure_rhs: samples must be >= 1");
  if (eta == 0.0) return {};
  if (K == 2 && est.exact_k2) return closure_rhs_k2_quadrature(D, Delta, eta);

  const double inv_km1 = 1.0 / (K - 1);
  const double sqrt_delta = std::sqrt(Delta);
  Rng rng(est.stream);
  BracketKernel kernel(D, Delta, K);
  RunningStats d_stats, q_stats, delta_stats;

  const auto contributions = [&](const BracketKernel::Sums& s) {
    return std::array<double, 3>{eta * inv_km1 * s.gu,
                                 inv_km1 * (2.0 * eta * s.gh + eta * eta * s.g2),
                                 inv_km1 * (2.0 * eta * sqrt_delta * s.gz + eta * eta * s.g2)};
  };

  const std::int64_t draws = est.antithetic ? (est.samples + 1) / 2 : est.samples;
  for (std::int64_t i = 0; i < draws; ++i) {
    for (int a = 0; a < K; ++a) kernel.u()[a] = rng.normal();
    for (int a = 0; a < K; ++a) kernel.z()[a] = rng.normal();
    auto c = contributions(kernel.evaluate(1.0));
    if (est.antithetic) {
      const auto c2 = contributions(kernel.evaluate(-1.0));
      for (int k = 0; k < 3; ++k) c[k] = 0.5 * (c[k] + c2[k]);
    }
    d_stats.add(c[0]);
    q_stats.add(c[1]);
    delta_stats.add(c[2]);
  }
  ClosureRhs out{d_stats.mean(), delta_stats.mean(), q_stats.mean(), d_stats.std_error(),
                 delta_stats.std_error()};
  if (!std::isfinite(out.dD) || !std::isfinite(out.dDelta) || !std::isfinite(out.dQeff)) {
    throw NumericalError("closure_rhs: non-finite estimate");
  }
  return out;
}

ClosureRhs closure_rhs_k2_quadrature(double D, double Delta, double eta) {
  check_state(D, Delta, 2);
  if (eta == 0.0) return {};
  const double sqrt_delta = std::sqrt(Delta);
  const auto& rule = gauss_hermite_rule(64);

  // Inner Gauss-Hermite average over y of the three integrands at fixed w;
  // theta is the teacher indicator, constant on each half line.
  const auto inner = [&](double w, double theta, int which) {
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double y = rule.nodes[i];
      const double gap = D * w + sqrt_delta * y;
      const double g = theta - 1.0 / (1.0 + std::exp(-kSqrt2 * gap));
      double value = 0.0;
      switch (which) {
        case 0: value = kSqrt2 * w * g; break;
        case 1: value = 2.0 * kSqrt2 * eta * gap * g + 2.0 * eta * eta * g * g; break;
        default: value = 2.0 * kSqrt2 * eta * sqrt_delta * y * g + 2.0 * eta * eta * g * g; break;
      }
      sum += rule.weights[i] * value;
    }
    return sum;
  };
  // For large D the integrands live within O(1/D) of w = 0, so each half line
  // is cut geometrically from that scale outward; a single Simpson panel would
  // sample only the flat tails and stop early.
  std::vector<double> edges{0.0};
  for (double b = 0.125 / std::max(1.0, D); b < 12.0; b *= 2.0) edges.push_back(b);
  edges.push_back(12.0);
  const auto integrate = [&](int which) {
    const auto neg = [&](double w) { return std_normal_pdf(w) * inner(w, 0.0, which); };
    const auto pos = [&](double w) { return std_normal_pdf(w) * inner(w, 1.0, which); };
    double total = 0.0;
    for (std::size_t k = 1; k < edges.size(); ++k) {
      total += adaptive_simpson(neg, -edges[k], -edges[k - 1], 1e-13) +
               adaptive_simpson(pos, edges[k - 1], edges[k], 1e-13);
    }
    return total;
  };
  ClosureRhs out;
  out.dD = eta * integrate(0);
  out.dQeff = integrate(1);
  out.dDelta = integrate(2);
  return out;
}

CenteredSample sample_centered_fields(double D, double Delta, int K, Rng& rng) {
  check_state(D, Delta, K);
  CenteredSample s;
  s.u.resize(K);
  s.z.resize(K);
  rng.fill_normal(s.u);
  rng.fill_normal(s.z);
  s.h = D * (s.u.array() - s.u.mean()).matrix() +
        std::sqrt(Delta) * (s.z.array() - s.z.mean()).matrix();
  s.label = argmax(s.u);
  Eigen::VectorXd p(K);
  softmax_into(s.h, p);
  s.g = -p;
  s.g[s.label] += 1.0;
  return s;
}

ObservableEstimate theory_observables(double D, double Delta, int K,
                                      const ClosureEstimatorConfig& est) {
  check_state(D, Delta, K);
  require(est.samples >= 1, "theory_observables: samples must be >= 1");
  Rng rng(est.stream);
  const double sqrt_delta = std::sqrt(Delta);
  Eigen::VectorXd u(K), z(K), h(K);
  std::int64_t wrong = 0;
  RunningStats loss;
  for (std::int64_t i = 0; i < est.samples; ++i) {
    for (int a = 0; a < K; ++a) u[a] = rng.normal();
    for (int a = 0; a < K; ++a) z[a] = rng.normal();
    const double ubar = u.mean();
    const double zbar = z.mean();
    for (int a = 0; a < K; ++a) h[a] = D * (u[a] - ubar) + sqrt_delta * (z[a] - zbar);
    const int label = argmax(u);
    if (argmax(h) != label) ++wrong;
    loss.add(log_sum_exp(h) - h[label]);
  }
  const double n = static_cast<double>(est.samples);
  const double p = static_cast<double>(wrong) / n;
  return {p, std::sqrt(p * (1.0 - p) / n), loss.mean(), loss.std_error()};
}

std::string source_name(CurveSource source) {
  switch (source) {
    case CurveSource::exact_closure: return "exact-closure";
    case CurveSource::fixed_eta_asymptote: return "fixed-eta-asymptote";
    case CurveSource::schedule_asymptote: return "schedule-asymptote";
  }
  return "unknown";
}

TheoryCurve integrate_flow(double D0, double Delta0, const Schedule& schedule,
                           const std::vector<double>& alpha_grid, int K,
                           const ClosureEstimatorConfig& est, const FlowOptions& options) {
  namespace odeint = boost::numeric::odeint;
  using State = std::array<double, 2>;

  check_state(D0, Delta0, K);
  schedule.validate();
  require(!alpha_grid.empty(), "integrate_flow: empty alpha grid");
  require(std::is_sorted(alpha_grid.begin(), alpha_grid.end()) &&
              std::adjacent_find(alpha_grid.begin(), alpha_grid.end()) == alpha_grid.end(),
          "integrate_flow: alpha grid must be strictly increasing");
  require(alpha_grid.front() >= options.alpha_start,
          "integrate_flow: grid starts before alpha_start");

  TheoryCurve curve;
  curve.source = CurveSource::exact_closure;
  std::int64_t step_index = 0;
  std::size_t clamped_stages = 0;
  ClosureEstimatorConfig step_est = est;

  const auto system = [&](const State& x, State& dxdt, double alpha) {
    double D = x[0];
    double Delta = x[1];
    if (D < 0.0 || Delta < 0.0) ++clamped_stages;
    D = std::max(D, 0.0);
    Delta = std::max(Delta, 0.0);
    const ClosureRhs rhs = closure_rhs(D, Delta, eta_at(schedule, std::max(alpha, 0.0)), K, step_est);
    dxdt = {rhs.dD, rhs.dDelta};
  };

  auto stepper =
      odeint::make_controlled<odeint::runge_kutta_cash_karp54<State>>(options.abs_tol,
                                                                       options.rel_tol);
  State x{D0, Delta0};
  double alpha = options.alpha_start;
  double dt = 1e-2 * std::max(alpha, 1.0);

  for (double target : alpha_grid) {
    while (alpha < target) {
      const double cap = options.max_step_fraction * std::max(alpha, 1.0);
      dt = std::min({dt, cap, target - alpha});
      // Snap onto the target when the remainder would be a sliver.
      if (target - alpha - dt < 1e-12 * std::max(target, 1.0)) dt = target - alpha;
      step_est.stream = est.stream.child("step", static_cast<std::uint64_t>(step_index));
      const double before = alpha;
      const auto result = stepper.try_step(system, x, alpha, dt);
      if (result == odeint::success) {
        ++step_index;
        if (alpha > target || target - alpha < 1e-12 * std::max(target, 1.0)) alpha = target;
        if (!std::isfinite(x[0]) || !std::isfinite(x[1])) {
          throw NumericalError("integrate_flow: non-finite state after alpha=" +
                               std::to_string(before));
        }
        if (x[1] < 0.0) {
          if (x[1] < -options.negative_delta_tol) {
            curve.diagnostics.warn("Delta=" + std::to_string(x[1]) + " clamped to 0 at alpha=" +
                                   std::to_string(alpha));
          }
          x[1] = 0.0;
        }
        x[0] = std::max(x[0], 0.0);
      } else if (dt < 1e-12 * std::max(alpha, 1.0)) {
        throw NumericalError("integrate_flow: step size underflow at alpha=" +
                             std::to_string(alpha));
      }
    }
    curve.rows.push_back({target, x[0], x[1], 0.0, 0.0, eta_at(schedule, target)});
  }
  if (clamped_stages > 0) {
    curve.diagnostics.warn(std::to_string(clamped_stages) +
                           " stage evaluations saw a negative state and were clamped");
  }

  if (options.fill_observables) {
    ClosureEstimatorConfig obs_est = est;
    if (options.observable_samples > 0) obs_est.samples = options.observable_samples;
    for (std::size_t i = 0; i < curve.rows.size(); ++i) {
      obs_est.stream = est.stream.child("observables", i);
      const auto obs = theory_observables(curve.rows[i].D, curve.rows[i].Delta, K, obs_est);
      curve.rows[i].eps_g = obs.eps_g;
      curve.rows[i].test_loss = obs.test_loss;
    }
  }
  return curve;
}

}  // namespace tsoftmax
