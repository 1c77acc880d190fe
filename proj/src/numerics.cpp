#include "tsoftmax/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <Eigen/Eigenvalues>
#include <boost/math/tools/toms748_solve.hpp>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

double std_normal_pdf(double s) {
  require(std::isfinite(s), "std_normal_pdf: non-finite argument");
  return kInvSqrt2Pi * std::exp(-0.5 * s * s);
}

double std_normal_cdf(double s) {
  require(std::isfinite(s), "std_normal_cdf: non-finite argument");
  return 0.5 * std::erfc(-s / kSqrt2);
}

void QuadratureSpec::validate() const {
  require(nodes >= 2, "QuadratureSpec: nodes must be >= 2");
  require(abs_tol >= 0.0 && rel_tol >= 0.0, "QuadratureSpec: tolerances must be non-negative");
  if (method == QuadratureMethod::adaptive_simpson) {
    require(abs_tol > 0.0 || rel_tol > 0.0,
            "QuadratureSpec: adaptive methods need a positive tolerance");
  }
}

namespace {

// Golub-Welsch for the nodes, then Newton polishing on the orthonormal
// three-term recurrence and Christoffel weights 1 / sum_k p_k(x)^2, which keeps
// the tiny tail weights accurate in relative terms.
GaussHermiteRule build_rule(int n) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi, Eigen::EigenvaluesOnly);

  GaussHermiteRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = solver.eigenvalues()(i);
    double sum_sq = 0.0;
    for (int iter = 0; iter < 3; ++iter) {
      // p_n(x) and p_n'(x) for the orthonormal Hermite polynomials.
      double p_prev = 0.0, p = 1.0, dp_prev = 0.0, dp = 0.0;
      sum_sq = 0.0;
      for (int k = 0; k < n; ++k) {
        sum_sq += p * p;
        const double sk = std::sqrt(static_cast<double>(k));
        const double sk1 = std::sqrt(static_cast<double>(k + 1));
        const double p_next = (x * p - sk * p_prev) / sk1;
        const double dp_next = (p + x * dp - sk * dp_prev) / sk1;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
      }
      if (dp != 0.0) x -= p / dp;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 1.0 / sum_sq;
  }
  // Symmetrize to remove residual asymmetry from the eigen-solver.
  for (int i = 0; i < n / 2; ++i) {
    const double x = 0.5 * (rule.nodes[n - 1 - i] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[n - 1 - i] + rule.weights[i]);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  double total = 0.0;
  for (double w : rule.weights) total += w;
  for (double& w : rule.weights) w /= total;
  return rule;
}

double apply_rule(const GaussHermiteRule& rule, const std::function<double(double)>& f) {
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double value = f(rule.nodes[i]);
    if (!std::isfinite(value)) throw EstimationError("gaussian_expectation: non-finite integrand");
    sum += rule.weights[i] * value;
  }
  return sum;
}

struct SimpsonState {
  const std::function<double(double)>& f;
  double abs_tol;
  double rel_tol;
};

double eval_finite(const std::function<double(double)>& f, double x) {
  const double value = f(x);
  if (!std::isfinite(value)) {
    throw EstimationError("adaptive_simpson: non-finite integrand at x=" + std::to_string(x));
  }
  return value;
}

double simpson_recurse(const SimpsonState& st, double a, double b, double fa, double fm, double fb,
                       double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = eval_finite(st.f, lm);
  const double frm = eval_finite(st.f, rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double diff = left + right - whole;
  if (std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  if (depth <= 0) throw EstimationError("adaptive_simpson: tolerance not reached at depth limit");
  return simpson_recurse(st, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_recurse(st, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

const GaussHermiteRule& gauss_hermite_rule(int n) {
  require(n >= 2, "gauss_hermite_rule: need at least 2 nodes");
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<GaussHermiteRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermiteRule>(build_rule(n));
  return *slot;
}

double gaussian_expectation(const std::function<double(double)>& f, const QuadratureSpec& spec) {
  spec.validate();
  if (spec.method == QuadratureMethod::adaptive_simpson) {
    const auto weighted = [&f](double z) {
      const double w = kInvSqrt2Pi * std::exp(-0.5 * z * z);
      return w == 0.0 ? 0.0 : f(z) * w;
    };
    return adaptive_simpson(weighted, -10.0, 10.0, spec.abs_tol, spec.rel_tol);
  }
  const double value = apply_rule(gauss_hermite_rule(spec.nodes), f);
  if (spec.abs_tol > 0.0 || spec.rel_tol > 0.0) {
    const double coarse = apply_rule(gauss_hermite_rule(std::max(2, spec.nodes / 2)), f);
    const double tol = std::max(spec.abs_tol, spec.rel_tol * std::abs(value));
    if (std::abs(value - coarse) > tol) {
      throw EstimationError("gaussian_expectation: Gauss-Hermite did not converge within " +
                            std::to_string(spec.nodes) + " nodes");
    }
  }
  return value;
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, double rel_tol, int max_depth) {
  require(std::isfinite(a) && std::isfinite(b), "adaptive_simpson: infinite limits");
  require(abs_tol > 0.0 || rel_tol > 0.0, "adaptive_simpson: need a positive tolerance");
  if (a == b) return 0.0;
  const double fa = eval_finite(f, a);
  const double fb = eval_finite(f, b);
  const double fm = eval_finite(f, 0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  // Relative tolerance is resolved against a coarse first pass of the magnitude.
  double tol = abs_tol;
  if (rel_tol > 0.0) {
    const double scale = std::abs(whole);
    tol = std::max(tol, rel_tol * scale);
    if (tol == 0.0) tol = rel_tol;
  }
  const SimpsonState state{f, abs_tol, rel_tol};
  return simpson_recurse(state, a, b, fa, fm, fb, whole, tol, max_depth);
}

double find_root(const std::function<double(double)>& f, double lo, double hi, double tol,
                 int max_iter) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "find_root: need finite lo < hi");
  require(tol >= 0.0, "find_root: tol must be >= 0");
  const double flo = f(lo);
  const double fhi = f(hi);
  if (!std::isfinite(flo) || !std::isfinite(fhi)) {
    throw NumericalError("find_root: non-finite function value at bracket end");
  }
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    throw PreconditionError("find_root: f(lo) and f(hi) have the same sign");
  }
  // A bracket of a few ulps cannot shrink further, so it also terminates.
  const auto width_ok = [tol](double a, double b) {
    const double floor = 4.0 * std::numeric_limits<double>::epsilon() *
                         std::max(std::abs(a), std::abs(b));
    return std::abs(b - a) <= std::max(tol, floor);
  };
  std::uintmax_t iterations = static_cast<std::uintmax_t>(max_iter);
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, width_ok, iterations);
  if (!width_ok(a, b)) {
    // Exact zeros terminate early with a == b; anything else hit the cap.
    throw EstimationError("find_root: tolerance not reached within " + std::to_string(max_iter) +
                          " iterations");
  }
  return std::abs(f(a)) <= std::abs(f(b)) ? a : b;
}

}  // namespace tsoftmax
