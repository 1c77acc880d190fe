#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace tsoftmax {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

/// Standard normal density. Throws PreconditionError for non-finite s.
double std_normal_pdf(double s);

/// Standard normal distribution function, evaluated through erfc so that
/// both tails keep full relative precision.
double std_normal_cdf(double s);

enum class QuadratureMethod { gauss_hermite, adaptive_simpson };

struct QuadratureSpec {
  QuadratureMethod method = QuadratureMethod::gauss_hermite;
  int nodes = 64;
  double abs_tol = 0.0;
  double rel_tol = 0.0;

  /// Adaptive Simpson on [-10, 10] (the clipped range for non-smooth integrands).
  static QuadratureSpec simpson(double abs_tol = 1e-10, double rel_tol = 1e-10) {
    return {QuadratureMethod::adaptive_simpson, 2, abs_tol, rel_tol};
  }

  void validate() const;
};

/// Gauss-Hermite rule for the probabilists' weight e^{-z^2/2}/sqrt(2 pi),
/// normalized so that the weights sum to one.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Cached rule with n nodes. Thread-safe.
const GaussHermiteRule& gauss_hermite_rule(int n);

/// \int f(z) Dz with Dz the standard normal measure.
///
/// Gauss-Hermite is exact for polynomials of degree <= 2n-1. When the QuadratureSpec
/// carries a tolerance, the n-node result is compared against a rule with
/// half the nodes and an EstimationError is raised if they disagree.
double gaussian_expectation(const std::function<double(double)>& f,
                            const QuadratureSpec& spec = {});

/// Adaptive Simpson quadrature of f over [a, b]. Throws EstimationError if the
/// tolerance is not met within max_depth bisections or f is non-finite.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double abs_tol, double rel_tol = 0.0, int max_depth = 50);

/// Bracketing root finder (TOMS 748: bisection safeguarded with secant and
/// inverse-cubic steps). Requires f(lo) * f(hi) <= 0. Returns a point of the
/// final bracket whose width is <= tol (tol = 0: a few ulps).
double find_root(const std::function<double(double)>& f, double lo, double hi, double tol,
                 int max_iter = 200);

/// Streaming mean/variance (Welford).
class RunningStats {
public:
  void add(double x) {
    ++count_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta * (x - mean_);
  }

  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 0.0; }
  /// Standard error of the mean.
  double std_error() const {
    return count_ > 1 ? std::sqrt(variance() / static_cast<double>(count_)) : 0.0;
  }

private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace tsoftmax
