#include "tsoftmax/asymptotics.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "tsoftmax/error.hpp"
#include "tsoftmax/numerics.hpp"

namespace tsoftmax {

namespace {

constexpr double kPi2Over6 = kPi * kPi / 6.0;

// log(2 cosh x), stable for large |x|.
double log_2cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a));
}

void check_grid(const std::vector<double>& alpha_grid) {
  for (double a : alpha_grid) {
    require(std::isfinite(a) && a > 0.0, "prediction grid values must be positive");
  }
}

}  // namespace

double boundary_density(int K) {
  require(K >= 2, "boundary_density: K must be >= 2");
  static std::mutex mutex;
  static std::map<int, double> cache;
  {
    std::lock_guard lock(mutex);
    if (auto it = cache.find(K); it != cache.end()) return it->second;
  }
  const auto f = [K](double s) {
    const double phi = std_normal_pdf(s);
    return phi * phi * std::pow(std_normal_cdf(s), K - 2);
  };
  // Split at 0 so both halves are smooth and well resolved.
  const double value =
      adaptive_simpson(f, -12.0, 0.0, 1e-14, 0.0) + adaptive_simpson(f, 0.0, 12.0, 1e-14, 0.0);
  std::lock_guard lock(mutex);
  cache[K] = value;
  return value;
}

LocalIntegrals local_integrals(double delta) {
  require(std::isfinite(delta), "local_integrals: delta must be finite");
  const double d2 = delta * delta;
  return {-delta, 0.5 * d2 + kPi2Over6, kPi2Over6 - 0.5 * d2, 2.0 * log_2cosh(0.5 * delta) - 1.0};
}

double script_B(double Delta) {
  require(std::isfinite(Delta) && Delta >= 0.0, "script_B: Delta must be >= 0");
  // 2 log(2 cosh x) = 2|x| + 2 log1p(exp(-2|x|)). The |x| part is exact; the
  // rest is even and smooth on z >= 0, where Simpson converges quickly.
  // Gauss-Hermite loses digits here once Delta is O(1): the integrand has
  // poles at distance pi / sqrt(2 Delta) from the real axis.
  const double scale = std::sqrt(0.5 * Delta);
  if (scale == 0.0) return 2.0 * std::log(2.0) - 1.0;
  const auto remainder = [scale](double z) {
    return 2.0 * std_normal_pdf(z) * 2.0 * std::log1p(std::exp(-2.0 * scale * z));
  };
  return 2.0 * scale * std::sqrt(2.0 / kPi) + adaptive_simpson(remainder, 0.0, 14.0, 1e-15) - 1.0;
}

double delta_star(double eta) {
  require(std::isfinite(eta) && eta > 0.0, "delta_star: eta must be > 0");
  const auto f = [eta](double d) { return 2.0 * d - eta * script_B(d); };
  double hi = std::max(1.0, eta);
  int doublings = 0;
  while (f(hi) <= 0.0) {
    hi *= 2.0;
    if (++doublings > 200) throw NumericalError("delta_star: no sign change found");
  }
  // f(0) = -eta B(0) < 0, so [0, hi] brackets the root.
  return find_root(f, 0.0, hi, 0.0);
}

AsymptoticRhs asymptotic_rhs(double D, double Delta, double eta, int K) {
  require(std::isfinite(D) && D > 0.0, "asymptotic_rhs: D must be > 0");
  require(std::isfinite(Delta) && Delta >= 0.0, "asymptotic_rhs: Delta must be >= 0");
  if (eta == 0.0) return {};
  const double c = boundary_density(K);
  return {0.5 * K * c * eta / (D * D) * (kPi2Over6 + Delta),
          K * c / D * (eta * eta * script_B(Delta) - 2.0 * eta * Delta)};
}

AsymptoticConstants asymptotic_constants(int K) {
  AsymptoticConstants out;
  out.K = K;
  out.c_K = boundary_density(K);
  out.Gamma_K = K * (K - 1) * out.c_K / std::sqrt(kPi);
  out.kappa = kKappa;
  out.A_K = out.Gamma_K * std::sqrt(out.kappa) * std::cbrt(4.0 / (K * out.c_K * kPi * kPi));
  return out;
}

void to_json(nlohmann::json& j, const AsymptoticConstants& c) {
  j = nlohmann::json{{"K", c.K}, {"c_K", c.c_K}, {"Gamma_K", c.Gamma_K},
                     {"kappa", c.kappa}, {"A_K", c.A_K}};
}

void from_json(const nlohmann::json& j, AsymptoticConstants& c) {
  j.at("K").get_to(c.K);
  j.at("c_K").get_to(c.c_K);
  j.at("Gamma_K").get_to(c.Gamma_K);
  j.at("kappa").get_to(c.kappa);
  j.at("A_K").get_to(c.A_K);
}

double asymptotic_test_loss(int K, double D, double Delta) {
  require(D > 0.0, "asymptotic_test_loss: D must be > 0");
  return K * (K - 1) * boundary_density(K) / (2.0 * D) * (kPi2Over6 + Delta);
}

TheoryCurve fixed_eta_prediction(int K, double eta, const std::vector<double>& alpha_grid) {
  require(std::isfinite(eta) && eta > 0.0, "fixed_eta_prediction: eta must be > 0");
  check_grid(alpha_grid);
  const auto k = asymptotic_constants(K);
  const double ds = delta_star(eta);
  const double rate = 1.5 * K * k.c_K * eta * (kPi2Over6 + ds);
  TheoryCurve curve;
  curve.source = CurveSource::fixed_eta_asymptote;
  for (double alpha : alpha_grid) {
    const double D = std::cbrt(rate * alpha);
    curve.rows.push_back(
        {alpha, D, ds, k.Gamma_K * std::sqrt(ds) / D, asymptotic_test_loss(K, D, ds), eta});
  }
  return curve;
}

SchedulePrediction schedule_prediction(int K, const Schedule& schedule,
                                       const std::vector<double>& alpha_grid) {
  schedule.validate();
  check_grid(alpha_grid);
  const auto k = asymptotic_constants(K);
  SchedulePrediction out;
  const double gamma = schedule.kind == ScheduleKind::constant ? 0.0 : schedule.gamma;
  out.valid = gamma < 1.0;
  out.slope = -(2.0 + gamma) / 6.0;
  out.curve.source = CurveSource::schedule_asymptote;
  if (!out.valid) {
    out.curve.diagnostics.warn("gamma >= 1: adiabatic schedule law does not apply; curve is a "
                               "finite-time reference only");
  }
  for (double alpha : alpha_grid) {
    const double eta = eta_at(schedule, alpha);
    const double H = accumulated_H(schedule, alpha);
    const double D = std::cbrt(0.25 * K * k.c_K * kPi * kPi * H);
    const double Delta = k.kappa * eta;
    const double eps = D > 0.0 ? k.A_K * std::sqrt(eta) / std::cbrt(H) : 0.5;
    const double loss = D > 0.0 ? asymptotic_test_loss(K, D, Delta) : std::log(double(K));
    out.curve.rows.push_back({alpha, D, Delta, eps, loss, eta});
  }
  return out;
}

}  // namespace tsoftmax
