#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "tsoftmax/closure.hpp"
#include "tsoftmax/schedule.hpp"

namespace tsoftmax {

/// c_K = integral of phi(s)^2 Phi(s)^(K-2) ds.
double boundary_density(int K);

struct LocalIntegrals {
  double A0 = 0.0;
  double A1 = 0.0;
  double A2 = 0.0;
  double B0 = 0.0;
};

LocalIntegrals local_integrals(double delta);

/// E_z[2 log(2 cosh(sqrt(Delta/2) z)) - 1].
double script_B(double Delta);

/// Positive root of 2 Delta = eta B(Delta).
double delta_star(double eta);

struct AsymptoticRhs {
  double dD = 0.0;
  double dDelta = 0.0;
};

AsymptoticRhs asymptotic_rhs(double D, double Delta, double eta, int K);

inline constexpr double kKappa = 0.19314718055994530942;  // (2 log 2 - 1) / 2

struct AsymptoticConstants {
  int K = 0;
  double c_K = 0.0;
  double Gamma_K = 0.0;
  double kappa = kKappa;
  double A_K = 0.0;
};

AsymptoticConstants asymptotic_constants(int K);

void to_json(nlohmann::json& j, const AsymptoticConstants& c);
void from_json(const nlohmann::json& j, AsymptoticConstants& c);

/// Large-alpha curve at constant eta: Delta = Delta*, D ~ alpha^(1/3).
TheoryCurve fixed_eta_prediction(int K, double eta, const std::vector<double>& alpha_grid);

struct SchedulePrediction {
  TheoryCurve curve;
  /// False for gamma >= 1, where the adiabatic law does not hold.
  bool valid = true;
  /// Asymptotic eps_g exponent, -(2 + gamma)/6.
  double slope = 0.0;
};

SchedulePrediction schedule_prediction(int K, const Schedule& schedule,
                                       const std::vector<double>& alpha_grid);

/// Asymptotic test loss K(K-1)c_K/(2D) (pi^2/6 + Delta).
double asymptotic_test_loss(int K, double D, double Delta);

}  // namespace tsoftmax
