#pragma once

#include <nlohmann/json_fwd.hpp>

namespace tsoftmax {

enum class ScheduleKind { constant, shifted_powerlaw };

/// Learning-rate law eta(alpha) with closed-form accumulated time H(alpha).
///   constant:          eta0
///   shifted_powerlaw:  eta0 (1 + alpha / alpha0)^{-gamma}
struct Schedule {
  ScheduleKind kind = ScheduleKind::constant;
  double eta0 = 1.0;
  double alpha0 = 1.0;
  double gamma = 0.0;

  static Schedule constant(double eta) { return {ScheduleKind::constant, eta, 1.0, 0.0}; }
  static Schedule shifted_powerlaw(double eta0, double alpha0, double gamma) {
    return {ScheduleKind::shifted_powerlaw, eta0, alpha0, gamma};
  }

  void validate() const;
  bool operator==(const Schedule&) const = default;
};

double eta_at(const Schedule& schedule, double alpha);

/// H(alpha) = int_0^alpha eta.
double accumulated_H(const Schedule& schedule, double alpha);

void to_json(nlohmann::json& j, const Schedule& schedule);
void from_json(const nlohmann::json& j, Schedule& schedule);

}  // namespace tsoftmax
