#include "tsoftmax/schedule.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

void Schedule::validate() const {
  // eta0 = 0 is allowed: it is the frozen-dynamics reference.
  require(std::isfinite(eta0) && eta0 >= 0.0, "schedule: eta0 must be >= 0");
  if (kind == ScheduleKind::shifted_powerlaw) {
    require(std::isfinite(alpha0) && alpha0 > 0.0, "schedule: alpha0 must be > 0");
    require(std::isfinite(gamma) && gamma >= 0.0, "schedule: gamma must be >= 0");
  }
}

double eta_at(const Schedule& schedule, double alpha) {
  require(alpha >= 0.0, "eta_at: alpha must be non-negative");
  if (schedule.kind == ScheduleKind::constant) return schedule.eta0;
  return schedule.eta0 * std::pow(1.0 + alpha / schedule.alpha0, -schedule.gamma);
}

double accumulated_H(const Schedule& schedule, double alpha) {
  require(alpha >= 0.0, "accumulated_H: alpha must be non-negative");
  if (schedule.kind == ScheduleKind::constant) return schedule.eta0 * alpha;
  const double x = alpha / schedule.alpha0;
  const double scale = schedule.eta0 * schedule.alpha0;
  const double one_minus = 1.0 - schedule.gamma;
  if (std::abs(one_minus) < 1e-12) return scale * std::log1p(x);
  // ((1+x)^{1-gamma} - 1) / (1-gamma) = expm1((1-gamma) log1p(x)) / (1-gamma)
  return scale * std::expm1(one_minus * std::log1p(x)) / one_minus;
}

namespace {

const char* kind_name(ScheduleKind kind) {
  return kind == ScheduleKind::constant ? "constant" : "shifted-powerlaw";
}

}  // namespace

void to_json(nlohmann::json& j, const Schedule& s) {
  j = {{"kind", kind_name(s.kind)}, {"eta0", s.eta0}, {"alpha0", s.alpha0}, {"gamma", s.gamma}};
}

void from_json(const nlohmann::json& j, Schedule& s) {
  if (!j.is_object()) throw ConfigError("schedule: must be an object");
  std::string kind;
  try {
    kind = j.value("kind", std::string("constant"));
    s.eta0 = j.value("eta0", 1.0);
    s.alpha0 = j.value("alpha0", 1.0);
    s.gamma = j.value("gamma", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  if (kind == "constant") {
    s.kind = ScheduleKind::constant;
  } else if (kind == "shifted-powerlaw") {
    s.kind = ScheduleKind::shifted_powerlaw;
  } else {
    throw ConfigError("schedule.kind: unknown value '" + kind + "'");
  }
  try {
    s.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace tsoftmax
