#include "tsoftmax/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

namespace {

void field_check(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(std::string(field) + ": " + what);
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& target) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(target);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

template <class T>
void read_optional(const nlohmann::json& j, const char* key, std::optional<T>& target) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    target.reset();
    return;
  }
  T value{};
  read_field(j, key, value);
  target = value;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "name",         "output_dir",      "N",           "K",
      "schedule",     "alpha_max",       "checkpoints_per_decade",
      "alpha_start",  "test_samples",    "seeds",       "threads",
      "inputs",       "beta",            "a",           "features",
      "labels",       "center",          "whiten",      "whiten_epsilon",
      "test_rows",    "D0",              "Delta0",      "calibrate_alpha", "calibrate_csv",
      "closure_samples", "antithetic",   "exact_k2",    "ode_abs_tol",
      "ode_rel_tol",  "observable_samples", "theory_seed", "fit_lo",
      "fit_hi"};
  return keys;
}

}  // namespace

void ExperimentConfig::validate() const {
  field_check(!name.empty(), "name", "must not be empty");
  field_check(N >= 1, "N", "must be >= 1");
  field_check(K >= 2, "K", "must be >= 2");
  try {
    schedule.validate();
  } catch (const PreconditionError& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }
  field_check(std::isfinite(alpha_max) && alpha_max > 0.0, "alpha_max", "must be > 0");
  field_check(checkpoints_per_decade >= 1, "checkpoints_per_decade", "must be >= 1");
  field_check(alpha_start >= 0.0 && alpha_start <= alpha_max, "alpha_start",
              "must lie in [0, alpha_max]");
  field_check(test_samples >= 1, "test_samples", "must be >= 1");
  field_check(!seeds.empty(), "seeds", "must not be empty");
  field_check(threads >= 1, "threads", "must be >= 1");
  field_check(inputs == "isotropic" || inputs == "powerlaw", "inputs",
              "must be 'isotropic' or 'powerlaw'");
  field_check(std::isfinite(beta) && beta >= 0.0, "beta", "must be >= 0");
  field_check(std::isfinite(a) && a > 0.0, "a", "must be > 0");
  field_check(labels == "teacher" || labels == "provided", "labels",
              "must be 'teacher' or 'provided'");
  field_check(whiten_epsilon > 0.0, "whiten_epsilon", "must be > 0");
  field_check(test_rows >= 0, "test_rows", "must be >= 0");
  field_check(std::isfinite(D0) && D0 >= 0.0, "D0", "must be >= 0");
  field_check(std::isfinite(Delta0) && Delta0 >= 0.0, "Delta0", "must be >= 0");
  field_check(!calibrate_alpha || *calibrate_alpha > 0.0, "calibrate_alpha", "must be > 0");
  field_check(closure_samples >= 1, "closure_samples", "must be >= 1");
  field_check(ode_abs_tol > 0.0, "ode_abs_tol", "must be > 0");
  field_check(ode_rel_tol > 0.0, "ode_rel_tol", "must be > 0");
  field_check(observable_samples >= 1, "observable_samples", "must be >= 1");
  field_check(!fit_lo || *fit_lo > 0.0, "fit_lo", "must be > 0");
  field_check(!fit_hi || *fit_hi > 0.0, "fit_hi", "must be > 0");
  field_check(!(fit_lo && fit_hi) || *fit_lo < *fit_hi, "fit_lo", "must be below fit_hi");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"name", c.name},
                     {"output_dir", c.output_dir},
                     {"N", c.N},
                     {"K", c.K},
                     {"schedule", c.schedule},
                     {"alpha_max", c.alpha_max},
                     {"checkpoints_per_decade", c.checkpoints_per_decade},
                     {"alpha_start", c.alpha_start},
                     {"test_samples", c.test_samples},
                     {"seeds", c.seeds},
                     {"threads", c.threads},
                     {"inputs", c.inputs},
                     {"beta", c.beta},
                     {"a", c.a},
                     {"features", c.features},
                     {"labels", c.labels},
                     {"center", c.center},
                     {"whiten", c.whiten},
                     {"whiten_epsilon", c.whiten_epsilon},
                     {"test_rows", c.test_rows},
                     {"D0", c.D0},
                     {"Delta0", c.Delta0},
                     {"calibrate_csv", c.calibrate_csv},
                     {"calibrate_alpha", c.calibrate_alpha ? nlohmann::json(*c.calibrate_alpha)
                                                           : nlohmann::json(nullptr)},
                     {"closure_samples", c.closure_samples},
                     {"antithetic", c.antithetic},
                     {"exact_k2", c.exact_k2},
                     {"ode_abs_tol", c.ode_abs_tol},
                     {"ode_rel_tol", c.ode_rel_tol},
                     {"observable_samples", c.observable_samples},
                     {"theory_seed", c.theory_seed},
                     {"fit_lo", c.fit_lo ? nlohmann::json(*c.fit_lo) : nlohmann::json(nullptr)},
                     {"fit_hi", c.fit_hi ? nlohmann::json(*c.fit_hi) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : j.items()) {
    if (!known_keys().count(item.key())) throw ConfigError(item.key() + ": unknown field");
  }
  read_field(j, "name", c.name);
  read_field(j, "output_dir", c.output_dir);
  read_field(j, "N", c.N);
  read_field(j, "K", c.K);
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<Schedule>();
  read_field(j, "alpha_max", c.alpha_max);
  read_field(j, "checkpoints_per_decade", c.checkpoints_per_decade);
  read_field(j, "alpha_start", c.alpha_start);
  read_field(j, "test_samples", c.test_samples);
  read_field(j, "seeds", c.seeds);
  read_field(j, "threads", c.threads);
  read_field(j, "inputs", c.inputs);
  read_field(j, "beta", c.beta);
  read_field(j, "a", c.a);
  read_field(j, "features", c.features);
  read_field(j, "labels", c.labels);
  read_field(j, "center", c.center);
  read_field(j, "whiten", c.whiten);
  read_field(j, "whiten_epsilon", c.whiten_epsilon);
  read_field(j, "test_rows", c.test_rows);
  read_field(j, "D0", c.D0);
  read_field(j, "Delta0", c.Delta0);
  read_field(j, "calibrate_csv", c.calibrate_csv);
  read_optional(j, "calibrate_alpha", c.calibrate_alpha);
  read_field(j, "closure_samples", c.closure_samples);
  read_field(j, "antithetic", c.antithetic);
  read_field(j, "exact_k2", c.exact_k2);
  read_field(j, "ode_abs_tol", c.ode_abs_tol);
  read_field(j, "ode_rel_tol", c.ode_rel_tol);
  read_field(j, "observable_samples", c.observable_samples);
  read_field(j, "theory_seed", c.theory_seed);
  read_optional(j, "fit_lo", c.fit_lo);
  read_optional(j, "fit_hi", c.fit_hi);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.at("config").is_object()) j = j.at("config");
  ExperimentConfig c;
  from_json(j, c);
  return c;
}

SimConfig to_sim_config(const ExperimentConfig& c) {
  SimConfig s;
  s.N = c.N;
  s.K = c.K;
  s.input_model = c.inputs == "powerlaw" ? InputModel::powerlaw(c.N, c.beta, c.a)
                                         : InputModel::isotropic(c.N);
  s.schedule = c.schedule;
  s.alpha_max = c.alpha_max;
  s.checkpoints_per_decade = c.checkpoints_per_decade;
  s.alpha_start = c.alpha_start;
  s.test_samples = c.test_samples;
  s.seeds = c.seeds;
  return s;
}

}  // namespace tsoftmax
