#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsoftmax/schedule.hpp"
#include "tsoftmax/sim.hpp"

namespace tsoftmax {

/// Everything a subcommand needs. Defaults follow the reference protocol:
/// N = 500, six seeds, 1e5 test samples, a = 10, whitening epsilon 1e-5.
struct ExperimentConfig {
  std::string name = "run";
  std::string output_dir = "out";

  // Simulation
  int N = 500;
  int K = 3;
  Schedule schedule = Schedule::constant(0.5);
  double alpha_max = 1e4;
  int checkpoints_per_decade = 10;
  double alpha_start = 0.0;
  std::int64_t test_samples = 100000;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6};
  int threads = 1;
  std::string inputs = "isotropic";  // isotropic | powerlaw
  double beta = 0.0;
  double a = 10.0;

  // Replay
  std::string features;
  std::string labels = "teacher";  // teacher | provided
  bool center = true;
  bool whiten = true;
  double whiten_epsilon = 1e-5;
  /// Held-out evaluation rows; 0 picks min(1e5, rows / 10).
  std::int64_t test_rows = 0;

  // Theory
  double D0 = 0.01;
  double Delta0 = 1.0;
  /// When both are set, the flow starts from the ensemble-mean (D, Delta) of
  /// this summary CSV at the checkpoint nearest calibrate_alpha.
  std::string calibrate_csv;
  std::optional<double> calibrate_alpha;
  std::int64_t closure_samples = 100000;
  bool antithetic = true;
  bool exact_k2 = false;
  double ode_abs_tol = 1e-8;
  double ode_rel_tol = 1e-6;
  std::int64_t observable_samples = 100000;
  std::uint64_t theory_seed = 0;

  // Slope fits reported in metadata; empty window means the last decade.
  std::optional<double> fit_lo;
  std::optional<double> fit_hi;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Rejects unknown keys and wrong types with ConfigError.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Reads a config file; a metadata file (object with a "config" key) also works.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Simulation settings for Gaussian-input runs.
SimConfig to_sim_config(const ExperimentConfig& c);

}  // namespace tsoftmax
