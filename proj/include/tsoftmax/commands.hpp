#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsoftmax/config.hpp"

namespace tsoftmax {

inline constexpr const char* kVersion = "0.1.0";

struct CommandOutput {
  std::vector<std::filesystem::path> files;
  nlohmann::json metadata;
};

/// Files are written to config.output_dir, prefixed with config.name.
CommandOutput cmd_simulate(const ExperimentConfig& config);
CommandOutput cmd_theory(const ExperimentConfig& config);
CommandOutput cmd_predict(const ExperimentConfig& config);
CommandOutput cmd_binary(const ExperimentConfig& config);
CommandOutput cmd_replay(const ExperimentConfig& config);

nlohmann::json cmd_constants(int K);

/// Log-log slope of column y against column x over [lo, hi].
nlohmann::json cmd_slope_fit(const std::filesystem::path& csv, const std::string& x,
                             const std::string& y, double lo, double hi);

/// Figure recipes. Each writes one bundle per parameter value under
/// config.output_dir/<figure>/ and returns the combined metadata.
CommandOutput reproduce_fig2(const ExperimentConfig& base);
CommandOutput reproduce_fig3(const ExperimentConfig& base);
CommandOutput reproduce_fig4(const ExperimentConfig& base);
CommandOutput reproduce_fig5(const ExperimentConfig& base);
CommandOutput reproduce_ksweep(const ExperimentConfig& base);

}  // namespace tsoftmax
