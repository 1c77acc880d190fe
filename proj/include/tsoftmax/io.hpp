#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsoftmax/binary.hpp"
#include "tsoftmax/closure.hpp"
#include "tsoftmax/sim.hpp"

namespace tsoftmax {

/// 17 significant digits, enough for an exact round trip.
std::string format_double(double value);

void write_trajectory_csv(const Trajectory& trajectory, const std::filesystem::path& path);
void write_summary_csv(const EnsembleSummary& summary, const std::filesystem::path& path);
void write_theory_csv(const TheoryCurve& curve, const std::filesystem::path& path);
void write_binary_csv(const BinaryTrajectory& trajectory, const std::filesystem::path& path);

/// Header names of the trajectory CSV for a run with/without a teacher.
std::vector<std::string> trajectory_csv_header(bool has_order_params);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a named column; throws ParseError when absent.
  std::size_t index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Creates the directory (and parents) and checks that it is writable.
void ensure_output_dir(const std::filesystem::path& dir);

}  // namespace tsoftmax
