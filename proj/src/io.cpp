#include "tsoftmax/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw ConfigError("write failed for " + path.string());
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::vector<std::string> trajectory_csv_header(bool has_order_params) {
  if (has_order_params) {
    return {"alpha", "eta", "seed", "R", "S", "Q", "C", "D", "Qeff", "Delta",
            "eps_g", "eps_g_stderr", "test_loss"};
  }
  return {"alpha", "eta", "seed", "eps_g", "eps_g_stderr", "test_loss"};
}

void write_trajectory_csv(const Trajectory& trajectory, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_row(out, trajectory_csv_header(trajectory.has_order_params));
  const std::string seed = std::to_string(trajectory.seed);
  for (const auto& r : trajectory.rows) {
    std::vector<std::string> cells{format_double(r.alpha), format_double(r.eta), seed};
    if (trajectory.has_order_params) {
      for (double v : {r.op.R, r.op.S, r.op.Q, r.op.C, r.op.D, r.op.Q_eff, r.op.Delta}) {
        cells.push_back(format_double(v));
      }
    }
    cells.push_back(format_double(r.eps_g));
    cells.push_back(format_double(r.eps_g_stderr));
    cells.push_back(format_double(r.test_loss));
    write_row(out, cells);
  }
  finish(out, path);
}

void write_summary_csv(const EnsembleSummary& summary, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  const auto& columns = trajectory_columns();
  std::vector<std::string> header{"alpha", "seeds_used"};
  for (const auto& c : columns) {
    for (const char* suffix : {"_mean", "_min", "_max", "_std"}) header.push_back(c + suffix);
  }
  write_row(out, header);
  for (std::size_t k = 0; k < summary.alpha.size(); ++k) {
    std::vector<std::string> cells{format_double(summary.alpha[k]),
                                   std::to_string(summary.seeds_used)};
    for (const auto& s : summary.stats[k]) {
      for (double v : {s.mean, s.min, s.max, s.std}) cells.push_back(format_double(v));
    }
    write_row(out, cells);
  }
  finish(out, path);
}

void write_theory_csv(const TheoryCurve& curve, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_row(out, {"alpha", "eta", "source", "D", "Delta", "eps_g", "test_loss"});
  const std::string source = source_name(curve.source);
  for (const auto& r : curve.rows) {
    write_row(out, {format_double(r.alpha), format_double(r.eta), source, format_double(r.D),
                    format_double(r.Delta), format_double(r.eps_g), format_double(r.test_loss)});
  }
  finish(out, path);
}

void write_binary_csv(const BinaryTrajectory& trajectory, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  write_row(out, {"alpha", "eta", "seed", "rho", "Q", "R", "eps_g", "eps_g_mc", "eps_g_mc_stderr"});
  const std::string seed = std::to_string(trajectory.seed);
  for (const auto& r : trajectory.rows) {
    write_row(out, {format_double(r.alpha), format_double(r.eta), seed,
                    format_double(r.state.rho), format_double(r.state.Q),
                    format_double(r.state.R()), format_double(r.eps_g),
                    format_double(r.eps_g_mc), format_double(r.eps_g_mc_stderr)});
  }
  finish(out, path);
}

std::size_t CsvTable::index(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError("CSV has no column '" + name + "'");
}

std::vector<double> CsvTable::column(const std::string& name) const {
  const std::size_t i = index(name);
  std::vector<double> values;
  values.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string& cell = rows[r][i];
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) {
      throw ParseError("row " + std::to_string(r + 2) + ": '" + cell + "' in column '" + name +
                       "' is not a number");
    }
    values.push_back(v);
  }
  return values;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  const auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  table.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(table.header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

void ensure_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("cannot create output directory " + dir.string());
  }
  const auto probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

}  // namespace tsoftmax
