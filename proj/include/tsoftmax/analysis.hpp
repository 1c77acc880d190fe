#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace tsoftmax {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of log y against log x over points with x in [lo, hi].
/// Points with non-positive x or y are skipped.
SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double lo,
                          double hi);

/// Smallest window start a (a grid point) such that the slope fitted over
/// [a, factor a] lies in [slope_lo, slope_hi]. With `stay`, every later
/// window that still fits inside the data must also lie in the band.
std::optional<double> power_law_entry_alpha(const std::vector<double>& x,
                                            const std::vector<double>& y, double slope_lo,
                                            double slope_hi, double factor = 10.0,
                                            bool stay = true);

}  // namespace tsoftmax
