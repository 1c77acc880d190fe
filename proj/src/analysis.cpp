#include "tsoftmax/analysis.hpp"

#include <cmath>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

SlopeFit fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y, double lo,
                          double hi) {
  require(x.size() == y.size(), "fit_loglog_slope: x and y differ in length");
  require(lo <= hi, "fit_loglog_slope: empty window");
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lo && x[i] <= hi) || !(x[i] > 0.0) || !(y[i] > 0.0)) continue;
    if (!std::isfinite(y[i])) continue;
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    n += 1;
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  if (n < 2) throw EstimationError("fit_loglog_slope: fewer than two usable points in window");
  const double vxx = sxx - sx * sx / n;
  const double vxy = sxy - sx * sy / n;
  const double vyy = syy - sy * sy / n;
  if (!(vxx > 0.0)) throw EstimationError("fit_loglog_slope: degenerate x values");
  SlopeFit fit;
  fit.slope = vxy / vxx;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.r_squared = vyy > 0.0 ? vxy * vxy / (vxx * vyy) : 1.0;
  fit.points = static_cast<std::size_t>(n);
  return fit;
}

std::optional<double> power_law_entry_alpha(const std::vector<double>& x,
                                            const std::vector<double>& y, double slope_lo,
                                            double slope_hi, double factor, bool stay) {
  require(x.size() == y.size(), "power_law_entry_alpha: x and y differ in length");
  require(factor > 1.0, "power_law_entry_alpha: factor must be > 1");
  if (x.empty()) return std::nullopt;
  const double x_max = x.back();
  std::vector<double> starts;
  std::vector<bool> inside;
  for (double a : x) {
    if (!(a > 0.0) || a * factor > x_max * (1.0 + 1e-12)) continue;
    const double s = fit_loglog_slope(x, y, a, a * factor).slope;
    starts.push_back(a);
    inside.push_back(s >= slope_lo && s <= slope_hi);
  }
  if (!stay) {
    for (std::size_t i = 0; i < starts.size(); ++i) {
      if (inside[i]) return starts[i];
    }
    return std::nullopt;
  }
  // Walk back from the last window while the band holds.
  std::optional<double> entry;
  for (std::size_t i = starts.size(); i-- > 0;) {
    if (!inside[i]) break;
    entry = starts[i];
  }
  return entry;
}

}  // namespace tsoftmax
