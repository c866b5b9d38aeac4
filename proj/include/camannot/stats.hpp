#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace camannot {

/// Quantile by linear interpolation between closest ranks: with sorted x and
/// h = (n - 1) p, returns x[floor h] + (h - floor h)(x[floor h + 1] - x[floor h]).
double quantile_sorted(const std::vector<double>& sorted, double p);

struct QuartileSummary {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::size_t n = 0;
};

/// Five-number summary. Throws camannot::Error on empty input.
QuartileSummary quartile_summary(std::vector<double> values);

/// Drops undefined entries; nullopt when nothing is left.
std::optional<QuartileSummary> quartile_summary_defined(const std::vector<std::optional<double>>& values);

}  // namespace camannot
