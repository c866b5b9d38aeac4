#include "camannot/stats.hpp"

#include <algorithm>
#include <cmath>

#include "camannot/error.hpp"

namespace camannot {

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error("quantile of empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

QuartileSummary quartile_summary(std::vector<double> values) {
  if (values.empty()) throw Error("quartile summary of empty sample");
  std::sort(values.begin(), values.end());
  QuartileSummary s;
  s.n = values.size();
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.5);
  s.q3 = quantile_sorted(values, 0.75);
  return s;
}

std::optional<QuartileSummary> quartile_summary_defined(const std::vector<std::optional<double>>& values) {
  std::vector<double> defined;
  for (const auto& v : values)
    if (v) defined.push_back(*v);
  if (defined.empty()) return std::nullopt;
  return quartile_summary(std::move(defined));
}

}  // namespace camannot
