#include "camannot/intensity.hpp"

#include "camannot/text.hpp"

namespace camannot {

std::string_view to_string(Intensity c) {
  switch (c) {
    case Intensity::SB: return "SB";
    case Intensity::LIPA: return "LIPA";
    case Intensity::MVPA: return "MVPA";
    case Intensity::Sleep: return "Sleep";
    case Intensity::Unknown: return "Unknown";
  }
  return "Unknown";
}

std::optional<Intensity> parse_intensity(std::string_view s) {
  const std::string v = to_lower(trim(s));
  if (v == "sb") return Intensity::SB;
  if (v == "lipa") return Intensity::LIPA;
  if (v == "mvpa") return Intensity::MVPA;
  if (v == "sleep") return Intensity::Sleep;
  if (v == "unknown") return Intensity::Unknown;
  return std::nullopt;
}

}  // namespace camannot
