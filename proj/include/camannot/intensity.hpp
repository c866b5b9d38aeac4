#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>

namespace camannot {

/// Activity intensity classes. Unknown is reserved for trivial or unmapped labels.
enum class Intensity { SB, LIPA, MVPA, Sleep, Unknown };

inline constexpr std::array<Intensity, 3> kEvaluatedClasses = {Intensity::SB, Intensity::LIPA,
                                                               Intensity::MVPA};

inline constexpr bool is_evaluated(Intensity c) {
  return c == Intensity::SB || c == Intensity::LIPA || c == Intensity::MVPA;
}

/// Row/column index of an evaluated class in a 3x3 confusion matrix.
inline constexpr std::size_t class_index(Intensity c) { return static_cast<std::size_t>(c); }

std::string_view to_string(Intensity c);

/// Accepts the canonical names case-insensitively ("sb", "Sleep", ...).
std::optional<Intensity> parse_intensity(std::string_view s);

}  // namespace camannot
