#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace camannot {

using Digest256 = std::array<std::uint8_t, 32>;

Digest256 sha256(std::string_view bytes);
std::string to_hex(const Digest256& d);
std::uint64_t fnv1a64(std::string_view s);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Stateless counter-based generator: the value for (key, counter) never
/// depends on how many other values were drawn.
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) : key_(key) {}

  static CounterRng from_digest(const Digest256& d);

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(splitmix64(key_) ^ splitmix64(counter * 0xD1B54A32D192ED03ULL + 1));
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double unit(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n) via the multiply-high reduction.
  std::uint64_t index(std::uint64_t counter, std::uint64_t n) const {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

  constexpr std::uint64_t key() const { return key_; }

 private:
  std::uint64_t key_;
};

}  // namespace camannot
