#include "camannot/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "camannot/error.hpp"

namespace camannot {

namespace {

template <typename T>
std::vector<float> normalize_impl(std::span<const T> v) {
  double sq = 0;
  for (T x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  std::vector<float> out(v.size());
  if (sq == 0) {
    std::transform(v.begin(), v.end(), out.begin(), [](T x) { return static_cast<float>(x); });
    return out;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(static_cast<double>(v[i]) * inv);
  return out;
}

}  // namespace

std::vector<float> unit_normalized(std::span<const double> v) { return normalize_impl(v); }
std::vector<float> unit_normalized(std::span<const float> v) { return normalize_impl(v); }

double l2_norm(std::span<const float> v) {
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(std::span<const float>(a.values), std::span<const float>(b.values));
}

}  // namespace camannot
