#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace camannot {

/// Dense representation produced by a backend. The gateway stores unit-norm
/// float32 values so cached and freshly computed vectors are bit-identical.
struct EmbeddingVector {
  std::vector<float> values;
  std::string backend_id;
  std::string model_id;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Scales to unit Euclidean norm (in double, then rounded to float).
/// A zero vector is returned unchanged.
std::vector<float> unit_normalized(std::span<const double> v);
std::vector<float> unit_normalized(std::span<const float> v);

double l2_norm(std::span<const float> v);

/// dot(a, b) / (|a| |b|) clamped to [-1, 1]. Throws camannot::Error on a
/// dimension mismatch; zero vectors have similarity 0.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace camannot
