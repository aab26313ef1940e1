#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "toon2real/imaging.hpp"

namespace toon2real::metrics {

/// 1 - cos(angle) between two flattened vectors; in [0, 2].
inline double cosine_dissimilarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCategory::ShapeError, "cosine_dissimilarity: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorCategory::ZeroVectorError, "cosine_dissimilarity of a zero vector");
  const double cos = std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
  return 1.0 - cos;
}

inline double cosine_dissimilarity(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) {
    fail(ErrorCategory::ShapeError, "cosine_dissimilarity: " + shape_string(a) + " vs " + shape_string(b));
  }
  return cosine_dissimilarity(std::span<const double>(a.data()), std::span<const double>(b.data()));
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace toon2real::metrics
