#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <vector>

#include "rails/error.hpp"

namespace rails {

using FeatureVector = std::vector<double>;

// Affinity of two vectors that already live in the same feature space:
// the negative Euclidean distance. Zero iff a == b, symmetric, never positive.
inline double affinity(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "affinity: feature lengths differ (" + std::to_string(a.size()) +
                                                 " vs " + std::to_string(b.size()) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return -std::sqrt(sum);
}

// A(F; x1, x2) = -||F(x1) - F(x2)||_2 for any feature map F.
template <typename FeatureMap>
  requires std::invocable<const FeatureMap&, const FeatureVector&>
double affinity(const FeatureMap& map, const FeatureVector& x1, const FeatureVector& x2) {
  const FeatureVector f1 = map(x1);
  const FeatureVector f2 = map(x2);
  return affinity(std::span<const double>(f1), std::span<const double>(f2));
}

inline bool in_unit_box(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline void clip_unit(std::span<double> x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace rails
