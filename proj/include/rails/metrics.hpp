#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rails/error.hpp"

namespace rails {

// Shares of (RAILS correct & DkNN correct, RAILS correct & DkNN wrong,
// RAILS wrong & DkNN correct, RAILS wrong & DkNN wrong).
using IntersectionMatrix = std::array<double, 4>;

inline IntersectionMatrix intersection_matrix(std::span<const int> rails, std::span<const int> dknn,
                                              std::span<const int> truth) {
  detail::require_dims(rails.size() == truth.size() && dknn.size() == truth.size(),
                       "intersection_matrix: label vectors differ in length");
  std::array<std::size_t, 4> count{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool r = rails[i] == truth[i];
    const bool d = dknn[i] == truth[i];
    ++count[(r ? 0 : 2) + (d ? 0 : 1)];
  }
  IntersectionMatrix m{};
  if (truth.empty()) return m;
  for (std::size_t i = 0; i < 4; ++i) m[i] = static_cast<double>(count[i]) / static_cast<double>(truth.size());
  return m;
}

struct AccuracyCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  double rate() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

inline AccuracyCount count_correct(std::span<const int> predicted, std::span<const int> truth) {
  detail::require_dims(predicted.size() == truth.size(), "accuracy: label vectors differ in length");
  AccuracyCount a;
  a.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) a.correct += predicted[i] == truth[i];
  return a;
}

// Labels of one method on one batch.
struct MethodLabels {
  std::vector<int> cnn, dknn, rails;
};

struct MetricsReport {
  std::vector<int> truth;
  MethodLabels clean, adversarial;

  AccuracyCount sa(const std::vector<int> MethodLabels::*m) const { return count_correct(clean.*m, truth); }
  AccuracyCount ra(const std::vector<int> MethodLabels::*m) const { return count_correct(adversarial.*m, truth); }
  IntersectionMatrix clean_intersection() const { return intersection_matrix(clean.rails, clean.dknn, truth); }
  IntersectionMatrix adversarial_intersection() const {
    return intersection_matrix(adversarial.rails, adversarial.dknn, truth);
  }
};

}  // namespace rails
