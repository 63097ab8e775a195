#pragma once

// Deep k-nearest-neighbour baseline: a global kNN vote per layer, summed over
// layers. Its conformal credibility is the sensing signal recorded next to
// each RAILS prediction.

#include <algorithm>
#include <limits>
#include <vector>

#include "rails/dataset.hpp"
#include "rails/error.hpp"
#include "rails/flocking.hpp"

namespace rails {

struct DkNNResult {
  int label = 0;
  std::vector<std::vector<std::size_t>> counts;      // [layer position][class]
  std::vector<std::vector<double>> frequencies;      // counts / k
  double credibility = std::numeric_limits<double>::quiet_NaN();
};

inline DkNNResult dknn_predict(const FeatureVector& x, const ReferenceIndex& index, std::size_t k) {
  detail::require_config(k >= 1, "DkNN needs k >= 1");
  if (k > index.size())
    throw DataError("DkNN k = " + std::to_string(k) + " exceeds reference set size " + std::to_string(index.size()));
  const auto C = static_cast<std::size_t>(index.class_count());
  const auto qf = index.query_features(x);
  DkNNResult res;
  std::vector<double> total(C, 0.0);
  for (std::size_t li = 0; li < qf.size(); ++li) {
    std::vector<std::size_t> count(C, 0);
    for (const auto& r : index.nearest(qf[li], li, k)) ++count[static_cast<std::size_t>(index.example(r.index).label)];
    std::vector<double> freq(C);
    for (std::size_t c = 0; c < C; ++c) {
      freq[c] = static_cast<double>(count[c]) / static_cast<double>(k);
      total[c] += freq[c];
    }
    res.counts.push_back(std::move(count));
    res.frequencies.push_back(std::move(freq));
  }
  // Summing integer counts avoids float ties that differ from the frequency sum.
  std::vector<std::size_t> votes(C, 0);
  for (const auto& count : res.counts)
    for (std::size_t c = 0; c < C; ++c) votes[c] += count[c];
  res.label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  return res;
}

// alpha(x, c) = sum over layers of (k - neighbours of class c).
inline double nonconformity(const DkNNResult& r, int label, std::size_t k) {
  double alpha = 0.0;
  for (const auto& count : r.counts) alpha += static_cast<double>(k - count.at(static_cast<std::size_t>(label)));
  return alpha;
}

// Nonconformity scores of held-out examples against their true labels.
class CalibrationSet {
 public:
  CalibrationSet() = default;

  CalibrationSet(const Dataset& held_out, const ReferenceIndex& index, std::size_t k) {
    scores_.reserve(held_out.size());
    for (const auto& ex : held_out.examples())
      scores_.push_back(nonconformity(dknn_predict(ex.x, index, k), ex.label, k));
    std::sort(scores_.begin(), scores_.end());
  }

  explicit CalibrationSet(std::vector<double> scores) : scores_(std::move(scores)) {
    std::sort(scores_.begin(), scores_.end());
  }

  bool empty() const { return scores_.empty(); }
  std::size_t size() const { return scores_.size(); }
  const std::vector<double>& scores() const { return scores_; }

  // Empirical p-value: share of calibration scores >= alpha.
  double p_value(double alpha) const {
    if (scores_.empty()) throw ConfigError("credibility needs a non-empty calibration set");
    const auto it = std::lower_bound(scores_.begin(), scores_.end(), alpha);
    return static_cast<double>(scores_.end() - it) / static_cast<double>(scores_.size());
  }

 private:
  std::vector<double> scores_;
};

inline double credibility(const DkNNResult& r, const CalibrationSet& calibration, std::size_t k) {
  return calibration.p_value(nonconformity(r, r.label, k));
}

// DkNN prediction with its credibility filled in.
inline DkNNResult sense(const FeatureVector& x, const ReferenceIndex& index, const CalibrationSet& calibration,
                        std::size_t k) {
  auto r = dknn_predict(x, index, k);
  r.credibility = credibility(r, calibration, k);
  return r;
}

}  // namespace rails
