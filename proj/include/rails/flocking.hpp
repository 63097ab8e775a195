#pragma once

// Per-class nearest-neighbour retrieval ("flocking") over training data plus
// memory data, in each selected feature layer.
//
// Candidates are addressed by a combined index: training examples keep their
// dataset index, memory entry j becomes size(data) + j. Among equal
// affinities the lower combined index ranks first, which also puts memory
// behind training data.

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rails/dataset.hpp"
#include "rails/error.hpp"
#include "rails/featmap.hpp"
#include "rails/memory_bank.hpp"
#include "rails/numerics.hpp"

namespace rails {

struct Neighbor {
  LabeledExample example;
  double affinity = 0.0;
  std::size_t source = 0;  // combined index
};

struct NeighborSet {
  int layer = 0;
  int label = 0;
  std::vector<Neighbor> members;  // descending affinity
};

using FlockResult = std::map<std::pair<int, int>, NeighborSet>;  // (layer, class)

struct Ranked {
  std::size_t index;
  double affinity;
};

// Higher affinity first, then lower index.
inline bool ranks_before(const Ranked& a, const Ranked& b) {
  if (a.affinity != b.affinity) return a.affinity > b.affinity;
  return a.index < b.index;
}

// Top-k of `candidates` under ranks_before, sorted.
inline std::vector<Ranked> top_k(std::vector<Ranked> candidates, std::size_t k) {
  k = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                    ranks_before);
  candidates.resize(k);
  return candidates;
}

// Training data and memory data mapped through every selected layer once, so
// that repeated queries only pay for distance evaluations.
class ReferenceIndex {
 public:
  ReferenceIndex(const Dataset& data, const MemoryBank& memory, const FeatureNetwork& net, LayerSelection layers)
      : net_(&net), layers_(std::move(layers)), classes_(data.class_count()) {
    detail::require_config(layers_.indices().back() <= net.depth(), "layer selection exceeds network depth");
    detail::require_dims(data.empty() || data.dim() == net.input_dim(), "dataset dimension does not match network");
    detail::require_dims(memory.empty() || memory.dim() == net.input_dim(),
                         "memory bank dimension does not match network");
    examples_ = data.examples();
    for (const auto& e : memory.entries()) {
      if (e.label >= classes_) throw DataError("memory entry label " + std::to_string(e.label) + " out of range");
      examples_.push_back({e.x, e.label});
    }
    training_count_ = data.size();
    by_class_.assign(static_cast<std::size_t>(classes_), {});
    for (std::size_t i = 0; i < examples_.size(); ++i)
      by_class_[static_cast<std::size_t>(examples_[i].label)].push_back(i);

    for (int l : layers_) widths_.push_back(net.width(l));
    features_.resize(layers_.size());
    for (std::size_t li = 0; li < layers_.size(); ++li) features_[li].reserve(examples_.size() * widths_[li]);
    for (const auto& ex : examples_) {
      const auto acts = net.forward_activations(ex.x, layers_);
      for (std::size_t li = 0; li < layers_.size(); ++li) {
        const auto& f = acts.at(layers_[li]);
        features_[li].insert(features_[li].end(), f.begin(), f.end());
      }
    }
  }

  const FeatureNetwork& network() const { return *net_; }
  const LayerSelection& layers() const { return layers_; }
  int class_count() const { return classes_; }
  std::size_t size() const { return examples_.size(); }
  std::size_t training_count() const { return training_count_; }
  const LabeledExample& example(std::size_t i) const { return examples_[i]; }
  std::size_t class_size(int c) const { return by_class_.at(static_cast<std::size_t>(c)).size(); }

  std::span<const double> feature(std::size_t layer_pos, std::size_t i) const {
    return {features_[layer_pos].data() + i * widths_[layer_pos], widths_[layer_pos]};
  }

  // Query features in the same order as layers().
  std::vector<FeatureVector> query_features(const FeatureVector& x) const {
    const auto acts = net_->forward_activations(x, layers_);
    std::vector<FeatureVector> out;
    for (int l : layers_) out.push_back(acts.at(l));
    return out;
  }

  std::size_t layer_position(int layer) const {
    const auto it = std::find(layers_.begin(), layers_.end(), layer);
    detail::require_config(it != layers_.end(), "layer " + std::to_string(layer) + " is not indexed");
    return static_cast<std::size_t>(it - layers_.begin());
  }

  // k best candidates of class c at the given layer position.
  std::vector<Ranked> nearest_in_class(std::span<const double> query, std::size_t layer_pos, int c,
                                       std::size_t k) const {
    const auto& members = by_class_.at(static_cast<std::size_t>(c));
    std::vector<Ranked> cand;
    cand.reserve(members.size());
    for (auto i : members) cand.push_back({i, affinity(feature(layer_pos, i), query)});
    return top_k(std::move(cand), k);
  }

  // k best candidates over all classes at the given layer position.
  std::vector<Ranked> nearest(std::span<const double> query, std::size_t layer_pos, std::size_t k) const {
    std::vector<Ranked> cand;
    cand.reserve(examples_.size());
    for (std::size_t i = 0; i < examples_.size(); ++i) cand.push_back({i, affinity(feature(layer_pos, i), query)});
    return top_k(std::move(cand), k);
  }

 private:
  const FeatureNetwork* net_;
  LayerSelection layers_;
  int classes_;
  std::vector<LabeledExample> examples_;
  std::size_t training_count_ = 0;
  std::vector<std::vector<std::size_t>> by_class_;
  std::vector<std::size_t> widths_;
  std::vector<std::vector<double>> features_;
};

inline FlockResult flock(const FeatureVector& x, const ReferenceIndex& index, std::size_t k) {
  detail::require_config(k >= 1, "flocking needs k >= 1");
  for (int c = 0; c < index.class_count(); ++c)
    if (index.class_size(c) < k)
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(index.class_size(c)) +
                      " flocking candidates, fewer than k = " + std::to_string(k));
  const auto qf = index.query_features(x);
  FlockResult out;
  for (std::size_t li = 0; li < index.layers().size(); ++li) {
    const int layer = index.layers()[li];
    for (int c = 0; c < index.class_count(); ++c) {
      NeighborSet set{layer, c, {}};
      for (const auto& r : index.nearest_in_class(qf[li], li, c, k))
        set.members.push_back({index.example(r.index), r.affinity, r.index});
      out.emplace(std::make_pair(layer, c), std::move(set));
    }
  }
  return out;
}

inline FlockResult flock(const FeatureVector& x, const Dataset& data, const MemoryBank& memory,
                         const FeatureNetwork& net, const LayerSelection& layers, std::size_t k) {
  return flock(x, ReferenceIndex(data, memory, net, layers), k);
}

}  // namespace rails
