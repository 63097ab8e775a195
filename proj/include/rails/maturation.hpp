#pragma once

// Affinity maturation and consensus: rank the final population, keep the top
// fractions as plasma and memory data, and let plasma vote.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rails/dknn.hpp"
#include "rails/error.hpp"
#include "rails/expansion.hpp"
#include "rails/flocking.hpp"

namespace rails {

struct RailsConfig {
  std::size_t k = 10;  // neighbours per class and layer
  std::vector<int> layers;  // empty: input layer plus all hidden layers
  std::vector<double> temperatures;  // one per layer, or a single value for all; empty: expansion.temperature
  ExpansionConfig expansion;
  double plasma_fraction = 0.05;
  double memory_fraction = 0.25;
  std::size_t dknn_k = 10;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require_config(k >= 1, "k must be >= 1");
    detail::require_config(dknn_k >= 1, "DkNN k must be >= 1");
    detail::require_config(plasma_fraction > 0.0 && plasma_fraction <= memory_fraction && memory_fraction <= 1.0,
                           "need 0 < plasma fraction <= memory fraction <= 1");
    detail::require_config(temperatures.size() <= 1 || layers.empty() || temperatures.size() == layers.size(),
                           "temperature list must have one entry per layer");
    for (double t : temperatures) detail::require_config(t > 0.0, "temperatures must be positive");
    expansion.validate();
  }

  LayerSelection layer_selection(const FeatureNetwork& net) const {
    return layers.empty() ? net.default_layers() : LayerSelection(layers, net.depth());
  }

  double temperature_for(std::size_t layer_pos) const {
    if (temperatures.empty()) return expansion.temperature;
    if (temperatures.size() == 1) return temperatures.front();
    return temperatures.at(layer_pos);
  }
};

struct LayerMaturation {
  int layer = 0;
  int final_generation = 0;
  std::vector<PopulationMember> plasma;  // best first
  std::vector<PopulationMember> memory;  // best first; plasma is its prefix
};

struct MaturationResult {
  std::uint64_t query_id = 0;
  std::vector<LayerMaturation> layers;
};

struct RailsPrediction {
  int label = 0;
  double confidence = 0.0;  // winner's share of plasma votes
  std::vector<std::size_t> votes;
  std::vector<GenerationTrace> traces;
  MaturationResult maturation;
  DkNNResult sensing;  // advisory only
};

inline std::size_t selection_size(double fraction, std::size_t population) {
  // The epsilon keeps e.g. 0.05 * 1000 from rounding up to 51.
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(population) - 1e-9));
  return std::clamp<std::size_t>(n, 1, population);
}

// Ranks by descending affinity (ties: lower member index) and returns the top
// ceil(gamma_p * T) and ceil(gamma_m * T) members.
inline std::pair<std::vector<PopulationMember>, std::vector<PopulationMember>> select_plasma_memory(
    const Population& pop, double plasma_fraction, double memory_fraction) {
  if (pop.members.empty()) throw DataError("cannot mature an empty population");
  detail::require_config(plasma_fraction > 0.0 && plasma_fraction <= memory_fraction && memory_fraction <= 1.0,
                         "need 0 < plasma fraction <= memory fraction <= 1");
  std::vector<std::size_t> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return pop.members[a].affinity > pop.members[b].affinity; });
  const auto n_plasma = selection_size(plasma_fraction, pop.size());
  const auto n_memory = selection_size(memory_fraction, pop.size());
  std::vector<PopulationMember> plasma, memory;
  for (std::size_t i = 0; i < n_memory; ++i) {
    memory.push_back(pop.members[order[i]]);
    if (i < n_plasma) plasma.push_back(pop.members[order[i]]);
  }
  return {std::move(plasma), std::move(memory)};
}

struct Consensus {
  int label = 0;
  double confidence = 0.0;
  std::vector<std::size_t> votes;
};

// Majority vote over plasma pooled across layers; ties go to the smaller class.
inline Consensus consensus(std::span<const std::vector<PopulationMember>> plasma_by_layer, int class_count) {
  Consensus out;
  out.votes.assign(static_cast<std::size_t>(class_count), 0);
  std::size_t total = 0;
  for (const auto& layer : plasma_by_layer)
    for (const auto& m : layer) {
      ++out.votes.at(static_cast<std::size_t>(m.label));
      ++total;
    }
  if (total == 0) throw DataError("consensus needs at least one plasma member");
  const auto best = std::max_element(out.votes.begin(), out.votes.end());
  out.label = static_cast<int>(best - out.votes.begin());
  out.confidence = static_cast<double>(*best) / static_cast<double>(total);
  return out;
}

// Sensing (when a calibration set is given) -> flocking -> per-layer
// expansion -> maturation -> consensus. The index fixes the layer set.
inline RailsPrediction rails_predict(const FeatureVector& x, std::uint64_t query_id, const ReferenceIndex& index,
                                     const RailsConfig& cfg, const CalibrationSet* calibration = nullptr) {
  cfg.validate();
  RailsPrediction out;
  if (calibration && !calibration->empty()) out.sensing = sense(x, index, *calibration, cfg.dknn_k);

  const auto neighbours = flock(x, index, cfg.k);
  const int C = index.class_count();
  const auto& net = index.network();
  std::vector<std::vector<PopulationMember>> plasma;
  out.maturation.query_id = query_id;
  for (std::size_t li = 0; li < index.layers().size(); ++li) {
    const int layer = index.layers()[li];
    std::vector<NeighborSet> sets;
    for (int c = 0; c < C; ++c) sets.push_back(neighbours.at({layer, c}));
    auto ecfg = cfg.expansion;
    ecfg.temperature = cfg.temperature_for(li);
    const LayerScorer scorer(net, layer, x);
    auto run = expand(std::span<const NeighborSet>(sets), C, scorer, ecfg,
                      ExpansionStreams::derive(cfg.seed, query_id, layer), layer);
    auto [p, m] = select_plasma_memory(run.population, cfg.plasma_fraction, cfg.memory_fraction);
    plasma.push_back(p);
    out.maturation.layers.push_back({layer, run.population.generation, std::move(p), std::move(m)});
    out.traces.push_back(std::move(run.trace));
  }
  auto vote = consensus(plasma, C);
  out.label = vote.label;
  out.confidence = vote.confidence;
  out.votes = std::move(vote.votes);
  return out;
}

}  // namespace rails
