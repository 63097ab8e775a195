#pragma once

// Clonal expansion: a population seeded from flocked neighbours evolves by
// softmax selection, same-class crossover and sparse mutation, scored by
// affinity to the query in one feature layer.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rails/error.hpp"
#include "rails/featmap.hpp"
#include "rails/flocking.hpp"
#include "rails/numerics.hpp"
#include "rails/random.hpp"

namespace rails {

enum class CrossoverMode {
  literal,   // p1 picked with weight A1 / (A1 + A2)
  inverted,  // p1 picked with weight A2 / (A1 + A2), i.e. the closer parent is favoured
};

struct ExpansionConfig {
  std::size_t population = 1000;  // T
  int generations = 50;           // G
  double mutation_prob = 0.15;    // rho
  double delta_min = 0.05;
  double delta_max = 0.15;
  double temperature = 3.0;  // tau for the layer being expanded
  CrossoverMode crossover = CrossoverMode::literal;
  bool early_stop = true;
  double early_stop_fraction = 1.0;  // single-class share that ends the run

  void validate() const {
    detail::require_config(population >= 1, "population size T must be >= 1");
    detail::require_config(generations >= 1, "generation count G must be >= 1");
    detail::require_config(mutation_prob >= 0.0 && mutation_prob <= 1.0, "mutation probability must lie in [0, 1]");
    detail::require_config(delta_min > 0.0 && delta_min <= delta_max, "need 0 < delta_min <= delta_max");
    detail::require_config(temperature > 0.0 && std::isfinite(temperature), "temperature must be positive");
    detail::require_config(early_stop_fraction > 0.0 && early_stop_fraction <= 1.0,
                           "early-stop fraction must lie in (0, 1]");
  }
};

struct PopulationMember {
  FeatureVector x;
  int label = 0;
  double affinity = 0.0;  // to the query, in the expansion layer
};

struct Population {
  std::vector<PopulationMember> members;
  int generation = 0;

  std::size_t size() const { return members.size(); }
};

struct GenerationStats {
  int generation = 0;
  std::vector<double> proportion;     // per class
  std::vector<double> mean_affinity;  // per class, NaN when the class is absent
};

struct GenerationTrace {
  int layer = 0;
  std::vector<GenerationStats> generations;

  // Columns: generation,class,proportion,mean_affinity. Absent classes leave
  // mean_affinity empty.
  void write_csv(std::ostream& out, bool header = true) const {
    if (header) out << "generation,class,proportion,mean_affinity\n";
    write_rows(out, "");
  }

  // Same rows, each prefixed by `prefix` (e.g. "clean,17,0,").
  void write_rows(std::ostream& out, const std::string& prefix) const {
    char buf[64];
    for (const auto& g : generations) {
      for (std::size_t c = 0; c < g.proportion.size(); ++c) {
        out << prefix << g.generation << ',' << c << ',';
        std::snprintf(buf, sizeof buf, "%.6f", g.proportion[c]);
        out << buf << ',';
        if (!std::isnan(g.mean_affinity[c])) {
          std::snprintf(buf, sizeof buf, "%.6f", g.mean_affinity[c]);
          out << buf;
        }
        out << '\n';
      }
    }
  }
};

// Affinity to a fixed query in one layer: x -> A(f_l; x, query).
class LayerScorer {
 public:
  LayerScorer(const FeatureNetwork& net, int layer, const FeatureVector& query)
      : net_(&net), layer_(layer), query_feature_(net.activation(query, layer)) {}

  int layer() const { return layer_; }
  double operator()(const FeatureVector& x) const {
    if (layer_ == 0) return affinity(x, query_feature_);
    const auto f = net_->activation(x, layer_);
    return affinity(f, query_feature_);
  }

 private:
  const FeatureNetwork* net_;
  int layer_;
  FeatureVector query_feature_;
};

// One stream per purpose, each forked per layer. Offspring t of generation g
// draws from fork({g, t}) of each, so offspring are independent of each
// other's draw counts.
struct ExpansionStreams {
  RandomStream selection;
  RandomStream crossover;
  RandomStream mutation;

  static ExpansionStreams derive(std::uint64_t seed, std::uint64_t query, int layer) {
    const auto l = static_cast<std::uint64_t>(layer);
    return {derive_stream(seed, query, Purpose::selection).fork({l}),
            derive_stream(seed, query, Purpose::crossover).fork({l}),
            derive_stream(seed, query, Purpose::mutation).fork({l})};
  }
};

// Per-entry perturbation: with probability rho a value of magnitude
// U[delta_min, delta_max] and random sign, otherwise 0.
inline FeatureVector draw_mutation(std::size_t d, const ExpansionConfig& cfg, RandomStream& rng) {
  FeatureVector u(d, 0.0);
  for (auto& v : u) {
    if (!rng.bernoulli(cfg.mutation_prob)) continue;
    const double mag = rng.uniform(cfg.delta_min, cfg.delta_max);
    v = rng.bernoulli(0.5) ? -mag : mag;
  }
  return u;
}

inline FeatureVector mutate(const FeatureVector& x, const ExpansionConfig& cfg, RandomStream& rng) {
  const auto u = draw_mutation(x.size(), cfg, rng);
  FeatureVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + u[i];
  clip_unit(out);
  return out;
}

// Spawns floor(T / (C*k)) mutated copies of each neighbour, plus one more for
// the first T mod (C*k) neighbours in class-then-rank order.
inline std::vector<std::size_t> spawn_counts(std::size_t neighbours, std::size_t population) {
  detail::require_config(neighbours >= 1, "no neighbours to seed the population");
  detail::require_config(population >= neighbours, "population T = " + std::to_string(population) +
                                                        " is smaller than the " + std::to_string(neighbours) +
                                                        " flocked neighbours");
  std::vector<std::size_t> counts(neighbours, population / neighbours);
  for (std::size_t i = 0; i < population % neighbours; ++i) ++counts[i];
  return counts;
}

// `neighbours` holds one set per class for a single layer, in class order.
template <typename Scorer>
Population init_population(std::span<const NeighborSet> neighbours, const ExpansionConfig& cfg,
                           const RandomStream& mutation_root, const Scorer& score) {
  std::vector<const Neighbor*> flat;
  for (const auto& set : neighbours)
    for (const auto& n : set.members) flat.push_back(&n);
  const auto counts = spawn_counts(flat.size(), cfg.population);
  Population pop;
  pop.members.reserve(cfg.population);
  for (std::size_t j = 0; j < flat.size(); ++j) {
    for (std::size_t s = 0; s < counts[j]; ++s) {
      auto rng = mutation_root.fork({0, pop.members.size()});
      PopulationMember m;
      m.x = mutate(flat[j]->example.x, cfg, rng);
      m.label = flat[j]->example.label;
      m.affinity = score(m.x);
      pop.members.push_back(std::move(m));
    }
  }
  return pop;
}

// Softmax of affinity / tau with max subtraction.
inline std::vector<double> selection_probabilities(const Population& pop, double temperature) {
  detail::require_config(temperature > 0.0, "temperature must be positive");
  std::vector<double> p(pop.size());
  if (p.empty()) return p;
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& m : pop.members) top = std::max(top, m.affinity / temperature);
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] = std::exp(pop.members[i].affinity / temperature - top));
  for (double& v : p) v /= sum;
  return p;
}

struct ParentPick {
  std::size_t first = 0;
  std::optional<std::size_t> second;  // empty when no other member shares the class
};

// Draws parent pairs from one generation. The second parent comes from the
// first parent's class with the first excluded and probabilities
// renormalised over that subset.
class ParentSelector {
 public:
  ParentSelector(const Population& pop, std::span<const double> probs) : pop_(&pop), probs_(probs) {
    detail::require_dims(probs.size() == pop.size(), "probability vector does not match population");
    int classes = 0;
    for (const auto& m : pop.members) classes = std::max(classes, m.label + 1);
    by_class_.resize(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < pop.size(); ++i)
      by_class_[static_cast<std::size_t>(pop.members[i].label)].push_back(i);
  }

  ParentPick draw(RandomStream& rng) const {
    ParentPick pick;
    pick.first = rng.categorical(probs_);
    if (pick.first >= probs_.size()) throw ConfigError("selection probabilities have no positive mass");
    const auto& same = by_class_[static_cast<std::size_t>(pop_->members[pick.first].label)];
    if (same.size() < 2) return pick;

    double mass = 0.0;
    for (auto i : same)
      if (i != pick.first) mass += probs_[i];
    if (!(mass > 0.0)) {
      // Every candidate underflowed to zero; fall back to uniform.
      auto j = rng.index(same.size() - 1);
      for (auto i : same) {
        if (i == pick.first) continue;
        if (j-- == 0) {
          pick.second = i;
          break;
        }
      }
      return pick;
    }
    const double r = rng.uniform() * mass;
    double acc = 0.0;
    for (auto i : same) {
      if (i == pick.first || probs_[i] <= 0.0) continue;
      acc += probs_[i];
      pick.second = i;
      if (r < acc) break;
    }
    return pick;
  }

 private:
  const Population* pop_;
  std::span<const double> probs_;
  std::vector<std::vector<std::size_t>> by_class_;
};

inline ParentPick select_parents(const Population& pop, std::span<const double> probs, RandomStream& rng) {
  return ParentSelector(pop, probs).draw(rng);
}

// Probability that an offspring entry is taken from the first parent.
inline double crossover_weight(double first_affinity, double second_affinity, CrossoverMode mode) {
  const double denom = first_affinity + second_affinity;
  if (denom == 0.0) return 0.5;
  return (mode == CrossoverMode::literal ? first_affinity : second_affinity) / denom;
}

inline FeatureVector crossover(const PopulationMember& p1, const PopulationMember& p2, CrossoverMode mode,
                               RandomStream& rng) {
  detail::require_dims(p1.x.size() == p2.x.size(), "crossover parents differ in dimension");
  if (p1.label != p2.label) throw DataError("crossover parents belong to different classes");
  const double w = crossover_weight(p1.affinity, p2.affinity, mode);
  FeatureVector child(p1.x.size());
  for (std::size_t i = 0; i < child.size(); ++i) child[i] = rng.uniform() < w ? p1.x[i] : p2.x[i];
  return child;
}

inline GenerationStats population_stats(const Population& pop, int class_count) {
  GenerationStats s;
  s.generation = pop.generation;
  const auto C = static_cast<std::size_t>(class_count);
  std::vector<std::size_t> count(C, 0);
  std::vector<double> sum(C, 0.0);
  for (const auto& m : pop.members) {
    ++count[static_cast<std::size_t>(m.label)];
    sum[static_cast<std::size_t>(m.label)] += m.affinity;
  }
  s.proportion.resize(C);
  s.mean_affinity.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    s.proportion[c] = static_cast<double>(count[c]) / static_cast<double>(pop.size());
    s.mean_affinity[c] = count[c] ? sum[c] / static_cast<double>(count[c]) : std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

struct ExpansionResult {
  Population population;
  GenerationTrace trace;
};

// Runs up to G generations. Each generation replaces the population with T
// offspring; with early stopping the run ends once one class holds at least
// early_stop_fraction of the members.
template <typename Scorer>
ExpansionResult expand(std::span<const NeighborSet> neighbours, int class_count, const Scorer& score,
                       const ExpansionConfig& cfg, const ExpansionStreams& streams, int layer = 0) {
  cfg.validate();
  ExpansionResult res;
  res.trace.layer = layer;
  res.population = init_population(neighbours, cfg, streams.mutation, score);
  res.trace.generations.push_back(population_stats(res.population, class_count));

  const auto T = cfg.population;
  const auto needed = static_cast<std::size_t>(std::ceil(cfg.early_stop_fraction * static_cast<double>(T) - 1e-9));
  for (int g = 1; g <= cfg.generations; ++g) {
    const auto& parents = res.population;
    const auto probs = selection_probabilities(parents, cfg.temperature);
    const ParentSelector selector(parents, probs);
    Population next;
    next.generation = g;
    next.members.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      const auto gu = static_cast<std::uint64_t>(g);
      auto sel = streams.selection.fork({gu, t});
      const auto pick = selector.draw(sel);
      const auto& p1 = parents.members[pick.first];
      FeatureVector child;
      if (pick.second) {
        auto xr = streams.crossover.fork({gu, t});
        child = crossover(p1, parents.members[*pick.second], cfg.crossover, xr);
      } else {
        child = p1.x;
      }
      auto mr = streams.mutation.fork({gu, t});
      auto& m = next.members[t];
      m.x = mutate(child, cfg, mr);
      m.label = p1.label;
      m.affinity = score(m.x);
    }
    res.population = std::move(next);
    res.trace.generations.push_back(population_stats(res.population, class_count));
    if (cfg.early_stop) {
      const auto& share = res.trace.generations.back().proportion;
      const double top = *std::max_element(share.begin(), share.end());
      if (static_cast<std::size_t>(std::llround(top * static_cast<double>(T))) >= needed) break;
    }
  }
  return res;
}

}  // namespace rails
