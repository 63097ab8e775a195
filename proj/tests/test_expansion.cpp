#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracle.hpp"
#include "rails/expansion.hpp"
#include "rails/synth.hpp"

using namespace rails;

namespace {

PopulationMember member(FeatureVector x, int label, double aff) { return {std::move(x), label, aff}; }

// Neighbour sets for C classes with k members each, example values i / 10.
std::vector<NeighborSet> neighbour_sets(int C, std::size_t k, std::size_t d = 3) {
  std::vector<NeighborSet> sets;
  std::size_t id = 0;
  for (int c = 0; c < C; ++c) {
    NeighborSet s{0, c, {}};
    for (std::size_t i = 0; i < k; ++i, ++id)
      s.members.push_back({{FeatureVector(d, static_cast<double>(id) / 10.0), c}, -static_cast<double>(i), id});
    sets.push_back(std::move(s));
  }
  return sets;
}

const auto kZeroScore = [](const FeatureVector&) { return 0.0; };

}  // namespace

TEST(SpawnCounts, ExactDivision) { EXPECT_EQ(spawn_counts(4, 8), (std::vector<std::size_t>{2, 2, 2, 2})); }

TEST(SpawnCounts, RemainderGoesToFirstNeighbours) {
  EXPECT_EQ(spawn_counts(4, 10), (std::vector<std::size_t>{3, 3, 2, 2}));
}

TEST(SpawnCounts, PopulationSmallerThanNeighboursIsAnError) { EXPECT_THROW(spawn_counts(4, 3), ConfigError); }

TEST(InitPopulation, EachNeighbourSpawnsItsShareWithInheritedLabels) {
  const auto sets = neighbour_sets(2, 2);
  ExpansionConfig cfg;
  cfg.population = 10;
  cfg.mutation_prob = 0.0;
  const auto pop = init_population(std::span<const NeighborSet>(sets), cfg, derive_stream(1, 0, Purpose::mutation),
                                   kZeroScore);
  ASSERT_EQ(pop.size(), 10u);
  // rho = 0: every member equals its neighbour; order is class-then-rank.
  const std::vector<double> expect_first{0.0, 0.0, 0.0, 0.1, 0.1, 0.1, 0.2, 0.2, 0.3, 0.3};
  const std::vector<int> expect_label{0, 0, 0, 0, 0, 0, 1, 1, 1, 1};
  for (std::size_t i = 0; i < pop.size(); ++i) {
    EXPECT_EQ(pop.members[i].x, FeatureVector(3, expect_first[i]));
    EXPECT_EQ(pop.members[i].label, expect_label[i]);
  }
}

TEST(SelectionProbabilities, UniformForEqualAffinities) {
  Population pop;
  for (int i = 0; i < 5; ++i) pop.members.push_back(member({0.0}, 0, -1.5));
  for (double p : selection_probabilities(pop, 3.0)) EXPECT_DOUBLE_EQ(p, 0.2);
}

TEST(SelectionProbabilities, TwoMemberClosedForm) {
  Population pop;
  pop.members = {member({0.0}, 0, -1.0), member({0.0}, 0, -2.0)};
  const auto p = selection_probabilities(pop, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p[1], 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
}

TEST(SelectionProbabilities, HugeTemperatureIsNearlyUniform) {
  Population pop;
  for (int i = 0; i < 10; ++i) pop.members.push_back(member({0.0}, 0, -static_cast<double>(i)));
  for (double p : selection_probabilities(pop, 1e9)) EXPECT_NEAR(p, 0.1, 1e-6);
}

TEST(SelectionProbabilities, StableForLargeAffinityGaps) {
  Population pop;
  pop.members = {member({0.0}, 0, -1e6), member({0.0}, 0, -1.0)};
  const auto p = selection_probabilities(pop, 1.0);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 1.0);
}

TEST(SelectParents, DegenerateDistributionAlwaysPicksTheSameFirstParent) {
  Population pop;
  for (int i = 0; i < 4; ++i) pop.members.push_back(member({0.0}, i % 2, 0.0));
  const std::vector<double> probs{0.0, 0.0, 1.0, 0.0};
  auto rng = derive_stream(2, 0, Purpose::selection);
  for (int i = 0; i < 200; ++i) {
    const auto pick = select_parents(pop, probs, rng);
    ASSERT_EQ(pick.first, 2u);
    ASSERT_TRUE(pick.second.has_value());
    ASSERT_EQ(*pick.second, 0u);  // only other class-0 member; zero mass falls back to uniform
  }
}

TEST(SelectParents, LoneClassMemberHasNoSecondParent) {
  Population pop;
  pop.members = {member({0.1}, 0, -1.0), member({0.2}, 1, -1.0), member({0.3}, 1, -1.0)};
  const std::vector<double> probs{1.0, 0.0, 0.0};
  auto rng = derive_stream(3, 0, Purpose::selection);
  const auto pick = select_parents(pop, probs, rng);
  EXPECT_EQ(pick.first, 0u);
  EXPECT_FALSE(pick.second.has_value());
}

TEST(SelectParents, TwoMemberClassPicksTheOther) {
  Population pop;
  pop.members = {member({0.1}, 0, -1.0), member({0.2}, 0, -1.0)};
  const auto probs = selection_probabilities(pop, 1.0);
  auto rng = derive_stream(4, 0, Purpose::selection);
  for (int i = 0; i < 200; ++i) {
    const auto pick = select_parents(pop, probs, rng);
    ASSERT_TRUE(pick.second.has_value());
    ASSERT_NE(*pick.second, pick.first);
  }
}

TEST(SelectParents, SecondParentFollowsRenormalisedProbabilities) {
  // Class 0: members 0, 1, 2 with probs 0.1, 0.2, 0.3; class 1: member 3, 0.4.
  Population pop;
  for (int i = 0; i < 4; ++i) pop.members.push_back(member({0.0}, i < 3 ? 0 : 1, 0.0));
  const std::vector<double> probs{0.1, 0.2, 0.3, 0.4};
  auto rng = derive_stream(5, 0, Purpose::selection);
  std::vector<double> first(4, 0), second_given_2(4, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto pick = select_parents(pop, probs, rng);
    ++first[pick.first];
    if (pick.first == 2) ++second_given_2[*pick.second];
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(first[i] / n, probs[i], 0.005);
  const double total = second_given_2[0] + second_given_2[1];
  EXPECT_EQ(second_given_2[2], 0.0);
  EXPECT_NEAR(second_given_2[0] / total, 1.0 / 3.0, 0.01);
}

TEST(Crossover, IdenticalParentsGiveTheParent) {
  const auto p = member({0.1, 0.5, 0.9}, 2, -0.7);
  auto rng = derive_stream(6, 0, Purpose::crossover);
  EXPECT_EQ(crossover(p, p, CrossoverMode::literal, rng), p.x);
  EXPECT_EQ(crossover(p, p, CrossoverMode::inverted, rng), p.x);
}

TEST(Crossover, EntriesComeFromTheParents) {
  auto rng = derive_stream(7, 0, Purpose::crossover);
  for (int t = 0; t < 100; ++t) {
    const auto a = member(oracle::random_point(rng, 20), 0, -rng.uniform(0.0, 3.0));
    const auto b = member(oracle::random_point(rng, 20), 0, -rng.uniform(0.0, 3.0));
    const auto child = crossover(a, b, t % 2 ? CrossoverMode::literal : CrossoverMode::inverted, rng);
    for (std::size_t i = 0; i < child.size(); ++i) ASSERT_TRUE(child[i] == a.x[i] || child[i] == b.x[i]);
  }
}

TEST(Crossover, WeightFormulae) {
  EXPECT_DOUBLE_EQ(crossover_weight(-2.0, -3.0, CrossoverMode::literal), 0.4);
  EXPECT_DOUBLE_EQ(crossover_weight(-2.0, -3.0, CrossoverMode::inverted), 0.6);
  EXPECT_DOUBLE_EQ(crossover_weight(0.0, 0.0, CrossoverMode::literal), 0.5);
  EXPECT_DOUBLE_EQ(crossover_weight(0.0, -1.0, CrossoverMode::literal), 0.0);
}

TEST(Crossover, LiteralPickFrequency) {
  const std::size_t d = 100000;
  const auto a = member(FeatureVector(d, 0.0), 0, -2.0);
  const auto b = member(FeatureVector(d, 1.0), 0, -3.0);
  auto rng = derive_stream(8, 0, Purpose::crossover);
  const auto child = crossover(a, b, CrossoverMode::literal, rng);
  const double from_a = static_cast<double>(std::count(child.begin(), child.end(), 0.0)) / static_cast<double>(d);
  EXPECT_NEAR(from_a, 0.4, 0.01);
}

TEST(Crossover, RejectsMismatchedParents) {
  auto rng = derive_stream(9, 0, Purpose::crossover);
  EXPECT_THROW(crossover(member({0.1}, 0, -1), member({0.1, 0.2}, 0, -1), CrossoverMode::literal, rng),
               DimensionError);
  EXPECT_THROW(crossover(member({0.1}, 0, -1), member({0.2}, 1, -1), CrossoverMode::literal, rng), DataError);
}

TEST(Mutation, ZeroProbabilityIsIdentity) {
  ExpansionConfig cfg;
  cfg.mutation_prob = 0.0;
  auto rng = derive_stream(10, 0, Purpose::mutation);
  const FeatureVector x{0.0, 0.3, 1.0};
  EXPECT_EQ(mutate(x, cfg, rng), x);
}

TEST(Mutation, ClipsAtOne) {
  ExpansionConfig cfg;
  cfg.mutation_prob = 1.0;
  auto rng = derive_stream(11, 0, Purpose::mutation);
  for (double v : mutate(FeatureVector(1000, 1.0), cfg, rng)) {
    ASSERT_LE(v, 1.0);
    ASSERT_GE(v, 1.0 - cfg.delta_max);
  }
}

TEST(Mutation, RateAndMagnitudes) {
  ExpansionConfig cfg;  // rho = 0.15, delta in [0.05, 0.15]
  auto rng = derive_stream(12, 0, Purpose::mutation);
  const auto u = draw_mutation(10000, cfg, rng);
  std::size_t touched = 0;
  for (double v : u) {
    if (v == 0.0) continue;
    ++touched;
    ASSERT_GE(std::abs(v), cfg.delta_min);
    ASSERT_LE(std::abs(v), cfg.delta_max);
  }
  EXPECT_NEAR(static_cast<double>(touched) / 10000.0, 0.15, 0.02);
}

TEST(Mutation, SignsAreBalanced) {
  ExpansionConfig cfg;
  cfg.mutation_prob = 1.0;
  auto rng = derive_stream(13, 0, Purpose::mutation);
  const auto u = draw_mutation(20000, cfg, rng);
  const auto neg = std::count_if(u.begin(), u.end(), [](double v) { return v < 0; });
  EXPECT_NEAR(static_cast<double>(neg) / 20000.0, 0.5, 0.02);
}

TEST(ExpansionConfig, Validation) {
  ExpansionConfig cfg;
  cfg.generations = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.delta_min = 0.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.mutation_prob = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

namespace {

struct Scene {
  Dataset data;
  FeatureNetwork net;
};

Scene separable_scene() {
  SynthSpec s;
  s.classes = 3;
  s.per_class = 60;
  s.dim = 12;
  s.spread = 0.8;
  s.noise = 0.04;
  s.seed = 3;
  Scene sc{synth_dataset(s), init_network({12, 8, 3}, 1)};
  return sc;
}

}  // namespace

TEST(Expand, SingleClassNeighboursStopAfterOneGeneration) {
  auto sets = neighbour_sets(1, 3);
  ExpansionConfig cfg;
  cfg.population = 30;
  cfg.generations = 10;
  const FeatureVector q(3, 0.2);
  const auto score = [&](const FeatureVector& x) { return affinity(x, q); };
  const auto res = expand(std::span<const NeighborSet>(sets), 1, score, cfg, ExpansionStreams::derive(1, 0, 0));
  EXPECT_EQ(res.population.generation, 1);
  ASSERT_EQ(res.trace.generations.size(), 2u);
  EXPECT_EQ(res.trace.generations.back().proportion[0], 1.0);
}

TEST(Expand, OneGenerationBudget) {
  auto sets = neighbour_sets(2, 2);
  ExpansionConfig cfg;
  cfg.population = 12;
  cfg.generations = 1;
  cfg.early_stop = false;
  const auto res = expand(std::span<const NeighborSet>(sets), 2, kZeroScore, cfg, ExpansionStreams::derive(1, 0, 0));
  EXPECT_EQ(res.population.generation, 1);
  EXPECT_EQ(res.trace.generations.size(), 2u);
}

TEST(Expand, InvariantsHoldEveryGeneration) {
  const auto sc = separable_scene();
  const ReferenceIndex index(sc.data, MemoryBank{}, sc.net, LayerSelection({0}, sc.net.depth()));
  auto rng = derive_stream(4, 0, Purpose::synth);
  for (int q = 0; q < 5; ++q) {
    const auto x = oracle::random_point(rng, 12);
    const auto fl = flock(x, index, 4);
    std::vector<NeighborSet> sets;
    for (int c = 0; c < 3; ++c) sets.push_back(fl.at({0, c}));
    ExpansionConfig cfg;
    cfg.population = 60;
    cfg.generations = 8;
    cfg.early_stop = false;
    const LayerScorer scorer(sc.net, 0, x);
    const auto res = expand(std::span<const NeighborSet>(sets), 3, scorer, cfg, ExpansionStreams::derive(9, q, 0));
    EXPECT_EQ(res.population.size(), 60u);
    EXPECT_EQ(res.trace.generations.size(), 9u);
    for (const auto& m : res.population.members) {
      EXPECT_TRUE(in_unit_box(m.x));
      EXPECT_EQ(m.affinity, scorer(m.x));
    }
    for (const auto& g : res.trace.generations)
      EXPECT_NEAR(std::accumulate(g.proportion.begin(), g.proportion.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Expand, DeterministicAcrossRuns) {
  auto sets = neighbour_sets(2, 3, 5);
  ExpansionConfig cfg;
  cfg.population = 40;
  cfg.generations = 5;
  cfg.early_stop = false;
  const FeatureVector q(5, 0.25);
  const auto score = [&](const FeatureVector& x) { return affinity(x, q); };
  const auto a = expand(std::span<const NeighborSet>(sets), 2, score, cfg, ExpansionStreams::derive(3, 7, 0));
  const auto b = expand(std::span<const NeighborSet>(sets), 2, score, cfg, ExpansionStreams::derive(3, 7, 0));
  ASSERT_EQ(a.population.size(), b.population.size());
  for (std::size_t i = 0; i < a.population.size(); ++i) EXPECT_EQ(a.population.members[i].x, b.population.members[i].x);
}

TEST(Expand, TrueClassTakesOverOnSeparableData) {
  // Held-out query from class 2; with selection strong enough to beat the
  // mutation noise its class fills the population and affinity climbs.
  const auto sc = separable_scene();
  std::vector<std::size_t> train_idx(150);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  const auto train = sc.data.subset(train_idx);
  const auto& q = sc.data[170];
  const ReferenceIndex index(train, MemoryBank{}, sc.net, LayerSelection({0}, sc.net.depth()));
  const auto fl = flock(q.x, index, 5);
  std::vector<NeighborSet> sets;
  for (int c = 0; c < 3; ++c) sets.push_back(fl.at({0, c}));
  ExpansionConfig cfg;
  cfg.population = 300;
  cfg.generations = 30;
  cfg.temperature = 0.01;
  cfg.early_stop = false;
  const LayerScorer scorer(sc.net, 0, q.x);
  const auto res = expand(std::span<const NeighborSet>(sets), 3, scorer, cfg, ExpansionStreams::derive(2, 5, 0));
  const auto& gens = res.trace.generations;
  const auto y = static_cast<std::size_t>(q.label);
  EXPECT_EQ(gens.back().proportion[y], 1.0);
  EXPECT_GT(gens.back().mean_affinity[y], gens[1].mean_affinity[y]);
}

TEST(Expand, TrainingPointQueryTwoWellSeparatedClasses) {
  // Classes centred at 0.2 and 0.8 in every coordinate, default settings.
  auto rng = derive_stream(6, 0, Purpose::synth);
  std::vector<LabeledExample> ex;
  for (int i = 0; i < 100; ++i) {
    FeatureVector x(20);
    for (auto& v : x) v = (i % 2 ? 0.8 : 0.2) + 0.05 * rng.normal();
    clip_unit(x);
    ex.push_back({x, i % 2});
  }
  const Dataset data(ex, 2);
  const auto net = init_network({20, 8, 2}, 1);
  const ReferenceIndex index(data, MemoryBank{}, net, LayerSelection({0}, net.depth()));
  for (std::size_t qi : {0u, 1u, 2u, 3u}) {
    const auto& q = data[qi];
    const auto fl = flock(q.x, index, 10);
    std::vector<NeighborSet> sets{fl.at({0, 0}), fl.at({0, 1})};
    const ExpansionConfig cfg;
    const LayerScorer scorer(net, 0, q.x);
    const auto res = expand(std::span<const NeighborSet>(sets), 2, scorer, cfg, ExpansionStreams::derive(1, qi, 0));
    const auto& gens = res.trace.generations;
    const auto y = static_cast<std::size_t>(q.label);
    EXPECT_EQ(gens.back().proportion[y], 1.0) << "query " << qi;
    for (std::size_t g = 3; g < gens.size(); ++g)
      EXPECT_GE(gens[g].proportion[y], gens[g - 1].proportion[y]) << "query " << qi << " generation " << g;
  }
}

TEST(GenerationTrace, CsvLayout) {
  GenerationTrace t;
  t.generations.push_back({0, {0.75, 0.25}, {-1.5, std::nan("")}});
  std::ostringstream out;
  t.write_csv(out);
  EXPECT_EQ(out.str(), "generation,class,proportion,mean_affinity\n0,0,0.750000,-1.500000\n0,1,0.250000,\n");
}
