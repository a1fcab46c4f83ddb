#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sigsched/nsga2.hpp"

using namespace sigsched;
using namespace sigsched::nsga2;

namespace {

std::vector<Individual> population_of(const std::vector<ObjectiveVector>& objs) {
  std::vector<Individual> pop;
  for (const auto& o : objs) pop.push_back({Genome{}, o, 0, 0.0, true});
  return pop;
}

IntersectionConfig grid_config(std::size_t links, Seconds lo, Seconds hi, Seconds step, Seconds inter = 3) {
  IntersectionConfig c;
  c.num_links = links;
  c.link_names.assign(links, "l");
  c.min_green_s = lo;
  c.max_green_s = hi;
  c.green_step_s = step;
  c.inter_green_s = inter;
  c.sat_flow_motorized = 1.0;
  c.sat_flow_non_motorized = 0.5;
  return c;
}

std::set<oracle::Point> points_of(const ParetoFront& front) {
  std::set<oracle::Point> s;
  for (const auto& m : front) s.insert({m.objectives.f1, m.objectives.f2});
  return s;
}

oracle::Instance instance_of(const QueueState& q, const IntersectionConfig& cfg) {
  oracle::Instance x;
  x.motorized.assign(q.motorized.begin(), q.motorized.end());
  x.non_motorized.assign(q.non_motorized.begin(), q.non_motorized.end());
  x.greens.assign(cfg.num_links, 0);
  x.inter_green = cfg.inter_green_s;
  x.sat_m_per100 = std::llround(cfg.sat_flow_motorized * 100);
  x.sat_nm_per100 = std::llround(cfg.sat_flow_non_motorized * 100);
  return x;
}

std::vector<oracle::i64> grid_values(const IntersectionConfig& cfg) {
  std::vector<oracle::i64> v;
  for (std::size_t k = 0; k < cfg.green_levels(); ++k) v.push_back(cfg.green_level(k));
  return v;
}

}  // namespace

TEST(Dominance, Examples) {
  EXPECT_TRUE(dominates({1, 2}, {2, 2}));
  EXPECT_TRUE(dominates({1, 1}, {2, 2}));
  EXPECT_FALSE(dominates({1, 3}, {2, 2}));
  EXPECT_FALSE(dominates({2, 2}, {2, 2}));
}

TEST(NonDominatedSort, SmallExample) {
  auto pop = population_of({{1, 2}, {2, 1}, {3, 3}});
  const auto fronts = fast_non_dominated_sort(pop);
  ASSERT_EQ(fronts.size(), 2u);
  EXPECT_EQ(fronts[0], (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(fronts[1], (std::vector<std::size_t>{2}));
  EXPECT_EQ(pop[2].rank, 1u);
}

TEST(NonDominatedSort, DuplicatesShareAFront) {
  auto pop = population_of({{4, 4}, {4, 4}, {5, 5}});
  const auto fronts = fast_non_dominated_sort(pop);
  ASSERT_EQ(fronts.size(), 2u);
  EXPECT_EQ(fronts[0].size(), 2u);
}

TEST(NonDominatedSort, MatchesPeelingOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(1, 64)(rng);
    const int span = std::uniform_int_distribution<int>(3, 40)(rng);
    std::vector<ObjectiveVector> objs;
    std::vector<oracle::Point> pts;
    for (int i = 0; i < n; ++i) {
      const std::int64_t a = std::uniform_int_distribution<int>(0, span)(rng);
      const std::int64_t b = std::uniform_int_distribution<int>(0, span)(rng);
      objs.push_back({a, b});
      pts.push_back({a, b});
    }
    auto pop = population_of(objs);
    auto got = fast_non_dominated_sort(pop);
    auto want = oracle::peel_fronts(pts);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t f = 0; f < got.size(); ++f) {
      std::sort(got[f].begin(), got[f].end());
      ASSERT_EQ(got[f], want[f]);
      for (std::size_t i : got[f]) ASSERT_EQ(pop[i].rank, f);
    }
  }
}

TEST(Crowding, ThreePointFront) {
  const std::vector<ObjectiveVector> front{{0, 10}, {5, 5}, {10, 0}};
  const auto d = crowding_distance(front);
  EXPECT_EQ(d[0], kInfinity);
  EXPECT_EQ(d[1], 2.0);
  EXPECT_EQ(d[2], kInfinity);
}

TEST(Crowding, TinyFrontsAreAllInfinite) {
  const std::vector<ObjectiveVector> one{{3, 3}}, two{{1, 5}, {5, 1}};
  EXPECT_EQ(crowding_distance(one), (std::vector<double>{kInfinity}));
  EXPECT_EQ(crowding_distance(two), (std::vector<double>{kInfinity, kInfinity}));
}

TEST(Crowding, ZeroRangeObjectiveIsSkipped) {
  const std::vector<ObjectiveVector> front{{0, 7}, {4, 7}, {10, 7}};
  const auto d = crowding_distance(front);
  for (double x : d) EXPECT_FALSE(std::isnan(x));
  EXPECT_DOUBLE_EQ(d[1], 1.0);
}

TEST(Crowding, RandomFrontsExtremesInfinite) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(3, 40)(rng);
    std::set<std::int64_t> xs;
    while (static_cast<int>(xs.size()) < n) xs.insert(std::uniform_int_distribution<int>(0, 500)(rng));
    std::vector<ObjectiveVector> front;
    std::int64_t y = 1000;
    for (auto x : xs) front.push_back({x, y -= std::uniform_int_distribution<int>(1, 10)(rng)});
    const auto d = crowding_distance(front);
    EXPECT_EQ(d.front(), kInfinity);
    EXPECT_EQ(d.back(), kInfinity);
    for (std::size_t i = 1; i + 1 < d.size(); ++i) {
      EXPECT_GT(d[i], 0.0);
      EXPECT_LE(d[i], 2.0);
    }
  }
}

TEST(Tournament, PrefersLowerRankThenWiderCrowding) {
  std::vector<Individual> pop(3);
  pop[0].rank = 1;
  pop[1].rank = 0;
  pop[1].crowding = 0.5;
  pop[2].rank = 0;
  pop[2].crowding = 1.5;
  EXPECT_TRUE(crowded_better(pop, 1, 0));
  EXPECT_TRUE(crowded_better(pop, 2, 1));
  EXPECT_FALSE(crowded_better(pop, 0, 2));
  Rng rng(1);
  std::map<std::size_t, int> wins;
  for (int i = 0; i < 3000; ++i) ++wins[tournament_select(pop, 3, rng)];
  EXPECT_GT(wins[2], wins[1]);
  EXPECT_GT(wins[1], wins[0]);
}

TEST(Crossover, ChildrenTakeGenesFromParents) {
  Rng rng(2);
  const Genome a{{10, 11, 12, 13, 14}}, b{{20, 21, 22, 23, 24}};
  int swapped = 0;
  for (int t = 0; t < 500; ++t) {
    auto [c1, c2] = crossover(a, b, 1.0, rng);
    for (std::size_t i = 0; i < 5; ++i) {
      const bool straight = c1.greens[i] == a.greens[i] && c2.greens[i] == b.greens[i];
      const bool crossed = c1.greens[i] == b.greens[i] && c2.greens[i] == a.greens[i];
      ASSERT_TRUE(straight || crossed);
      swapped += crossed;
    }
  }
  EXPECT_NEAR(swapped / 2500.0, 0.5, 0.05);
  auto [n1, n2] = crossover(a, b, 0.0, rng);
  EXPECT_EQ(n1, a);
  EXPECT_EQ(n2, b);
}

TEST(Mutation, StaysOnGridAndIsUniform) {
  const auto cfg = grid_config(1, 10, 35, 5);
  Rng rng(4);
  std::map<Seconds, int> counts;
  const int draws = 12000;
  for (int i = 0; i < draws; ++i) {
    const auto g = mutate(Genome{{10}}, 1.0, cfg, rng);
    ASSERT_TRUE(cfg.on_green_grid(g.greens[0]));
    ++counts[g.greens[0]];
  }
  ASSERT_EQ(counts.size(), 6u);
  double chi2 = 0.0;
  const double expected = draws / 6.0;
  for (auto [_, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 20.52);  // 5 dof, p = 0.001
  EXPECT_EQ(mutate(Genome{{15}}, 0.0, cfg, rng).greens[0], 15);
}

TEST(Repair, SnapsToBoundsAndGrid) {
  const auto cfg = grid_config(4, 10, 30, 5);
  EXPECT_EQ(repair(Genome{{3, 41, 17, 13}}, cfg).greens, (std::vector<Seconds>{10, 30, 15, 15}));
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    Genome g{{std::uniform_int_distribution<int>(-50, 100)(rng)}};
    const auto r = repair(g, cfg);
    ASSERT_TRUE(cfg.on_green_grid(r.greens[0])) << g.greens[0];
  }
}

TEST(Run, MatchesExhaustiveFrontTwoLinks) {
  const auto cfg = grid_config(2, 10, 30, 5);
  const QueueState q{{50, 10}, {6, 4}, 0};
  OptimizerParams p;
  p.rng_seed = 11;
  const auto front = run(q, cfg, p);
  EXPECT_EQ(points_of(front), oracle::exhaustive_front(instance_of(q, cfg), grid_values(cfg)));
  for (const auto& m : front) {
    EXPECT_EQ(m.rank, 0u);
    EXPECT_TRUE(validate_plan(to_plan(m.genome, cfg), cfg).empty());
  }
}

TEST(Run, MatchesExhaustiveFrontRandomSmallInstances) {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (std::size_t L : {2u, 3u}) {
      const auto cfg = grid_config(L, 10, 35, 5, std::uniform_int_distribution<int>(0, 4)(rng));
      QueueState q = QueueState::zeros(L);
      for (std::size_t i = 0; i < L; ++i) {
        q.motorized[i] = std::uniform_int_distribution<int>(0, 60)(rng);
        q.non_motorized[i] = std::uniform_int_distribution<int>(0, 30)(rng);
      }
      OptimizerParams p;
      p.rng_seed = seed;
      EXPECT_EQ(points_of(run(q, cfg, p)), oracle::exhaustive_front(instance_of(q, cfg), grid_values(cfg)))
          << "seed " << seed << " L " << L;
    }
  }
}

TEST(Run, ZeroQueueFrontIsMinimumGreens) {
  const auto cfg = grid_config(3, 10, 60, 1);
  const auto front = run(QueueState::zeros(3), cfg, {});
  ASSERT_EQ(front.size(), 1u);
  EXPECT_EQ(front[0].genome.greens, (std::vector<Seconds>{10, 10, 10}));
  EXPECT_EQ(front[0].objectives.f1, 0);
}

TEST(Run, SameSeedSameFront) {
  const auto cfg = grid_config(5, 10, 60, 1);
  const QueueState q{{42, 11, 9, 14, 8}, {12, 4, 3, 5, 2}, 0};
  OptimizerParams p;
  p.rng_seed = 99;
  const auto a = run(q, cfg, p), b = run(q, cfg, p);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].genome, b[i].genome);
    EXPECT_EQ(a[i].objectives, b[i].objectives);
  }
}

TEST(Run, FrontIsMutuallyNonDominated) {
  const auto cfg = grid_config(5, 10, 60, 1);
  const QueueState q{{80, 20, 5, 40, 12}, {30, 2, 0, 10, 6}, 0};
  const auto front = run(q, cfg, {});
  for (const auto& a : front)
    for (const auto& b : front) EXPECT_FALSE(dominates(a.objectives, b.objectives));
}

TEST(Run, HypervolumeNeverShrinks) {
  const auto cfg = grid_config(4, 10, 60, 1);
  const QueueState q{{70, 30, 15, 45}, {20, 9, 3, 14}, 0};
  const ObjectiveVector ref{1000, 1000};
  double last = -1.0;
  bool monotone = true;
  OptimizerParams p;
  p.generations = 40;
  run(q, cfg, p, [&](const GenerationSnapshot& s) {
    const auto objs = s.archive->objectives();
    const double hv = hypervolume(objs, ref);
    monotone = monotone && hv >= last;
    last = hv;
  });
  EXPECT_TRUE(monotone);
  EXPECT_GT(last, 0.0);
}

TEST(Run, RejectsBadParams) {
  const auto cfg = grid_config(2, 10, 30, 5);
  OptimizerParams p;
  p.population_size = 1;
  EXPECT_THROW(run(QueueState::zeros(2), cfg, p), ValidationError);
  p = {};
  p.crossover_prob = 1.5;
  EXPECT_THROW(run(QueueState::zeros(2), cfg, p), ValidationError);
  EXPECT_THROW(run(QueueState::zeros(3), cfg, {}), ValidationError);
}

TEST(Hypervolume, Rectangles) {
  const std::vector<ObjectiveVector> one{{2, 3}};
  EXPECT_DOUBLE_EQ(hypervolume(one, {10, 10}), 56.0);
  const std::vector<ObjectiveVector> two{{2, 6}, {5, 3}};
  EXPECT_DOUBLE_EQ(hypervolume(two, {10, 10}), 8.0 * 4 + 5.0 * 3);
  const std::vector<ObjectiveVector> outside{{12, 1}};
  EXPECT_DOUBLE_EQ(hypervolume(outside, {10, 10}), 0.0);
}

TEST(Selection, KneePicksBalancedPoint) {
  ParetoFront f{{Genome{{1}}, {0, 100}}, {Genome{{2}}, {10, 50}}, {Genome{{3}}, {40, 40}}};
  EXPECT_EQ(select_index(f, SelectionPolicy::knee()), 1u);
  EXPECT_EQ(select_index(f, SelectionPolicy::weighted(1.0, 0.0)), 0u);
  EXPECT_EQ(select_index(f, SelectionPolicy::weighted(0.0, 1.0)), 2u);
  EXPECT_EQ(select_index(f, SelectionPolicy::min_f1()), 0u);
  EXPECT_EQ(select_index(f, SelectionPolicy::min_f2()), 2u);
}

TEST(Selection, SingletonAndEmpty) {
  ParetoFront one{{Genome{{7, 8}}, {3, 4}}};
  EXPECT_EQ(select_index(one, SelectionPolicy::knee()), 0u);
  EXPECT_THROW(select_index({}, SelectionPolicy::knee()), ValidationError);
}

TEST(Selection, TieBreaksOnGenome) {
  ParetoFront f{{Genome{{20, 10}}, {5, 5}}, {Genome{{10, 20}}, {5, 5}}};
  EXPECT_EQ(select_index(f, SelectionPolicy::knee()), 1u);
}

TEST(Selection, PolicyNamesRoundTrip) {
  for (std::string n : {"knee", "weighted", "min_f1", "min_f2"}) EXPECT_EQ(policy_name(parse_policy(n)), n);
  EXPECT_THROW(parse_policy("best"), ValidationError);
}

TEST(Params, JsonRoundTrip) {
  OptimizerParams p;
  p.population_size = 24;
  p.generations = 7;
  p.mutation_prob = 0.3;
  p.rng_seed = 1234567;
  const auto back = json(p).get<OptimizerParams>();
  EXPECT_EQ(back.population_size, 24u);
  EXPECT_EQ(back.generations, 7u);
  EXPECT_EQ(back.mutation_prob, 0.3);
  EXPECT_EQ(back.rng_seed, 1234567u);
}
