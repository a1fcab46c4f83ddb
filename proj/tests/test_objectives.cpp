#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sigsched/objectives.hpp"

using namespace sigsched;

namespace {

IntersectionConfig config(std::size_t links, double sat_m, double sat_nm, Seconds inter = 0) {
  IntersectionConfig c;
  c.num_links = links;
  c.link_names.assign(links, "l");
  c.min_green_s = 1;
  c.max_green_s = 120;
  c.inter_green_s = inter;
  c.sat_flow_motorized = sat_m;
  c.sat_flow_non_motorized = sat_nm;
  return c;
}

SignalPlan plan_of(std::vector<Seconds> greens, Seconds inter = 0, Seconds pad = 0) {
  SignalPlan p;
  p.inter_green_s = inter;
  p.guidance_pad_s = pad;
  for (std::size_t i = 0; i < greens.size(); ++i) p.phases.push_back({LinkId{i}, greens[i]});
  return p;
}

QueueState queue_of(std::vector<Count> m, std::vector<Count> nm) { return {std::move(m), std::move(nm), 0}; }

}  // namespace

TEST(Discharge, LinearDrainHandExample) {
  // 10 - floor(0.5*10) = 5, 5 - 5 = 0, 3 - floor(0.25*10) = 1, 2 - 2 = 0
  const auto out = discharge(queue_of({10, 5}, {3, 2}), plan_of({10, 10}), config(2, 0.5, 0.25));
  EXPECT_EQ(out.motorized, (std::vector<Count>{5, 0}));
  EXPECT_EQ(out.non_motorized, (std::vector<Count>{1, 0}));
}

TEST(Discharge, ZeroQueueStaysZero) {
  const auto out = discharge(QueueState::zeros(3), plan_of({10, 50, 90}), config(3, 1.3, 0.7));
  EXPECT_EQ(out, QueueState::zeros(3));
}

TEST(Discharge, ZeroGreenLeavesQueue) {
  const auto q = queue_of({4, 9, 1}, {2, 0, 7});
  EXPECT_EQ(discharge(q, plan_of({0, 0, 0}), config(3, 2.0, 2.0)), q);
}

TEST(Discharge, DimensionMismatchThrows) {
  EXPECT_THROW(discharge(queue_of({1, 2, 3}, {1, 2, 3}), plan_of({10, 10}), config(2, 1, 1)), ValidationError);
}

TEST(Discharge, DecimalRatesFloorExactly) {
  // 0.29 * 100 is 28.999999999999996 in binary floating point.
  const auto out = discharge(queue_of({100, 0}, {0, 0}), plan_of({100, 1}), config(2, 0.29, 0.5));
  EXPECT_EQ(out.motorized[0], 71);
}

TEST(F1, SumsResidualCounts) {
  EXPECT_EQ(f1(queue_of({5, 0}, {1, 0})), 6);
  EXPECT_EQ(f1(QueueState::zeros(4)), 0);
  EXPECT_EQ(f1(queue_of({1, 1, 1}, {0, 0, 0})), 3);
}

TEST(RedTimes, HandComputedCycle) {
  const auto p = plan_of({10, 20, 30}, 3);
  EXPECT_EQ(p.cycle_length(), 69);
  EXPECT_EQ(red_times(p), (RedTimeVector{59, 49, 39}));
}

TEST(RedTimes, SoleLinkIsNeverRed) { EXPECT_EQ(red_times(plan_of({15}, 0)), (RedTimeVector{0})); }

TEST(RedTimes, SymmetricGreens) { EXPECT_EQ(red_times(plan_of({10, 10}, 0)), (RedTimeVector{10, 10})); }

TEST(RedTimes, IndexedByLinkNotPosition) {
  SignalPlan p;
  p.inter_green_s = 3;
  p.phases = {{LinkId{2}, 30}, {LinkId{0}, 10}, {LinkId{1}, 20}};
  EXPECT_EQ(red_times(p), (RedTimeVector{59, 49, 39}));
}

TEST(RedTimes, InterGreenCanBeExcluded) {
  EXPECT_EQ(red_times(plan_of({10, 20, 30}, 3), {.include_inter_green = false}), (RedTimeVector{50, 40, 30}));
}

TEST(F2, SumOfRedTimes) {
  EXPECT_EQ(f2(plan_of({10, 20, 30}, 3)), 147);
  EXPECT_EQ(f2(plan_of({15}, 0)), 0);
  const auto base = f2(plan_of({7, 13, 22, 40}, 0));
  EXPECT_EQ(f2(plan_of({14, 26, 44, 80}, 0)), 2 * base);
}

TEST(F2, ClosedForm) {
  // (L-1) * sum(g) + L*L * inter + 2 * pad * L(L-1)
  const auto p = plan_of({12, 31, 18, 44, 25}, 3, 4);
  EXPECT_EQ(f2(p), 4 * (12 + 31 + 18 + 44 + 25) + 5 * 5 * 3 + 2 * 4 * 5 * 4);
}

TEST(F2, QueueWeightedVariant) {
  const auto p = plan_of({10, 20, 30}, 3);
  const auto q = queue_of({1, 0, 2}, {0, 3, 0});
  EXPECT_EQ(f2_weighted(p, q), 59 * 1 + 49 * 3 + 39 * 2);
  const auto v = evaluate(p, q, config(3, 1, 1, 3), {.queue_weighted_red = true});
  EXPECT_EQ(v.f2, 59 + 147 + 78);
}

TEST(Evaluate, ComposesDischargeAndRedTime) {
  const auto v = evaluate(plan_of({10, 10}), queue_of({10, 5}, {3, 2}), config(2, 0.5, 0.25));
  EXPECT_EQ(v.f1, 6);
  EXPECT_EQ(v.f2, 20);
}

TEST(Evaluate, ZeroQueueMinimalGreens) {
  auto cfg = config(3, 1, 0.5, 3);
  cfg.min_green_s = 10;
  const auto v = evaluate(plan_of({10, 10, 10}, 3), QueueState::zeros(3), cfg);
  EXPECT_EQ(v.f1, 0);
  EXPECT_EQ(v.f2, 2 * 30 + 3 * 3 * 3);
}

// Sweeping one green over its range: f1 never increases, f2 never decreases.
TEST(Evaluate, MonotoneInEachGreen) {
  const auto cfg = config(3, 0.7, 0.3, 2);
  const auto q = queue_of({40, 25, 13}, {9, 30, 4});
  for (std::size_t link = 0; link < 3; ++link) {
    std::vector<Seconds> g{20, 20, 20};
    ObjectiveVector prev{};
    for (Seconds s = cfg.min_green_s; s <= cfg.max_green_s; ++s) {
      g[link] = s;
      const auto v = evaluate(plan_of(g, 2), q, cfg);
      if (s > cfg.min_green_s) {
        EXPECT_LE(v.f1, prev.f1);
        EXPECT_GT(v.f2, prev.f2);
      }
      prev = v;
    }
  }
}

// Properties over random instances, f1/f2 checked against the integer oracle.
TEST(Objectives, RandomizedProperties) {
  std::mt19937_64 rng(2024);
  auto n = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t L = static_cast<std::size_t>(n(2, 6));
    oracle::Instance x;
    x.sat_m_per100 = n(1, 250);
    x.sat_nm_per100 = n(1, 250);
    x.inter_green = n(0, 5);
    x.pad = n(0, 4);
    auto cfg = config(L, x.sat_m_per100 / 100.0, x.sat_nm_per100 / 100.0, x.inter_green);
    QueueState q = QueueState::zeros(L);
    SignalPlan p;
    p.inter_green_s = x.inter_green;
    p.guidance_pad_s = x.pad;
    for (std::size_t i = 0; i < L; ++i) {
      x.motorized.push_back(q.motorized[i] = n(0, 200));
      x.non_motorized.push_back(q.non_motorized[i] = n(0, 200));
      x.greens.push_back(n(1, 120));
      p.phases.push_back({LinkId{i}, x.greens.back()});
    }
    const auto v = evaluate(p, q, cfg);
    ASSERT_EQ(v.f1, oracle::residual_congestion(x));
    ASSERT_EQ(v.f2, oracle::total_red(x));

    // Bounds on f1.
    Count capacity = 0;
    for (auto g : x.greens) capacity += x.sat_m_per100 * g / 100 + x.sat_nm_per100 * g / 100;
    EXPECT_LE(v.f1, q.total());
    EXPECT_GE(v.f1, std::max<Count>(0, q.total() - capacity));

    // Phase order does not change f2; red time stays below the cycle.
    SignalPlan shuffled = p;
    std::shuffle(shuffled.phases.begin(), shuffled.phases.end(), rng);
    EXPECT_EQ(f2(shuffled), v.f2);
    for (auto r : red_times(p)) {
      EXPECT_GE(r, 0);
      EXPECT_LT(r, p.cycle_length());
    }

    // Discharge is monotone in the queue and in the greens.
    QueueState bigger = q;
    bigger.motorized[0] += n(0, 20);
    bigger.non_motorized[L - 1] += n(0, 20);
    const auto a = discharge(q, p, cfg), b = discharge(bigger, p, cfg);
    SignalPlan longer = p;
    for (auto& ph : longer.phases) ph.green_s += n(0, 10);
    const auto c = discharge(q, longer, cfg);
    for (std::size_t i = 0; i < L; ++i) {
      EXPECT_LE(a.motorized[i], b.motorized[i]);
      EXPECT_LE(a.non_motorized[i], b.non_motorized[i]);
      EXPECT_LE(c.motorized[i], a.motorized[i]);
      EXPECT_LE(c.non_motorized[i], a.non_motorized[i]);
      EXPECT_LE(a.motorized[i], q.motorized[i]);
    }

    // Pure: same inputs, same output.
    EXPECT_EQ(evaluate(p, q, cfg), v);
  }
}
