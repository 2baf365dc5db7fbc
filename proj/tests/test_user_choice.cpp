#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "tardis/error.hpp"
#include "tardis/user_choice.hpp"

using namespace tardis;

namespace {

ChoiceModelConfig everyone(double mu_t, double mu_s) {
  ChoiceModelConfig c;
  c.n_t = 1.0;
  c.n_s = 1.0;
  c.mu_t = mu_t;
  c.mu_s = mu_s;
  return c;
}

}  // namespace

TEST(ShiftProportion, LimitCases) {
  EXPECT_EQ(shift_proportion(1.0, 0.3), 1.0);
  EXPECT_EQ(shift_proportion(0.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(shift_proportion(0.5, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(shift_proportion(0.25, 0.5), 0.125);
}

TEST(ShiftProportion, MeanMatchesMu) {
  for (double mu : {0.1, 0.25, 0.5}) {
    const auto profiles = draw_profiles(everyone(mu, mu), 100000, 7);
    double t = 0.0;
    double s = 0.0;
    for (const auto& p : profiles) {
      t += p.p_t;
      s += p.p_s;
    }
    // 1e5 draws: the standard error is below 0.3% of mu at these levels.
    EXPECT_NEAR(t / 1e5, mu, 0.01 * mu + 3e-3) << "mu=" << mu;
    EXPECT_NEAR(s / 1e5, mu, 0.01 * mu + 3e-3) << "mu=" << mu;
  }
}

TEST(DrawProfiles, EligibilityThresholds) {
  ChoiceModelConfig c = everyone(1.0, 1.0);
  c.n_t = 0.0;
  for (const auto& p : draw_profiles(c, 1000, 3)) {
    EXPECT_FALSE(p.can_time);
    EXPECT_EQ(p.p_t, 0.0);
    EXPECT_TRUE(p.can_space);
    EXPECT_EQ(p.p_s, 1.0);
  }
  c.n_t = 0.3;
  std::size_t eligible = 0;
  for (const auto& p : draw_profiles(c, 10000, 3)) eligible += p.can_time;
  EXPECT_NEAR(eligible / 1e4, 0.3, 0.02);
}

TEST(DrawProfiles, StableUnderPopulationGrowth) {
  const auto c = everyone(0.3, 0.4);
  const auto small = draw_profiles(c, 10, 99);
  const auto large = draw_profiles(c, 50, 99);
  for (std::size_t u = 0; u < small.size(); ++u) {
    EXPECT_EQ(small[u].p_t, large[u].p_t);
    EXPECT_EQ(small[u].p_s, large[u].p_s);
    EXPECT_EQ(small[u].stream, large[u].stream);
  }
  EXPECT_EQ(draw_profile(c, 7, 99).p_t, small[7].p_t);
}

TEST(ChoiceModelConfigTest, Validation) {
  ChoiceModelConfig c;
  c.mu_t = 1.5;
  EXPECT_THROW(c.validate(), ValidationError);
  c = ChoiceModelConfig{};
  c.n_s = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_THROW(parse_assignment_policy("random"), ValidationError);
  EXPECT_EQ(parse_assignment_policy(to_string(AssignmentPolicy::AllOrNothing)),
            AssignmentPolicy::AllOrNothing);
}

TEST(Partition, SharesFollowIndependence) {
  UserShiftProfile p;
  p.p_t = 0.5;
  p.p_s = 0.2;
  const auto part = partition_volume(1000, p);
  EXPECT_EQ(part.both, 100);
  EXPECT_EQ(part.time_only, 400);
  EXPECT_EQ(part.space_only, 100);
  EXPECT_EQ(part.immovable, 400);
}

TEST(Partition, ConservesVolume) {
  const auto c = everyone(0.37, 0.61);
  for (const auto& p : draw_profiles(c, 200, 4)) {
    for (Bytes v : {Bytes{0}, Bytes{1}, Bytes{997}, Bytes{123456789}}) {
      const auto part = partition_volume(v, p);
      Bytes total = 0;
      for (ShiftKind k : kShiftKinds) {
        EXPECT_GE(part.of(k), 0);
        total += part.of(k);
      }
      EXPECT_EQ(total, v);
    }
  }
}

TEST(BuildChoiceSet, FourShapes) {
  const SlotGrid grid(3, 24);
  const ChoiceModelConfig c;  // max delay 18
  const auto imm = build_choice_set(grid, c, ShiftKind::Immovable, 1, 5);
  EXPECT_EQ(imm.slots, std::vector<std::size_t>{grid.id(1, 5)});
  const auto space = build_choice_set(grid, c, ShiftKind::SpaceOnly, 1, 5);
  EXPECT_EQ(space.slots,
            (std::vector<std::size_t>{grid.id(0, 5), grid.id(1, 5),
                                      grid.id(2, 5)}));
  const auto time = build_choice_set(grid, c, ShiftKind::TimeOnly, 1, 5);
  ASSERT_EQ(time.size(), 19u);
  EXPECT_EQ(time.slots.front(), grid.id(1, 5));
  EXPECT_EQ(time.slots.back(), grid.id(1, 23));
  const auto both = build_choice_set(grid, c, ShiftKind::Both, 1, 5);
  EXPECT_EQ(both.size(), 57u);
  EXPECT_EQ(std::set<std::size_t>(both.slots.begin(), both.slots.end()).size(),
            57u);
}

TEST(BuildChoiceSet, DelaysWrapIntoTheNextDay) {
  const SlotGrid grid(1, 24);
  ChoiceModelConfig c;
  c.max_delay_windows = 4;
  const auto set = build_choice_set(grid, c, ShiftKind::TimeOnly, 0, 22);
  EXPECT_EQ(set.slots, (std::vector<std::size_t>{22, 23, 0, 1, 2}));
  EXPECT_EQ(landing_day_offset(22, 1), 1u);
  EXPECT_EQ(landing_day_offset(22, 23), 0u);
  c.max_delay_windows = 24;
  EXPECT_THROW(build_choice_set(grid, c, ShiftKind::TimeOnly, 0, 0),
               ValidationError);
}

TEST(BuildChoiceSet, RestrictsToAvailableTpgs) {
  const SlotGrid grid(3, 4);
  ChoiceModelConfig c;
  c.tpgs_available = {2};
  const auto set = build_choice_set(grid, c, ShiftKind::SpaceOnly, 0, 1);
  EXPECT_EQ(set.slots, (std::vector<std::size_t>{grid.id(0, 1),
                                                 grid.id(2, 1)}));
}

TEST(Assign, SingletonTakesEverything) {
  Rng rng = make_rng(1);
  const std::vector<double> one = {1.0};
  for (auto policy :
       {AssignmentPolicy::Proportional, AssignmentPolicy::AllOrNothing}) {
    EXPECT_EQ(assign(42, one, policy, rng), std::vector<Bytes>{42});
  }
}

TEST(Assign, ProportionalSplitsByShare) {
  Rng rng = make_rng(1);
  const std::vector<double> s = {0.25, 0.75};
  EXPECT_EQ(assign(100, s, AssignmentPolicy::Proportional, rng),
            (std::vector<Bytes>{25, 75}));
  // floor(33.3) = 33 each; the remainder goes to the largest share, and
  // among equal shares to the lowest index.
  const std::vector<double> thirds = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_EQ(assign(100, thirds, AssignmentPolicy::Proportional, rng),
            (std::vector<Bytes>{34, 33, 33}));
}

TEST(Assign, AllOrNothingFrequency) {
  Rng rng = make_rng(2);
  const std::vector<double> s = {0.25, 0.75};
  int first = 0;
  constexpr int kTrials = 100000;
  for (int i = 0; i < kTrials; ++i) {
    const auto out = assign(10, s, AssignmentPolicy::AllOrNothing, rng);
    ASSERT_EQ(out[0] + out[1], 10);
    ASSERT_TRUE(out[0] == 0 || out[0] == 10);
    first += out[0] == 10;
  }
  EXPECT_NEAR(static_cast<double>(first) / kTrials, 0.25, 0.01);
}

TEST(Assign, AlwaysConservesVolume) {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + trial % 9;
    std::vector<double> s(n);
    for (double& x : s) x = uniform01(rng);
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    for (double& x : s) x /= total;
    const Bytes v = static_cast<Bytes>(uniform01(rng) * 1e9);
    for (auto policy :
         {AssignmentPolicy::Proportional, AssignmentPolicy::AllOrNothing}) {
      const auto out = assign(v, s, policy, rng);
      EXPECT_EQ(std::accumulate(out.begin(), out.end(), Bytes{0}), v);
    }
  }
}
