// Full-observation dynamic program and its runtime controller.
#include <cmath>
#include <gtest/gtest.h>

#include "fidesign/discretize.hpp"
#include "fidesign/error.hpp"
#include "fidesign/fofi.hpp"
#include "test_support.hpp"

using namespace fidesign;

TEST(FofiReward, ThetaIndependentIsZero) {
  const ModelFamily f = fidesign::testing::flat_family(1, 3, 2, 2);
  for (double v : fofi_reward(1, 0, 0.5, f)) EXPECT_EQ(v, 0.0);
}

TEST(FofiReward, SixStateThirdStateCarriesNoInformation) {
  const ModelFamily f = build_six_state_raw();
  for (int u = 0; u < 2; ++u)
    for (double v : fofi_reward(2, u, 0.37, f)) EXPECT_EQ(v, 0.0);
}

TEST(FofiReward, SixStateFirstStateEntry) {
  const ModelFamily f = build_six_state_raw();
  EXPECT_NEAR(fofi_reward(0, 1, 0.37, f)[1], std::pow(1.0 / 0.37, 2), 1e-3);
  EXPECT_NEAR(fofi_reward(0, 1, 0.37, f)[1], 7.3046, 1e-3);
}

TEST(SolveFofi, SixStateLongRun) {
  const StatePolicy p = solve_fofi(build_six_state(), 0.37, 40);
  ASSERT_TRUE(p.long_run.has_value());
  // augmented state x * 2 + y
  for (int y = 0; y < 2; ++y) {
    EXPECT_EQ((*p.long_run)[0 * 2 + y], 1) << "stay in state 1";
    EXPECT_EQ((*p.long_run)[2 * 2 + y], 0) << "leave state 3";
  }
}

TEST(SolveFofi, MiddleStateTiesGoToFirstControl) {
  const ModelFamily f = build_six_state_raw();
  const ModelFamily observed("observed", f.domain(), [&f](double p) {
    PomdpModel m = f.eval(p);
    m.mask = EmissionMask{};
    m.L = 3;
    m.emission = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    m.initial_obs.assign(3, 1.0 / 3.0);
    return m;
  });
  const StateTables tabs = build_state_tables(observed, 0.37);
  const StatePolicy p = solve_fofi(observed, 0.37, 20);
  for (int t = 0; t < 20; ++t) {
    EXPECT_EQ(p.tables[t][1], 0);
    // both candidates from x = 2 lead to the same successor law
    double cand[2];
    for (int u = 0; u < 2; ++u) {
      cand[u] = tabs.reward[1 * 2 + u];
      if (t + 1 < 20)
        for (int x2 = 0; x2 < 3; ++x2) cand[u] += tabs.trans[(u * 3 + 1) * 3 + x2] * p.values[t + 1][x2];
    }
    EXPECT_NEAR(cand[0], cand[1], 1e-12 * std::max(1.0, cand[0]));
  }
}

TEST(SolveFofi, ThetaIndependentFamilyIsZero) {
  const StatePolicy p = solve_fofi(fidesign::testing::flat_family(2, 3, 2, 2), 0.3, 6);
  for (const auto& row : p.values)
    for (double v : row) EXPECT_EQ(v, 0.0);
}

TEST(SolveFofi, MatchesExhaustiveAssignments) {
  const ModelFamily f = build_random_family(21, 2, 2, 2);
  const int T = 2;
  const StatePolicy p = solve_fofi(f, 0.45, T);
  const StateTables tabs = build_state_tables(f, 0.45);
  // every assignment of a control to each (t, x): 2^(T*K) policies
  for (int x0 = 0; x0 < 2; ++x0) {
    double best = 0.0;
    for (int mask = 0; mask < 16; ++mask) {
      auto ctrl = [&](int t, int x) { return (mask >> (t * 2 + x)) & 1; };
      std::vector<double> dist{x0 == 0 ? 1.0 : 0.0, x0 == 1 ? 1.0 : 0.0};
      double value = 0.0;
      for (int t = 0; t < T; ++t) {
        std::vector<double> next(2, 0.0);
        for (int x = 0; x < 2; ++x) {
          const int u = ctrl(t, x);
          value += dist[x] * tabs.reward[x * 2 + u];
          for (int x2 = 0; x2 < 2; ++x2) next[x2] += dist[x] * tabs.trans[(u * 2 + x) * 2 + x2];
        }
        dist = next;
      }
      best = std::max(best, value);
    }
    EXPECT_NEAR(p.values[0][x0], best, 1e-9);
  }
}

TEST(SolveFofi, ValuesShrinkTowardHorizon) {
  const StatePolicy p = solve_fofi(build_adversarial(), 0.7, 15);
  for (int t = 0; t + 1 < 15; ++t)
    for (int x = 0; x < 4; ++x) EXPECT_GE(p.values[t][x], p.values[t + 1][x] - 1e-12);
}

TEST(SolveFofi, AdversarialAlternates) {
  const StatePolicy p = solve_fofi(build_adversarial(), 0.7, 40);
  ASSERT_TRUE(p.long_run.has_value());
  // the chosen strategy is the opposite of the last executed control, whatever S is
  for (int s = 0; s < 2; ++s)
    for (int up = 0; up < 2; ++up) EXPECT_EQ((*p.long_run)[s * 2 + up], 1 - up);
}

TEST(FofiRuntime, MapStateControl) {
  const StatePolicy p = solve_fofi(build_random_family(5, 3, 2, 2), 0.5, 5);
  EXPECT_EQ(fofi_runtime_control(p, 2, std::vector<double>{0.2, 0.3, 0.5}), p.tables[2][2]);
  EXPECT_EQ(fofi_runtime_control(p, 2, std::vector<double>{0.5, 0.5, 0.0}), p.tables[2][0]);
  for (int x = 0; x < 3; ++x) {
    std::vector<double> b(3, 0.0);
    b[x] = 1.0;
    EXPECT_EQ(fofi_runtime_control(p, 4, BeliefState{b}), p.tables[4][x]);
  }
  EXPECT_THROW(fofi_runtime_control(p, 5, std::vector<double>{1.0, 0.0, 0.0}), Error);
}
