#pragma once

#include <optional>
#include <vector>

#include "fidesign/inference.hpp"
#include "fidesign/model.hpp"

namespace fidesign {

struct StatePolicy {
  int T = 0;
  int K = 0;
  int l = 0;
  std::vector<std::vector<int>> tables;     // [t][x]
  std::vector<std::vector<double>> values;  // [t][x]
  std::vector<double> theta_grid;
  std::vector<double> theta_weights;
  std::optional<std::vector<int>> long_run;
  int long_run_t0 = -1;
};

/// Squared finite-difference score of p(x' | x, u, theta) for every x'.
std::vector<double> fofi_reward(int x, int u, double theta, const ModelFamily& family, double fd_step = 0.0);

/// Expected rewards and transitions of one model, mixed over a grid when needed.
struct StateTables {
  int K = 0;
  int l = 0;
  std::vector<double> trans;   // [u][x][x']
  std::vector<double> reward;  // [x][u], sum_x' C p
};

StateTables build_state_tables(const ModelFamily& family, double theta, double fd_step = 0.0);
void accumulate_state_tables(StateTables& dst, const StateTables& src, double weight);

StatePolicy solve_fofi_tables(const StateTables& tabs, int T, std::span<const double> randomizer);
StatePolicy solve_fofi(const ModelFamily& family, double theta, int T, double fd_step = 0.0);
StatePolicy solve_fofi(const ModelFamily& family, const ThetaPosterior& prior, int T, double fd_step = 0.0);

/// Control for the most probable state; belief ties go to the lowest state index.
int fofi_runtime_control(const StatePolicy& policy, int t, const BeliefState& belief);
int fofi_runtime_control(const StatePolicy& policy, int t, std::span<const double> belief);

}  // namespace fidesign
