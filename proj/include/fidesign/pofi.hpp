#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fidesign/inference.hpp"
#include "fidesign/model.hpp"
#include "fidesign/window.hpp"

namespace fidesign {

struct PofiOptions {
  int m = 1;
  bool lead_control = false;
  std::vector<double> nu;  // window-start prior; empty selects the model's initial_state
  double fd_step = 0.0;    // <= 0 selects default_fd_step(theta)
  double cell_budget = 1e8;
};

/// Stationary table found by extract_long_run, or the cells that never settled.
struct LongRun {
  bool converged = false;
  int t0 = -1;
  std::vector<int> table;
  struct Disagreement {
    int t = 0;
    std::int64_t window = 0;
    int control_t = 0;
    int control_next = 0;
  };
  std::vector<Disagreement> disagreements;
};

struct PofiPolicy {
  WindowLayout layout;
  int T = 0;
  int K = 0;
  std::vector<std::vector<int>> tables;     // [t][window]
  std::vector<std::vector<double>> values;  // [t][window], Fisher Information to go
  std::vector<double> y0_law;
  double root_value = 0.0;  // sum_y0 p(y0) values[0][y0]
  std::vector<double> theta_grid;
  std::vector<double> theta_weights;
  std::vector<double> nu;
  std::optional<LongRun> long_run;

  int m() const { return layout.lag(); }
};

/// Squared finite-difference score of p(y' | window, u_t, nu, theta) for every y'.
std::vector<double> pofi_reward(const HistoryWindow& window, int u_t, double theta, const ModelFamily& family,
                                std::span<const double> nu, double fd_step = 0.0);

/// Throws a budget Error when L^(m+1) l^(m+1) T exceeds opts.cell_budget.
void check_pofi_budget(const WindowLayout& layout, int T, double cell_budget);

/// Backward induction on precomputed (possibly prior-mixed) tables.
/// `randomizer` is the l x l matrix q(executed | chosen).
PofiPolicy solve_pofi_tables(const WindowTables& tables, int T, std::span<const double> randomizer);

PofiPolicy solve_pofi(const ModelFamily& family, double theta, int T, const PofiOptions& opts = {});
PofiPolicy solve_pofi(const ModelFamily& family, const ThetaPosterior& prior, int T, const PofiOptions& opts = {});

/// Earliest t0 at the full window level from which the tables repeat for at least
/// `run` consecutive steps. Fills `disagreements` otherwise.
LongRun extract_long_run(const PofiPolicy& policy, int run = 3);

/// Control for the window observed at time t.
int pofi_lookup(const PofiPolicy& policy, int t, const HistoryWindow& window);

/// Relative tolerance used when comparing candidate values in the max.
inline constexpr double kTieTolerance = 1e-12;

/// Index of the largest value; values within kTieTolerance of the best go to the lowest index.
int argmax_lowest(std::span<const double> values);

}  // namespace fidesign
