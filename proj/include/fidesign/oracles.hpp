#pragma once

#include <functional>
#include <map>
#include <span>
#include <vector>

#include "fidesign/model.hpp"
#include "fidesign/pofi.hpp"

namespace fidesign {

/// Chosen control at time t given y_0..y_t and the executed u_0..u_{t-1}.
using HistoryPolicy = std::function<int(int t, std::span<const int> y, std::span<const int> u)>;

HistoryPolicy pofi_history_policy(const PofiPolicy& policy);
HistoryPolicy fixed_history_policy(int u);

struct OracleOptions {
  std::vector<double> nu;  // empty: the model's initial state law at theta
  double fd_step = 0.0;
  double budget = 1e7;     // cap on L^(T+1) * l^T enumerated histories
};

/// Fisher information of y_{0:T} about theta under a history policy, by enumerating
/// every (y, executed u) history with a full-history filter at theta and its stencil
/// neighbours. The y_0 score is not counted.
double exact_fi(const ModelFamily& family, double theta, const HistoryPolicy& policy, int T,
                const OracleOptions& opts = {});

struct BruteForceResult {
  double value = 0.0;
  /// Key: y_0, u_0, y_1, ..., u_{t-1}, y_t (executed controls).
  std::map<std::vector<int>, int> controls;

  int control(std::span<const int> y, std::span<const int> u) const;
  HistoryPolicy as_policy() const;
};

/// Best deterministic adaptive policy over full histories, by exhaustive expectimax.
/// Ties go to the lowest control index.
BruteForceResult brute_force_policy(const ModelFamily& family, double theta, int T, const OracleOptions& opts = {});

}  // namespace fidesign
