#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fidesign/model.hpp"

namespace fidesign {

// All inference routines expect standard-mask models; run augment_autoregressive first.

struct FilterResult {
  BeliefState belief;
  double pred_prob = 0.0;  // p(y_{t+1} | y_{0:t}, u_{0:t})
};

/// One Bayes filter step. Throws a numerical Error ("impossible observation") when
/// the predictive probability of y_next is at or below kProbFloor.
FilterResult filter_step(const BeliefState& belief, int u, int y_next, const PomdpModel& model);

/// Non-throwing filter step: writes the normalized posterior into `out` and returns the
/// predictive probability. `out` is left unnormalized (all zeros) when it is 0.
double propagate(std::span<const double> belief, int u, int y_next, const PomdpModel& model,
                 std::vector<double>& out);

/// Belief of x_0 given y_0 under prior nu; returns p(y_0).
double condition_initial(std::span<const double> nu, int y0, const PomdpModel& model,
                         std::vector<double>& out);

/// The last observations and controls of a history, oldest first.
/// Without a leading control ctrl.size() == obs.size() - 1 and ctrl[j] sits between
/// obs[j] and obs[j+1]. With a leading control ctrl.size() == obs.size() and ctrl[0]
/// precedes obs[0].
struct HistoryWindow {
  std::vector<int> obs;
  std::vector<int> ctrl;

  bool has_lead() const { return !obs.empty() && ctrl.size() == obs.size(); }
};

/// Window-start prior when the control before the oldest observation is known:
/// nu restricted to the states reachable under u_lead, renormalized (nu itself when
/// nothing is reachable).
std::vector<double> lead_prior(std::span<const double> nu, int u_lead, const PomdpModel& model);

/// Belief of the newest state in the window, started from nu at the window start.
/// Returns false when the window is jointly impossible (probability underflows to 0).
bool window_belief(const HistoryWindow& window, std::span<const double> nu, const PomdpModel& model,
                   std::vector<double>& belief);

/// p(y_{t+1} | window, u_t, nu). Throws a numerical Error for an impossible window.
std::vector<double> window_predictive(const HistoryWindow& window, int u_t, std::span<const double> nu,
                                      const PomdpModel& model);

/// Predictive distribution of y' for a belief and an executed control.
std::vector<double> predictive_from_belief(std::span<const double> belief, int u, const PomdpModel& model);

/// Finite-difference evaluation points for d/dtheta at theta.
struct FdStencil {
  double theta_lo = 0.0;
  double theta_hi = 0.0;
  double denom = 0.0;  // theta_hi - theta_lo
};

double default_fd_step(double theta);

/// Central stencil when [theta-h, theta+h] lies in the domain, one-sided otherwise.
/// h <= 0 selects default_fd_step(theta).
FdStencil fd_stencil(const ThetaDomain& domain, double theta, double h = 0.0);

/// (log f_hi - log f_lo) / denom with both probabilities floored at kProbFloor.
inline double log_derivative(double f_lo, double f_hi, const FdStencil& s) {
  const double lo = f_lo > kProbFloor ? f_lo : kProbFloor;
  const double hi = f_hi > kProbFloor ? f_hi : kProbFloor;
  if (lo == hi) return 0.0;
  return (std::log(hi) - std::log(lo)) / s.denom;
}

/// Finite-difference derivative of log f(theta) for a probability-valued functional.
double score_fd(const ModelFamily& family, const std::function<double(const PomdpModel&)>& functional,
                double theta, double h = 0.0);

struct LogLikelihood {
  double value = 0.0;          // -infinity when the sequence is impossible
  int first_impossible = -1;   // time index of the first impossible observation
  bool finite() const { return first_impossible < 0; }
};

/// log p(y_{0:T} | u_{0:T-1}) by repeated filter steps. u_seq are executed controls.
LogLikelihood loglikelihood(const PomdpModel& model, std::span<const int> y_seq, std::span<const int> u_seq);
LogLikelihood loglikelihood(const ModelFamily& family, double theta, std::span<const int> y_seq,
                            std::span<const int> u_seq);

/// Weights over a sorted theta grid.
struct ThetaPosterior {
  std::vector<double> grid;
  std::vector<double> weights;

  static ThetaPosterior point(double theta) { return {{theta}, {1.0}}; }
  static ThetaPosterior uniform(std::vector<double> grid);
  int size() const { return static_cast<int>(grid.size()); }
  double mean() const;
  int mode_index() const;
  /// Throws a schema Error when the invariants do not hold.
  void validate(const ThetaDomain* domain = nullptr) const;
};

/// Bayes update: weights proportional to old weights times pred_probs.
ThetaPosterior posterior_update(const ThetaPosterior& post, std::span<const double> pred_probs);

}  // namespace fidesign
