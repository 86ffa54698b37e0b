#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fidesign/model.hpp"

namespace fidesign {

/// Evenly spaced points from lower to upper inclusive (the last point is clamped to upper).
std::vector<double> theta_grid(const ThetaDomain& domain, double step);

struct GridEstimate {
  double theta = 0.0;
  int index = 0;
  double loglik = 0.0;
};

/// Grid point with the largest loglikelihood; ties go to the lowest theta.
/// Throws a numerical Error when the data are impossible under every grid point.
GridEstimate mle_grid(const ModelFamily& family, std::span<const double> grid, std::span<const int> y_seq,
                      std::span<const int> u_seq);
/// Same with the grid models evaluated up front (models[i] = family.eval(grid[i])).
GridEstimate mle_grid(std::span<const PomdpModel> models, std::span<const double> grid, std::span<const int> y_seq,
                      std::span<const int> u_seq);

struct SmoothResult {
  int T = 0;
  int K = 0;
  std::vector<double> marginals;  // (T+1) x K
  std::vector<double> pairs;      // T x K x K, p(x_t = i, x_{t+1} = j | y, u)
  double loglik = 0.0;

  double marginal(int t, int x) const { return marginals[static_cast<std::size_t>(t) * K + x]; }
  double pair(int t, int i, int j) const { return pairs[(static_cast<std::size_t>(t) * K + i) * K + j]; }
};

/// Scaled forward-backward pass. Throws a numerical Error naming the time index when
/// the sequence is impossible.
SmoothResult smooth_pairs(const PomdpModel& model, std::span<const int> y_seq, std::span<const int> u_seq);

/// Maximizer of f on [lo, hi] by golden-section search down to a bracket of width tol.
/// The endpoints are also compared; ties keep the interior point.
double golden_section_max(const std::function<double(double)>& f, double lo, double hi, double tol);

struct EmOptions {
  double tol = 1e-8;      // stop when the loglikelihood gain drops below this
  int max_iter = 200;
  double mstep_tol = 1e-6;
};

struct EmIteration {
  int iter = 0;
  double theta = 0.0;
  double loglik = 0.0;
};

struct EmResult {
  double theta = 0.0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<EmIteration> log;  // entry 0 is the starting point
};

/// EM for the scalar parameter. The M-step maximizes the expected complete-data
/// loglikelihood by golden-section search; a step that does not raise it is rejected.
EmResult em_estimate(const ModelFamily& family, double theta0, std::span<const int> y_seq,
                     std::span<const int> u_seq, const EmOptions& opts = {});

}  // namespace fidesign
