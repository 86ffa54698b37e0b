#include "fidesign/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fidesign/error.hpp"

namespace fidesign {

namespace {

void require_standard(const PomdpModel& m, const char* who) {
  if (!m.mask.is_standard())
    throw schema_error(std::string(who) + ": model has a non-standard emission mask; augment it first");
}

// Joint underflow below this is treated as an impossible window.
constexpr double kImpossible = 1e-300;

}  // namespace

double propagate(std::span<const double> belief, int u, int y_next, const PomdpModel& m,
                 std::vector<double>& out) {
  const int K = m.K;
  out.assign(K, 0.0);
  const double* P = m.transition.data() + static_cast<std::size_t>(u) * K * K;
  for (int x = 0; x < K; ++x) {
    const double b = belief[x];
    if (b == 0.0) continue;
    const double* row = P + static_cast<std::size_t>(x) * K;
    for (int x2 = 0; x2 < K; ++x2) out[x2] += b * row[x2];
  }
  double total = 0.0;
  for (int x2 = 0; x2 < K; ++x2) {
    out[x2] *= m.emit(x2, y_next);
    total += out[x2];
  }
  if (total > 0.0)
    for (double& v : out) v /= total;
  return total;
}

double condition_initial(std::span<const double> nu, int y0, const PomdpModel& m, std::vector<double>& out) {
  out.assign(m.K, 0.0);
  double total = 0.0;
  for (int x = 0; x < m.K; ++x) {
    out[x] = nu[x] * m.emit(x, y0);
    total += out[x];
  }
  if (total > 0.0)
    for (double& v : out) v /= total;
  return total;
}

FilterResult filter_step(const BeliefState& belief, int u, int y_next, const PomdpModel& m) {
  require_standard(m, "filter_step");
  if (u < 0 || u >= m.num_controls() || y_next < 0 || y_next >= m.L ||
      belief.weights.size() != static_cast<std::size_t>(m.K))
    throw index_error("filter_step: index out of range");
  FilterResult r;
  r.pred_prob = propagate(belief.weights, u, y_next, m, r.belief.weights);
  if (!(r.pred_prob > kProbFloor)) {
    std::ostringstream os;
    os << "impossible observation: y=" << y_next << " after u=" << u << " (p=" << r.pred_prob << ")";
    throw numerical_error(os.str());
  }
  return r;
}

std::vector<double> lead_prior(std::span<const double> nu, int u_lead, const PomdpModel& m) {
  const int K = m.K;
  std::vector<double> out(K, 0.0);
  double total = 0.0;
  for (int x = 0; x < K; ++x) {
    bool reachable = false;
    for (int from = 0; from < K && !reachable; ++from) reachable = m.trans(u_lead, from, x) > 0.0;
    if (reachable) out[x] = nu[x];
    total += out[x];
  }
  if (!(total > 0.0)) return {nu.begin(), nu.end()};
  for (double& v : out) v /= total;
  return out;
}

bool window_belief(const HistoryWindow& w, std::span<const double> nu, const PomdpModel& m,
                   std::vector<double>& belief) {
  require_standard(m, "window_belief");
  const std::size_t n = w.obs.size();
  const bool lead = w.has_lead();
  if (n == 0 || (!lead && w.ctrl.size() + 1 != n)) throw index_error("window_belief: malformed window");
  for (int y : w.obs)
    if (y < 0 || y >= m.L) throw index_error("window_belief: observation out of range");
  for (int u : w.ctrl)
    if (u < 0 || u >= m.num_controls()) throw index_error("window_belief: control out of range");

  double joint = 1.0;
  std::vector<double> tmp;
  std::size_t c = 0;
  if (lead) {
    joint *= condition_initial(lead_prior(nu, w.ctrl[0], m), w.obs[0], m, belief);
    c = 1;
  } else {
    joint *= condition_initial(nu, w.obs[0], m, belief);
  }
  for (std::size_t i = 1; i < n && joint > kImpossible; ++i, ++c) {
    joint *= propagate(belief, w.ctrl[c], w.obs[i], m, tmp);
    belief.swap(tmp);
  }
  return joint > kImpossible;
}

std::vector<double> predictive_from_belief(std::span<const double> belief, int u, const PomdpModel& m) {
  const int K = m.K;
  std::vector<double> next(K, 0.0);
  for (int x = 0; x < K; ++x) {
    if (belief[x] == 0.0) continue;
    for (int x2 = 0; x2 < K; ++x2) next[x2] += belief[x] * m.trans(u, x, x2);
  }
  std::vector<double> pred(m.L, 0.0);
  for (int x2 = 0; x2 < K; ++x2)
    for (int y = 0; y < m.L; ++y) pred[y] += next[x2] * m.emit(x2, y);
  return pred;
}

std::vector<double> window_predictive(const HistoryWindow& w, int u_t, std::span<const double> nu,
                                      const PomdpModel& m) {
  if (u_t < 0 || u_t >= m.num_controls()) throw index_error("window_predictive: control out of range");
  std::vector<double> belief;
  if (!window_belief(w, nu, m, belief)) throw numerical_error("impossible window");
  return predictive_from_belief(belief, u_t, m);
}

double default_fd_step(double theta) { return 1e-4 * std::max(1.0, std::abs(theta)); }

FdStencil fd_stencil(const ThetaDomain& d, double theta, double h) {
  if (h <= 0.0) h = default_fd_step(theta);
  FdStencil s;
  if (theta - h >= d.lo && theta + h <= d.hi) {
    s.theta_lo = theta - h;
    s.theta_hi = theta + h;
  } else if (theta - h < d.lo) {
    s.theta_lo = theta;
    s.theta_hi = theta + h;
  } else {
    s.theta_lo = theta - h;
    s.theta_hi = theta;
  }
  s.denom = s.theta_hi - s.theta_lo;
  return s;
}

double score_fd(const ModelFamily& family, const std::function<double(const PomdpModel&)>& functional,
                double theta, double h) {
  const FdStencil s = fd_stencil(family.domain(), theta, h);
  const double lo = functional(family.eval(s.theta_lo));
  const double hi = functional(family.eval(s.theta_hi));
  return log_derivative(lo, hi, s);
}

LogLikelihood loglikelihood(const PomdpModel& m, std::span<const int> y_seq, std::span<const int> u_seq) {
  require_standard(m, "loglikelihood");
  if (y_seq.empty() || u_seq.size() + 1 != y_seq.size())
    throw index_error("loglikelihood: need len(u_seq) == len(y_seq) - 1");
  LogLikelihood ll;
  std::vector<double> belief;
  std::vector<double> tmp;
  const double p0 = condition_initial(m.initial_state, y_seq[0], m, belief);
  if (!(p0 > kProbFloor)) {
    ll.value = -std::numeric_limits<double>::infinity();
    ll.first_impossible = 0;
    return ll;
  }
  double acc = std::log(p0);
  for (std::size_t t = 0; t < u_seq.size(); ++t) {
    const double p = propagate(belief, u_seq[t], y_seq[t + 1], m, tmp);
    if (!(p > kProbFloor)) {
      ll.value = -std::numeric_limits<double>::infinity();
      ll.first_impossible = static_cast<int>(t + 1);
      return ll;
    }
    acc += std::log(p);
    belief.swap(tmp);
  }
  ll.value = acc;
  return ll;
}

LogLikelihood loglikelihood(const ModelFamily& family, double theta, std::span<const int> y_seq,
                            std::span<const int> u_seq) {
  return loglikelihood(family.eval(theta), y_seq, u_seq);
}

ThetaPosterior ThetaPosterior::uniform(std::vector<double> grid) {
  ThetaPosterior p;
  p.weights.assign(grid.size(), grid.empty() ? 0.0 : 1.0 / static_cast<double>(grid.size()));
  p.grid = std::move(grid);
  return p;
}

double ThetaPosterior::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) m += grid[i] * weights[i];
  return m;
}

int ThetaPosterior::mode_index() const {
  return static_cast<int>(std::max_element(weights.begin(), weights.end()) - weights.begin());
}

void ThetaPosterior::validate(const ThetaDomain* domain) const {
  if (grid.empty()) throw schema_error("theta posterior: empty grid");
  if (grid.size() != weights.size()) throw schema_error("theta posterior: grid and weights differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i > 0 && !(grid[i] > grid[i - 1])) throw schema_error("theta posterior: grid not strictly increasing");
    if (!(weights[i] >= 0.0)) throw schema_error("theta posterior: negative weight");
    if (domain && !domain->contains(grid[i])) throw schema_error("theta posterior: grid point outside domain");
    sum += weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-10) throw schema_error("theta posterior: weights do not sum to 1");
}

ThetaPosterior posterior_update(const ThetaPosterior& post, std::span<const double> pred_probs) {
  if (pred_probs.size() != post.grid.size()) throw index_error("posterior_update: length mismatch");
  ThetaPosterior out = post;
  double total = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < pred_probs.size(); ++i) {
    if (!(pred_probs[i] >= 0.0)) throw numerical_error("posterior_update: negative or NaN probability");
    if (pred_probs[i] > kProbFloor) any = true;
    out.weights[i] = post.weights[i] * pred_probs[i];
    total += out.weights[i];
  }
  if (!any || !(total > 0.0)) throw numerical_error("posterior annihilated");
  for (double& w : out.weights) w /= total;
  return out;
}

}  // namespace fidesign
