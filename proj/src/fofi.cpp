#include "fidesign/fofi.hpp"

#include "fidesign/error.hpp"
#include "fidesign/pofi.hpp"

namespace fidesign {

std::vector<double> fofi_reward(int x, int u, double theta, const ModelFamily& family, double fd_step) {
  const int K = family.K();
  if (x < 0 || x >= K || u < 0 || u >= family.num_controls()) throw index_error("fofi_reward: index out of range");
  const FdStencil st = fd_stencil(family.domain(), theta, fd_step);
  const PomdpModel lo = family.eval(st.theta_lo);
  const PomdpModel hi = family.eval(st.theta_hi);
  std::vector<double> out(K);
  for (int x2 = 0; x2 < K; ++x2) {
    const double s = log_derivative(lo.trans(u, x, x2), hi.trans(u, x, x2), st);
    out[x2] = s * s;
  }
  return out;
}

StateTables build_state_tables(const ModelFamily& family, double theta, double fd_step) {
  const FdStencil st = fd_stencil(family.domain(), theta, fd_step);
  const PomdpModel mid = family.eval(theta);
  const PomdpModel lo = family.eval(st.theta_lo);
  const PomdpModel hi = family.eval(st.theta_hi);
  StateTables tab;
  tab.K = mid.K;
  tab.l = mid.num_controls();
  tab.trans = mid.transition;
  tab.reward.assign(static_cast<std::size_t>(tab.K) * tab.l, 0.0);
  for (int x = 0; x < tab.K; ++x)
    for (int u = 0; u < tab.l; ++u) {
      double acc = 0.0;
      for (int x2 = 0; x2 < tab.K; ++x2) {
        const double p = mid.trans(u, x, x2);
        if (p == 0.0) continue;
        const double s = log_derivative(lo.trans(u, x, x2), hi.trans(u, x, x2), st);
        acc += p * s * s;
      }
      tab.reward[static_cast<std::size_t>(x) * tab.l + u] = acc;
    }
  return tab;
}

void accumulate_state_tables(StateTables& dst, const StateTables& src, double weight) {
  if (dst.trans.empty()) {
    dst.K = src.K;
    dst.l = src.l;
    dst.trans.assign(src.trans.size(), 0.0);
    dst.reward.assign(src.reward.size(), 0.0);
  }
  if (weight <= 0.0) return;
  for (std::size_t i = 0; i < src.trans.size(); ++i) dst.trans[i] += weight * src.trans[i];
  for (std::size_t i = 0; i < src.reward.size(); ++i) dst.reward[i] += weight * src.reward[i];
}

StatePolicy solve_fofi_tables(const StateTables& tab, int T, std::span<const double> randomizer) {
  if (T < 1) throw schema_error("solve_fofi: horizon must be at least 1");
  const int K = tab.K;
  const int l = tab.l;
  StatePolicy pol;
  pol.T = T;
  pol.K = K;
  pol.l = l;
  pol.tables.resize(T);
  pol.values.resize(T);
  std::vector<double> next(K, 0.0);
  std::vector<double> q(l);
  std::vector<double> qw(l);
  for (int t = T - 1; t >= 0; --t) {
    auto& table = pol.tables[t];
    auto& vals = pol.values[t];
    table.assign(K, 0);
    vals.assign(K, 0.0);
    for (int x = 0; x < K; ++x) {
      for (int u = 0; u < l; ++u) {
        const double* p = tab.trans.data() + (static_cast<std::size_t>(u) * K + x) * K;
        double acc = tab.reward[static_cast<std::size_t>(x) * l + u];
        for (int x2 = 0; x2 < K; ++x2) acc += p[x2] * next[x2];
        q[u] = acc;
      }
      for (int w = 0; w < l; ++w) {
        double acc = 0.0;
        for (int u = 0; u < l; ++u) acc += randomizer[w * l + u] * q[u];
        qw[w] = acc;
      }
      const int best = argmax_lowest(qw);
      table[x] = best;
      vals[x] = qw[best];
    }
    next = vals;
  }
  for (int t0 = 0; t0 + 3 < T; ++t0) {
    if (pol.tables[t0] == pol.tables[t0 + 1] && pol.tables[t0 + 1] == pol.tables[t0 + 2] &&
        pol.tables[t0 + 2] == pol.tables[t0 + 3]) {
      pol.long_run = pol.tables[t0];
      pol.long_run_t0 = t0;
      break;
    }
  }
  return pol;
}

StatePolicy solve_fofi(const ModelFamily& family, double theta, int T, double fd_step) {
  return solve_fofi(family, ThetaPosterior::point(theta), T, fd_step);
}

StatePolicy solve_fofi(const ModelFamily& family, const ThetaPosterior& prior, int T, double fd_step) {
  prior.validate(&family.domain());
  StateTables mixed;
  for (int i = 0; i < prior.size(); ++i) accumulate_state_tables(mixed, build_state_tables(family, prior.grid[i], fd_step), prior.weights[i]);
  const PomdpModel ref = family.eval(prior.grid[0]);
  StatePolicy pol = solve_fofi_tables(mixed, T, ref.randomizer);
  pol.theta_grid = prior.grid;
  pol.theta_weights = prior.weights;
  return pol;
}

int fofi_runtime_control(const StatePolicy& pol, int t, std::span<const double> belief) {
  if (t < 0 || t >= pol.T) throw index_error("fofi_runtime_control: time out of range");
  if (belief.size() != static_cast<std::size_t>(pol.K)) throw index_error("fofi_runtime_control: belief size");
  int best = 0;
  for (int x = 1; x < pol.K; ++x)
    if (belief[x] > belief[best]) best = x;
  return pol.tables[t][best];
}

int fofi_runtime_control(const StatePolicy& pol, int t, const BeliefState& belief) {
  return fofi_runtime_control(pol, t, std::span<const double>(belief.weights));
}

}  // namespace fidesign
