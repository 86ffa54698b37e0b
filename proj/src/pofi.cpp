#include "fidesign/pofi.hpp"

#include <cmath>
#include <sstream>

#include "fidesign/error.hpp"

namespace fidesign {

int argmax_lowest(std::span<const double> v) {
  double best = v[0];
  for (double x : v) best = std::max(best, x);
  const double cut = best - kTieTolerance * std::abs(best);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] >= cut) return static_cast<int>(i);
  return 0;
}

std::vector<double> pofi_reward(const HistoryWindow& window, int u_t, double theta, const ModelFamily& family,
                                std::span<const double> nu_in, double fd_step) {
  const FdStencil st = fd_stencil(family.domain(), theta, fd_step);
  const PomdpModel mid = family.eval(theta);
  const std::vector<double> nu = nu_in.empty() ? mid.initial_state : std::vector<double>(nu_in.begin(), nu_in.end());
  const std::vector<double> lo = window_predictive(window, u_t, nu, family.eval(st.theta_lo));
  const std::vector<double> hi = window_predictive(window, u_t, nu, family.eval(st.theta_hi));
  std::vector<double> out(lo.size());
  for (std::size_t y = 0; y < out.size(); ++y) {
    const double s = log_derivative(lo[y], hi[y], st);
    out[y] = s * s;
  }
  return out;
}

void check_pofi_budget(const WindowLayout& layout, int T, double cell_budget) {
  const double cells = pofi_cell_count(layout, T);
  if (cells > cell_budget) {
    std::ostringstream os;
    os << "POFI table too large: L^(m+1) * l^(m+1) * T = " << cells << " cells exceeds budget " << cell_budget
       << " (solver cost grows as O(T L^(m+2) l^(m+1)))";
    throw budget_error(os.str());
  }
}

PofiPolicy solve_pofi_tables(const WindowTables& tabs, int T, std::span<const double> randomizer) {
  if (T < 1) throw schema_error("solve_pofi: horizon must be at least 1");
  const WindowLayout& layout = tabs.layout;
  const int l = tabs.l;
  const int L = tabs.L;
  bool identity = true;
  for (int w = 0; w < l; ++w)
    for (int u = 0; u < l; ++u)
      if (randomizer[w * l + u] != (w == u ? 1.0 : 0.0)) identity = false;

  PofiPolicy pol;
  pol.layout = layout;
  pol.T = T;
  pol.tables.resize(T);
  pol.values.resize(T);
  pol.y0_law = tabs.y0_law;

  std::vector<double> next(static_cast<std::size_t>(layout.size(layout.level_for_time(T))), 0.0);
  std::vector<double> q(l);
  std::vector<double> qw(l);
  std::vector<double> g;
  for (int t = T - 1; t >= 0; --t) {
    const int level = layout.level_for_time(t);
    const LevelTable& tab = tabs.levels[level];
    const SuccessorRows sr = make_successor_rows(layout, level);
    sr.gather(next, g);
    auto& table = pol.tables[t];
    auto& vals = pol.values[t];
    table.assign(static_cast<std::size_t>(tab.size), 0);
    vals.assign(static_cast<std::size_t>(tab.size), 0.0);
    for (std::int64_t z = 0; z < tab.size; ++z) {
      for (int u = 0; u < l; ++u) {
        const std::size_t cell = static_cast<std::size_t>(z) * l + u;
        q[u] = tab.reward[cell] +
               dot_fixed(tab.pred.data() + cell * L, g.data() + static_cast<std::size_t>(sr.row[cell]) * L, L);
      }
      if (!identity) {
        for (int w = 0; w < l; ++w) {
          double acc = 0.0;
          for (int u = 0; u < l; ++u) acc += randomizer[w * l + u] * q[u];
          qw[w] = acc;
        }
      } else {
        qw = q;
      }
      const int best = argmax_lowest(qw);
      table[z] = best;
      vals[z] = qw[best];
    }
    next = vals;
  }
  double root = 0.0;
  for (int y = 0; y < L && y < static_cast<int>(pol.y0_law.size()); ++y) root += pol.y0_law[y] * pol.values[0][y];
  pol.root_value = root;
  pol.long_run = extract_long_run(pol);
  return pol;
}

namespace {

WindowLayout make_layout(const ModelFamily& family, int T, const PofiOptions& opts) {
  if (T < 1) throw schema_error("solve_pofi: horizon must be at least 1");
  if (opts.m < 0 || opts.m >= T) throw schema_error("solve_pofi: lag m must satisfy 0 <= m < T");
  WindowLayout layout(family.L(), family.num_controls(), opts.m, opts.lead_control);
  check_pofi_budget(layout, T, opts.cell_budget);
  return layout;
}

}  // namespace

PofiPolicy solve_pofi(const ModelFamily& family, double theta, int T, const PofiOptions& opts) {
  return solve_pofi(family, ThetaPosterior::point(theta), T, opts);
}

PofiPolicy solve_pofi(const ModelFamily& family, const ThetaPosterior& prior, int T, const PofiOptions& opts) {
  prior.validate(&family.domain());
  const WindowLayout layout = make_layout(family, T, opts);
  WindowTables mixed;
  for (int i = 0; i < prior.size(); ++i) {
    if (prior.weights[i] <= 0.0 && !mixed.levels.empty()) continue;
    const WindowTables tabs = build_window_tables(family, prior.grid[i], layout, opts.nu, opts.fd_step);
    accumulate_tables(mixed, tabs, prior.weights[i]);
  }
  const PomdpModel ref = family.eval(prior.grid[0]);
  PofiPolicy pol = solve_pofi_tables(mixed, T, ref.randomizer);
  pol.K = ref.K;
  pol.theta_grid = prior.grid;
  pol.theta_weights = prior.weights;
  pol.nu = opts.nu.empty() ? ref.initial_state : opts.nu;
  return pol;
}

LongRun extract_long_run(const PofiPolicy& pol, int run) {
  LongRun lr;
  const int full = pol.layout.full_level();
  const int T = pol.T;
  for (int t0 = full; t0 + run < T; ++t0) {
    bool ok = true;
    for (int k = 0; k < run && ok; ++k) ok = pol.tables[t0 + k] == pol.tables[t0 + k + 1];
    if (ok) {
      lr.converged = true;
      lr.t0 = t0;
      lr.table = pol.tables[t0];
      return lr;
    }
  }
  for (int t = full; t + 1 < T; ++t) {
    const auto& a = pol.tables[t];
    const auto& b = pol.tables[t + 1];
    for (std::size_t z = 0; z < a.size(); ++z)
      if (a[z] != b[z]) {
        lr.disagreements.push_back({t, static_cast<std::int64_t>(z), a[z], b[z]});
        break;
      }
  }
  return lr;
}

int pofi_lookup(const PofiPolicy& pol, int t, const HistoryWindow& window) {
  if (t < 0 || t >= pol.T) throw index_error("pofi_lookup: time out of range");
  const int level = pol.layout.level_for_time(t);
  return pol.tables[t][pol.layout.encode(level, window)];
}

}  // namespace fidesign
