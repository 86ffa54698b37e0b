#include "fidesign/estimation.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "fidesign/error.hpp"
#include "fidesign/inference.hpp"

namespace fidesign {

std::vector<double> theta_grid(const ThetaDomain& d, double step) {
  if (!(step > 0.0)) throw schema_error("theta grid: step must be positive");
  if (!(d.hi >= d.lo)) throw schema_error("theta grid: empty domain");
  const int n = static_cast<int>(std::floor((d.hi - d.lo) / step + 1e-9));
  std::vector<double> g;
  g.reserve(n + 2);
  for (int i = 0; i <= n; ++i) g.push_back(std::min(d.lo + i * step, d.hi));
  if (d.hi - g.back() > 1e-9 * std::max(1.0, std::abs(d.hi))) g.push_back(d.hi);
  return g;
}

GridEstimate mle_grid(std::span<const PomdpModel> models, std::span<const double> grid, std::span<const int> y_seq,
                      std::span<const int> u_seq) {
  if (grid.empty()) throw schema_error("mle_grid: empty grid");
  if (models.size() != grid.size()) throw index_error("mle_grid: one model per grid point required");
  GridEstimate best;
  bool found = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const LogLikelihood ll = loglikelihood(models[i], y_seq, u_seq);
    if (!ll.finite()) continue;
    if (!found || ll.value > best.loglik) {
      best = {grid[i], static_cast<int>(i), ll.value};
      found = true;
    }
  }
  if (!found) throw numerical_error("mle_grid: observed sequence is impossible at every grid point");
  return best;
}

GridEstimate mle_grid(const ModelFamily& family, std::span<const double> grid, std::span<const int> y_seq,
                      std::span<const int> u_seq) {
  std::vector<PomdpModel> models;
  models.reserve(grid.size());
  for (double th : grid) models.push_back(family.eval(th));
  return mle_grid(models, grid, y_seq, u_seq);
}

SmoothResult smooth_pairs(const PomdpModel& m, std::span<const int> y, std::span<const int> u) {
  if (!m.mask.is_standard()) throw schema_error("smooth_pairs: model has a non-standard emission mask");
  if (y.empty() || u.size() + 1 != y.size()) throw index_error("smooth_pairs: need len(u_seq) == len(y_seq) - 1");
  const int K = m.K;
  const int L = m.L;
  const int T = static_cast<int>(u.size());
  auto E = [&](int x, int yy) { return m.emission[static_cast<std::size_t>(x) * L + yy]; };
  auto P = [&](int uu, int i, int j) { return m.transition[(static_cast<std::size_t>(uu) * K + i) * K + j]; };
  auto impossible = [](int t) {
    std::ostringstream os;
    os << "smooth_pairs: observation at t=" << t << " is impossible";
    return numerical_error(os.str());
  };

  std::vector<double> alpha(static_cast<std::size_t>(T + 1) * K);
  std::vector<double> c(T + 1);
  double s = 0.0;
  for (int x = 0; x < K; ++x) s += alpha[x] = m.initial_state[x] * E(x, y[0]);
  if (!(s > kProbFloor)) throw impossible(0);
  for (int x = 0; x < K; ++x) alpha[x] /= s;
  c[0] = s;
  for (int t = 0; t < T; ++t) {
    const double* a = alpha.data() + static_cast<std::size_t>(t) * K;
    double* an = alpha.data() + static_cast<std::size_t>(t + 1) * K;
    for (int j = 0; j < K; ++j) an[j] = 0.0;
    for (int i = 0; i < K; ++i) {
      if (a[i] == 0.0) continue;
      for (int j = 0; j < K; ++j) an[j] += a[i] * P(u[t], i, j);
    }
    s = 0.0;
    for (int j = 0; j < K; ++j) s += an[j] *= E(j, y[t + 1]);
    if (!(s > kProbFloor)) throw impossible(t + 1);
    for (int j = 0; j < K; ++j) an[j] /= s;
    c[t + 1] = s;
  }

  SmoothResult r;
  r.T = T;
  r.K = K;
  r.marginals.resize(static_cast<std::size_t>(T + 1) * K);
  r.pairs.assign(static_cast<std::size_t>(T) * K * K, 0.0);
  std::vector<double> beta(K, 1.0);
  std::vector<double> eb(K);
  std::vector<double> nb(K);
  for (int x = 0; x < K; ++x) r.marginals[static_cast<std::size_t>(T) * K + x] = alpha[static_cast<std::size_t>(T) * K + x];
  for (int t = T - 1; t >= 0; --t) {
    const double* a = alpha.data() + static_cast<std::size_t>(t) * K;
    for (int j = 0; j < K; ++j) eb[j] = E(j, y[t + 1]) * beta[j] / c[t + 1];
    double* xi = r.pairs.data() + static_cast<std::size_t>(t) * K * K;
    for (int i = 0; i < K; ++i) {
      double b = 0.0;
      for (int j = 0; j < K; ++j) {
        const double pe = P(u[t], i, j) * eb[j];
        b += pe;
        xi[i * K + j] = a[i] * pe;
      }
      nb[i] = b;
    }
    beta.swap(nb);
    for (int x = 0; x < K; ++x) r.marginals[static_cast<std::size_t>(t) * K + x] = a[x] * beta[x];
  }
  double ll = 0.0;
  for (double ct : c) ll += std::log(ct);
  r.loglik = ll;
  return r;
}

double golden_section_max(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double x1 = b - g * (b - a);
  double x2 = a + g * (b - a);
  double f1 = f(x1);
  double f2 = f(x2);
  while (b - a > tol) {
    if (f1 >= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  double best = f1 >= f2 ? x1 : x2;
  double fbest = std::max(f1, f2);
  for (double e : {lo, hi}) {
    const double fe = f(e);
    if (fe > fbest) {
      best = e;
      fbest = fe;
    }
  }
  return best;
}

namespace {

// Expected complete-data counts from one smoothing pass.
struct Counts {
  std::vector<double> init;   // K
  std::vector<double> trans;  // l x K x K
  std::vector<double> emit;   // K x L
};

Counts expected_counts(const SmoothResult& s, const PomdpModel& m, std::span<const int> y, std::span<const int> u) {
  const int K = m.K;
  const int L = m.L;
  Counts c;
  c.init.assign(K, 0.0);
  c.trans.assign(static_cast<std::size_t>(m.num_controls()) * K * K, 0.0);
  c.emit.assign(static_cast<std::size_t>(K) * L, 0.0);
  for (int x = 0; x < K; ++x) c.init[x] = s.marginal(0, x);
  for (int t = 0; t <= s.T; ++t)
    for (int x = 0; x < K; ++x) c.emit[static_cast<std::size_t>(x) * L + y[t]] += s.marginal(t, x);
  for (int t = 0; t < s.T; ++t) {
    double* dst = c.trans.data() + static_cast<std::size_t>(u[t]) * K * K;
    const double* src = s.pairs.data() + static_cast<std::size_t>(t) * K * K;
    for (int i = 0; i < K * K; ++i) dst[i] += src[i];
  }
  return c;
}

double weighted_log(std::span<const double> w, std::span<const double> p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] <= 0.0) continue;
    if (p[i] <= 0.0) return -std::numeric_limits<double>::infinity();
    acc += w[i] * std::log(p[i]);
  }
  return acc;
}

double q_value(const Counts& c, const PomdpModel& m) {
  return weighted_log(c.init, m.initial_state) + weighted_log(c.trans, m.transition) +
         weighted_log(c.emit, m.emission);
}

}  // namespace

EmResult em_estimate(const ModelFamily& family, double theta0, std::span<const int> y, std::span<const int> u,
                     const EmOptions& opts) {
  const ThetaDomain& d = family.domain();
  if (!d.contains(theta0)) throw schema_error("em_estimate: starting theta outside the domain");
  if (opts.max_iter < 1) throw schema_error("em_estimate: max_iter must be at least 1");
  EmResult r;
  double theta = theta0;
  PomdpModel model = family.eval(theta);
  SmoothResult sm = smooth_pairs(model, y, u);
  double ll = sm.loglik;
  r.log.push_back({0, theta, ll});
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    const Counts c = expected_counts(sm, model, y, u);
    auto Q = [&](double th) { return q_value(c, family.eval(th)); };
    double next = golden_section_max(Q, d.lo, d.hi, opts.mstep_tol);
    const double q_next = Q(next);
    const double q_old = q_value(c, model);
    if (!std::isfinite(q_next) && !std::isfinite(q_old)) {
      std::ostringstream os;
      os << "em_estimate: expected complete-data loglikelihood is not finite at iteration " << iter;
      throw numerical_error(os.str());
    }
    if (!(q_next >= q_old)) next = theta;
    PomdpModel next_model = family.eval(next);
    SmoothResult next_sm = smooth_pairs(next_model, y, u);
    const double gain = next_sm.loglik - ll;
    theta = next;
    model = std::move(next_model);
    sm = std::move(next_sm);
    ll = sm.loglik;
    r.log.push_back({iter, theta, ll});
    r.iterations = iter;
    if (gain < opts.tol) {
      r.converged = true;
      break;
    }
  }
  r.theta = theta;
  r.loglik = ll;
  return r;
}

}  // namespace fidesign
