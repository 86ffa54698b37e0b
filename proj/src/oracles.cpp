#include "fidesign/oracles.hpp"

#include <cmath>
#include <sstream>

#include "fidesign/error.hpp"
#include "fidesign/inference.hpp"

namespace fidesign {

HistoryPolicy pofi_history_policy(const PofiPolicy& p) {
  return [&p](int t, std::span<const int> y, std::span<const int> u) {
    const int level = p.layout.level_for_time(t);
    return p.tables.at(t)[p.layout.encode(level, p.layout.window_at(y, u))];
  };
}

HistoryPolicy fixed_history_policy(int u) {
  return [u](int, std::span<const int>, std::span<const int>) { return u; };
}

namespace {

// Models at theta and at the two stencil points, with the filters that follow them.
struct Enumerator {
  PomdpModel mid, lo, hi;
  FdStencil st;
  std::vector<double> nu;
  int T = 0;
  int K = 0;
  int L = 0;
  int l = 0;
  std::vector<int> y;
  std::vector<int> u;

  Enumerator(const ModelFamily& family, double theta, int T_, const OracleOptions& opts, const char* who)
      : mid(family.eval(theta)), T(T_) {
    if (T < 1) throw schema_error(std::string(who) + ": horizon must be at least 1");
    if (!mid.mask.is_standard()) throw schema_error(std::string(who) + ": standard emission mask required");
    st = fd_stencil(family.domain(), theta, opts.fd_step);
    lo = family.eval(st.theta_lo);
    hi = family.eval(st.theta_hi);
    nu = opts.nu.empty() ? mid.initial_state : opts.nu;
    K = mid.K;
    L = mid.L;
    l = mid.num_controls();
    const double n = std::pow(static_cast<double>(L), T + 1) * std::pow(static_cast<double>(l), T);
    if (n > opts.budget) {
      std::ostringstream os;
      os << who << ": " << n << " histories (L^(T+1) * l^T) exceed the enumeration budget " << opts.budget;
      throw budget_error(os.str());
    }
  }

  struct Beliefs {
    std::vector<double> b[3];
  };

  // Expected remaining squared score from time t; with `best` the control is maximized.
  template <class Choose>
  double recurse(int t, const Beliefs& bel, Choose&& choose) {
    if (t == T) return 0.0;
    const PomdpModel* ms[3] = {&mid, &lo, &hi};
    auto value_of = [&](int w) {
      double acc = 0.0;
      for (int uu = 0; uu < l; ++uu) {
        const double q = mid.randomizer[static_cast<std::size_t>(w) * l + uu];
        if (q <= 0.0) continue;
        std::vector<double> pred[3];
        for (int k = 0; k < 3; ++k) pred[k] = predictive_from_belief(bel.b[k], uu, *ms[k]);
        u.push_back(uu);
        for (int yy = 0; yy < L; ++yy) {
          if (!(pred[0][yy] > 0.0)) continue;
          const double s = log_derivative(pred[1][yy], pred[2][yy], st);
          Beliefs next;
          for (int k = 0; k < 3; ++k) propagate(bel.b[k], uu, yy, *ms[k], next.b[k]);
          y.push_back(yy);
          acc += q * pred[0][yy] * (s * s + recurse(t + 1, next, choose));
          y.pop_back();
        }
        u.pop_back();
      }
      return acc;
    };
    return choose(t, value_of);
  }

  template <class Choose>
  double root(Choose&& choose) {
    const std::vector<double> law = initial_obs_law(mid, nu);
    const PomdpModel* ms[3] = {&mid, &lo, &hi};
    double total = 0.0;
    for (int y0 = 0; y0 < L; ++y0) {
      if (!(law[y0] > 0.0)) continue;
      Beliefs bel;
      for (int k = 0; k < 3; ++k) condition_initial(nu, y0, *ms[k], bel.b[k]);
      y.assign(1, y0);
      u.clear();
      total += law[y0] * recurse(0, bel, choose);
    }
    return total;
  }
};

}  // namespace

double exact_fi(const ModelFamily& family, double theta, const HistoryPolicy& policy, int T,
                const OracleOptions& opts) {
  Enumerator e(family, theta, T, opts, "exact_fi");
  return e.root([&](int t, auto&& value_of) {
    const int w = policy(t, e.y, e.u);
    if (w < 0 || w >= e.l) throw index_error("exact_fi: policy returned an invalid control");
    return value_of(w);
  });
}

int BruteForceResult::control(std::span<const int> y, std::span<const int> u) const {
  std::vector<int> key;
  for (std::size_t i = 0; i < y.size(); ++i) {
    key.push_back(y[i]);
    if (i < u.size()) key.push_back(u[i]);
  }
  const auto it = controls.find(key);
  if (it == controls.end()) throw index_error("brute_force_policy: history not reachable");
  return it->second;
}

HistoryPolicy BruteForceResult::as_policy() const {
  return [this](int, std::span<const int> y, std::span<const int> u) { return control(y, u); };
}

BruteForceResult brute_force_policy(const ModelFamily& family, double theta, int T, const OracleOptions& opts) {
  Enumerator e(family, theta, T, opts, "brute_force_policy");
  BruteForceResult r;
  std::vector<double> q(e.l);
  r.value = e.root([&](int, auto&& value_of) {
    std::vector<int> key;
    for (std::size_t i = 0; i < e.y.size(); ++i) {
      key.push_back(e.y[i]);
      if (i < e.u.size()) key.push_back(e.u[i]);
    }
    std::vector<double> vals(e.l);
    for (int w = 0; w < e.l; ++w) vals[w] = value_of(w);
    const int best = argmax_lowest(vals);
    r.controls[key] = best;
    return vals[best];
  });
  return r;
}

}  // namespace fidesign
