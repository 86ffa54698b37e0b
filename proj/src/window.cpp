#include "fidesign/window.hpp"

#include <cmath>
#include <unordered_map>

#include "fidesign/error.hpp"

namespace fidesign {

namespace {

std::int64_t ipow(std::int64_t b, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

// Joint window probability below this is treated as impossible (matches window_belief).
constexpr double kImpossible = 1e-300;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

WindowLayout::WindowLayout(int L, int l, int m, bool lead_control) : L_(L), l_(l), m_(m), lead_(lead_control) {
  if (L < 1 || l < 1 || m < 0) throw index_error("WindowLayout: invalid dimensions");
}

std::int64_t WindowLayout::size(int level) const {
  return ipow(L_, num_obs(level)) * ipow(l_, num_ctrl(level));
}

std::int64_t WindowLayout::encode(int level, const HistoryWindow& w) const {
  const int no = num_obs(level);
  const int nc = num_ctrl(level);
  if (static_cast<int>(w.obs.size()) != no || static_cast<int>(w.ctrl.size()) != nc)
    throw index_error("window does not match level " + std::to_string(level));
  std::int64_t obs_part = 0;
  for (int i = no - 1; i >= 0; --i) {
    if (w.obs[i] < 0 || w.obs[i] >= L_) throw index_error("window observation out of range");
    obs_part = obs_part * L_ + w.obs[i];
  }
  std::int64_t ctrl_part = 0;
  for (int j = nc - 1; j >= 0; --j) {
    if (w.ctrl[j] < 0 || w.ctrl[j] >= l_) throw index_error("window control out of range");
    ctrl_part = ctrl_part * l_ + w.ctrl[j];
  }
  return obs_part * ipow(l_, nc) + ctrl_part;
}

HistoryWindow WindowLayout::decode(int level, std::int64_t idx) const {
  if (idx < 0 || idx >= size(level)) throw index_error("window index out of range");
  const int no = num_obs(level);
  const int nc = num_ctrl(level);
  const std::int64_t lc = ipow(l_, nc);
  std::int64_t obs_part = idx / lc;
  std::int64_t ctrl_part = idx % lc;
  HistoryWindow w;
  w.obs.resize(no);
  w.ctrl.resize(nc);
  for (int i = 0; i < no; ++i) {
    w.obs[i] = static_cast<int>(obs_part % L_);
    obs_part /= L_;
  }
  for (int j = 0; j < nc; ++j) {
    w.ctrl[j] = static_cast<int>(ctrl_part % l_);
    ctrl_part /= l_;
  }
  return w;
}

std::int64_t WindowLayout::shift(int level, std::int64_t idx, int u, int y) const {
  const int no = num_obs(level);
  const int nc = num_ctrl(level);
  const std::int64_t lc = ipow(l_, nc);
  const std::int64_t obs_part = idx / lc;
  const std::int64_t ctrl_part = idx % lc;
  const int next = level < full_level() ? level + 1 : level;
  const int no2 = num_obs(next);
  const int nc2 = num_ctrl(next);

  std::int64_t obs2;
  if (no2 == no + 1)
    obs2 = obs_part + y * ipow(L_, no);
  else
    obs2 = obs_part / L_ + y * ipow(L_, no - 1);

  std::int64_t ctrl2;
  if (nc2 == nc + 1)
    ctrl2 = ctrl_part + u * lc;
  else if (nc == 0)
    ctrl2 = 0;
  else
    ctrl2 = ctrl_part / l_ + u * ipow(l_, nc - 1);

  return obs2 * ipow(l_, nc2) + ctrl2;
}

HistoryWindow WindowLayout::window_at(std::span<const int> obs, std::span<const int> ctrl) const {
  if (obs.empty() || ctrl.size() + 1 != obs.size()) throw index_error("window_at: malformed history");
  const int t = static_cast<int>(obs.size()) - 1;
  const int level = level_for_time(t);
  const int no = num_obs(level);
  const int nc = num_ctrl(level);
  HistoryWindow w;
  w.obs.assign(obs.end() - no, obs.end());
  w.ctrl.assign(ctrl.end() - nc, ctrl.end());
  return w;
}

ShiftMap make_shift_map(const WindowLayout& layout, int level) {
  ShiftMap s;
  const std::int64_t n = layout.size(level);
  s.base.resize(n);
  for (std::int64_t z = 0; z < n; ++z) s.base[z] = layout.shift(level, z, 0, 0);
  s.stride_u = layout.l() > 1 ? layout.shift(level, 0, 1, 0) - s.base[0] : 0;
  s.stride_y = layout.L() > 1 ? layout.shift(level, 0, 0, 1) - s.base[0] : 0;
  return s;
}

SuccessorRows make_successor_rows(const WindowLayout& layout, int level) {
  const ShiftMap sm = make_shift_map(layout, level);
  const int l = layout.l();
  SuccessorRows out;
  out.stride_y = sm.stride_y;
  out.L = layout.L();
  const std::int64_t n = layout.size(level);
  out.row.resize(static_cast<std::size_t>(n) * l);
  std::unordered_map<std::int64_t, std::int32_t> seen;
  for (std::int64_t z = 0; z < n; ++z)
    for (int u = 0; u < l; ++u) {
      const std::int64_t key = sm.base[z] + u * sm.stride_u;
      auto [it, fresh] = seen.try_emplace(key, static_cast<std::int32_t>(out.start.size()));
      if (fresh) out.start.push_back(key);
      out.row[static_cast<std::size_t>(z) * l + u] = it->second;
    }
  return out;
}

void SuccessorRows::gather(std::span<const double> v, std::vector<double>& out) const {
  out.resize(start.size() * L);
  for (std::size_t r = 0; r < start.size(); ++r) {
    const double* src = v.data() + start[r];
    double* dst = out.data() + r * L;
    for (int y = 0; y < L; ++y) dst[y] = src[y * stride_y];
  }
}

void batch_window_beliefs(const PomdpModel& m, const WindowLayout& layout, int level, std::span<const double> nu,
                          RowMatrix& beliefs, std::vector<std::uint8_t>& possible) {
  if (!m.mask.is_standard()) throw schema_error("batch_window_beliefs: model needs a standard emission mask");
  const int K = m.K;
  const int L = m.L;
  const int l = m.num_controls();
  const int no = layout.num_obs(level);
  const int nc = layout.num_ctrl(level);
  const bool lead = nc == no;

  std::vector<std::int64_t> obs_weight(no);
  for (int i = 0; i < no; ++i) obs_weight[i] = ipow(L, i) * ipow(l, nc);

  std::vector<Eigen::MatrixXd> P(l);
  for (int u = 0; u < l; ++u) P[u] = transition_matrix(m, u);
  Eigen::MatrixXd E(K, L);
  for (int x = 0; x < K; ++x)
    for (int y = 0; y < L; ++y) E(x, y) = m.emit(x, y);
  const Eigen::Map<const Eigen::RowVectorXd> nu_row(nu.data(), K);

  RowMatrix B;
  std::vector<std::int64_t> enc;
  std::vector<double> joint;
  int ctrl_digit = 0;

  auto emit_row = [&](Eigen::Ref<Eigen::RowVectorXd> row, int y, double prev_joint, double& out_joint) {
    row.array() *= E.col(y).transpose().array();
    const double s = row.sum();
    out_joint = prev_joint * s;
    if (out_joint > kImpossible && s > 0.0)
      row /= s;
    else {
      row.setZero();
      out_joint = 0.0;
    }
  };

  if (lead) {
    B.resize(static_cast<Eigen::Index>(l) * L, K);
    enc.resize(static_cast<std::size_t>(l) * L);
    joint.resize(enc.size());
    for (int u = 0; u < l; ++u) {
      const std::vector<double> start = lead_prior(nu, u, m);
      const Eigen::Map<const Eigen::RowVectorXd> pushed(start.data(), K);
      for (int y = 0; y < L; ++y) {
        const Eigen::Index r = static_cast<Eigen::Index>(u) * L + y;
        B.row(r) = pushed;
        emit_row(B.row(r), y, 1.0, joint[r]);
        enc[r] = u + y * obs_weight[0];
      }
    }
    ctrl_digit = 1;
  } else {
    B.resize(L, K);
    enc.resize(L);
    joint.resize(L);
    for (int y = 0; y < L; ++y) {
      B.row(y) = nu_row;
      emit_row(B.row(y), y, 1.0, joint[y]);
      enc[y] = y * obs_weight[0];
    }
  }

  for (int i = 1; i < no; ++i, ++ctrl_digit) {
    const Eigen::Index rows = B.rows();
    RowMatrix next(rows * l * L, K);
    std::vector<std::int64_t> enc2(static_cast<std::size_t>(next.rows()));
    std::vector<double> joint2(enc2.size());
    const std::int64_t cw = ipow(l, ctrl_digit);
    for (int u = 0; u < l; ++u) {
      const RowMatrix BP = B * P[u];
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (int y = 0; y < L; ++y) {
          const Eigen::Index r2 = (r * l + u) * L + y;
          next.row(r2) = BP.row(r);
          if (joint[r] > 0.0)
            emit_row(next.row(r2), y, joint[r], joint2[r2]);
          else {
            next.row(r2).setZero();
            joint2[r2] = 0.0;
          }
          enc2[r2] = enc[r] + u * cw + y * obs_weight[i];
        }
      }
    }
    B.swap(next);
    enc.swap(enc2);
    joint.swap(joint2);
  }

  beliefs.resize(B.rows(), K);
  possible.assign(static_cast<std::size_t>(B.rows()), 0);
  for (Eigen::Index r = 0; r < B.rows(); ++r) {
    beliefs.row(enc[r]) = B.row(r);
    possible[enc[r]] = joint[r] > 0.0 ? 1 : 0;
  }
}

std::vector<double> batch_window_predictive(const PomdpModel& m, const WindowLayout& layout, int level,
                                            std::span<const double> nu, std::vector<std::uint8_t>& possible) {
  RowMatrix beliefs;
  batch_window_beliefs(m, layout, level, nu, beliefs, possible);
  const int K = m.K;
  const int L = m.L;
  const int l = m.num_controls();
  Eigen::MatrixXd E(K, L);
  for (int x = 0; x < K; ++x)
    for (int y = 0; y < L; ++y) E(x, y) = m.emit(x, y);
  Eigen::MatrixXd Mcat(K, static_cast<Eigen::Index>(l) * L);
  for (int u = 0; u < l; ++u) Mcat.middleCols(static_cast<Eigen::Index>(u) * L, L) = transition_matrix(m, u) * E;
  RowMatrix pred = beliefs * Mcat;
  return std::vector<double>(pred.data(), pred.data() + pred.size());
}

WindowTables build_window_tables(const ModelFamily& family, double theta, const WindowLayout& layout,
                                 std::span<const double> nu_in, double fd_step) {
  const FdStencil st = fd_stencil(family.domain(), theta, fd_step);
  const PomdpModel mid = family.eval(theta);
  const PomdpModel lo_model = st.theta_lo == theta ? mid : family.eval(st.theta_lo);
  const PomdpModel hi_model = st.theta_hi == theta ? mid : family.eval(st.theta_hi);
  const std::vector<double> nu = nu_in.empty() ? mid.initial_state : std::vector<double>(nu_in.begin(), nu_in.end());

  WindowTables out;
  out.layout = layout;
  out.l = mid.num_controls();
  out.L = mid.L;
  if (layout.L() != out.L || layout.l() != out.l) throw index_error("build_window_tables: layout does not match model");
  out.y0_law = initial_obs_law(mid, nu);

  for (int level = 0; level <= layout.full_level(); ++level) {
    LevelTable tab;
    tab.size = layout.size(level);
    std::vector<std::uint8_t> poss_lo;
    std::vector<std::uint8_t> poss_hi;
    tab.pred = batch_window_predictive(mid, layout, level, nu, tab.possible);
    const std::vector<double> p_lo =
        st.theta_lo == theta ? tab.pred : batch_window_predictive(lo_model, layout, level, nu, poss_lo);
    const std::vector<double> p_hi =
        st.theta_hi == theta ? tab.pred : batch_window_predictive(hi_model, layout, level, nu, poss_hi);
    const std::int64_t cells = tab.size * out.l;
    tab.reward.assign(static_cast<std::size_t>(cells), 0.0);
    for (std::int64_t c = 0; c < cells; ++c) {
      double acc = 0.0;
      const std::size_t off = static_cast<std::size_t>(c) * out.L;
      for (int y = 0; y < out.L; ++y) {
        const double p = tab.pred[off + y];
        if (p == 0.0) continue;
        const double s = log_derivative(p_lo[off + y], p_hi[off + y], st);
        acc += p * s * s;
      }
      tab.reward[c] = acc;
    }
    out.levels.push_back(std::move(tab));
  }
  return out;
}

void accumulate_tables(WindowTables& dst, const WindowTables& src, double weight) {
  if (dst.levels.empty()) {
    dst.layout = src.layout;
    dst.l = src.l;
    dst.L = src.L;
    dst.y0_law.assign(src.y0_law.size(), 0.0);
    dst.levels.resize(src.levels.size());
    for (std::size_t k = 0; k < src.levels.size(); ++k) {
      dst.levels[k].size = src.levels[k].size;
      dst.levels[k].pred.assign(src.levels[k].pred.size(), 0.0);
      dst.levels[k].reward.assign(src.levels[k].reward.size(), 0.0);
      dst.levels[k].possible.assign(src.levels[k].possible.size(), 0);
    }
  }
  if (weight <= 0.0) return;
  for (std::size_t i = 0; i < src.y0_law.size(); ++i) dst.y0_law[i] += weight * src.y0_law[i];
  for (std::size_t k = 0; k < src.levels.size(); ++k) {
    auto& d = dst.levels[k];
    const auto& s = src.levels[k];
    for (std::size_t i = 0; i < s.pred.size(); ++i) d.pred[i] += weight * s.pred[i];
    for (std::size_t i = 0; i < s.reward.size(); ++i) d.reward[i] += weight * s.reward[i];
    for (std::size_t i = 0; i < s.possible.size(); ++i) d.possible[i] |= s.possible[i];
  }
}

namespace {

void blocked_mix(std::vector<double>& dst, const std::vector<const std::vector<double>*>& src,
                 const std::vector<double>& w) {
  constexpr std::size_t kBlock = 2048;
  const std::size_t n = dst.size();
  for (std::size_t lo = 0; lo < n; lo += kBlock) {
    const std::size_t hi = std::min(n, lo + kBlock);
    for (std::size_t k = 0; k < src.size(); ++k) {
      const double* s = src[k]->data();
      const double wk = w[k];
      for (std::size_t i = lo; i < hi; ++i) dst[i] += wk * s[i];
    }
  }
}

}  // namespace

WindowTables mix_tables(std::span<const WindowTables> per_theta, std::span<const double> weights) {
  if (per_theta.empty() || per_theta.size() != weights.size()) throw index_error("mix_tables: length mismatch");
  WindowTables out;
  accumulate_tables(out, per_theta[0], 0.0);
  std::vector<std::size_t> active;
  std::vector<double> w;
  for (std::size_t i = 0; i < per_theta.size(); ++i)
    if (weights[i] > 0.0) {
      active.push_back(i);
      w.push_back(weights[i]);
    }
  for (std::size_t i = 0; i < out.y0_law.size(); ++i)
    for (std::size_t k = 0; k < active.size(); ++k) out.y0_law[i] += w[k] * per_theta[active[k]].y0_law[i];
  for (std::size_t lev = 0; lev < out.levels.size(); ++lev) {
    std::vector<const std::vector<double>*> pred;
    std::vector<const std::vector<double>*> reward;
    for (std::size_t k : active) {
      pred.push_back(&per_theta[k].levels[lev].pred);
      reward.push_back(&per_theta[k].levels[lev].reward);
      const auto& poss = per_theta[k].levels[lev].possible;
      for (std::size_t z = 0; z < poss.size(); ++z) out.levels[lev].possible[z] |= poss[z];
    }
    blocked_mix(out.levels[lev].pred, pred, w);
    blocked_mix(out.levels[lev].reward, reward, w);
  }
  return out;
}

double pofi_cell_count(const WindowLayout& layout, int T) {
  const int full = layout.full_level();
  return std::pow(static_cast<double>(layout.L()), layout.num_obs(full)) *
         std::pow(static_cast<double>(layout.l()), layout.num_ctrl(full) + 1) * T;
}

}  // namespace fidesign
