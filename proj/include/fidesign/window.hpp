#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fidesign/inference.hpp"
#include "fidesign/model.hpp"

namespace fidesign {

/// Encoding of history windows for a lag m.
///
/// At time t the window sits at level min(t, full_level()); a level holds
/// num_obs(level) observations and num_ctrl(level) controls. With lead_control the
/// full window also keeps the control executed just before its oldest observation.
///
/// Index (bit-exact, used in policy files):
///   idx = obsPart * l^nc + ctrlPart
///   obsPart  = sum_i y_i * L^i   (y_0 the oldest observation)
///   ctrlPart = sum_j u_j * l^j   (u_0 the oldest control)
class WindowLayout {
 public:
  WindowLayout() = default;
  WindowLayout(int L, int l, int m, bool lead_control = false);

  int L() const { return L_; }
  int l() const { return l_; }
  int lag() const { return m_; }
  bool lead_control() const { return lead_; }

  int full_level() const { return m_ + (lead_ ? 1 : 0); }
  int level_for_time(int t) const { return t < full_level() ? t : full_level(); }
  int num_obs(int level) const { return (level < m_ ? level : m_) + 1; }
  int num_ctrl(int level) const { return level; }
  std::int64_t size(int level) const;

  std::int64_t encode(int level, const HistoryWindow& w) const;
  HistoryWindow decode(int level, std::int64_t idx) const;

  /// Window index after executing u and observing y, at level min(level + 1, full).
  std::int64_t shift(int level, std::int64_t idx, int u, int y) const;

  /// Window ending at time t = obs.size() - 1 of a full history (ctrl.size() == t).
  HistoryWindow window_at(std::span<const int> obs, std::span<const int> ctrl) const;

 private:
  int L_ = 0;
  int l_ = 0;
  int m_ = 0;
  bool lead_ = false;
};

/// shift(level, z, u, y) == base[z] + u * stride_u + y * stride_y.
struct ShiftMap {
  std::vector<std::int64_t> base;
  std::int64_t stride_u = 0;
  std::int64_t stride_y = 0;
};

ShiftMap make_shift_map(const WindowLayout& layout, int level);

/// Successor rows of a level: cell (z, u) continues into row[z * l + u], whose L
/// successor windows (one per y') are start[row] + y' * stride_y.
struct SuccessorRows {
  std::vector<std::int32_t> row;
  std::vector<std::int64_t> start;
  std::int64_t stride_y = 0;
  int L = 0;

  /// Copies v into row-contiguous order: out[r * L + y] = v[start[r] + y * stride_y].
  void gather(std::span<const double> v, std::vector<double>& out) const;
};

SuccessorRows make_successor_rows(const WindowLayout& layout, int level);

/// Dot product in a fixed summation order (four interleaved partial sums).
inline double dot_fixed(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

/// Predictive and expected squared-score tables for every window of one level.
struct LevelTable {
  std::int64_t size = 0;
  std::vector<double> pred;          // [z][u][y']  p(y' | z, u, theta)
  std::vector<double> reward;        // [z][u]      sum_y' C(z,u,y') p(y' | z, u, theta)
  std::vector<std::uint8_t> possible;  // [z]
};

/// One LevelTable per level 0..full_level().
struct WindowTables {
  WindowLayout layout;
  int l = 0;
  int L = 0;
  std::vector<LevelTable> levels;
  std::vector<double> y0_law;  // p(y_0) under the window-start prior
};

/// Window beliefs for every window of a level, rows in encoded order.
/// Rows of impossible windows are zero and flagged in `possible`.
void batch_window_beliefs(const PomdpModel& model, const WindowLayout& layout, int level,
                          std::span<const double> nu, Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                          Eigen::RowMajor>& beliefs, std::vector<std::uint8_t>& possible);

/// Predictive tables p(y' | z, u) for one model.
std::vector<double> batch_window_predictive(const PomdpModel& model, const WindowLayout& layout, int level,
                                            std::span<const double> nu, std::vector<std::uint8_t>& possible);

/// Tables at one theta. Squared scores use the finite-difference stencil at theta.
WindowTables build_window_tables(const ModelFamily& family, double theta, const WindowLayout& layout,
                                 std::span<const double> nu, double fd_step = 0.0);

/// Accumulates weight * src into dst (dst may be empty: it is then initialized).
/// A window is possible in the mixture when it is possible under any positive-weight term.
void accumulate_tables(WindowTables& dst, const WindowTables& src, double weight);

/// Posterior-weighted mixture of per-theta tables.
WindowTables mix_tables(std::span<const WindowTables> per_theta, std::span<const double> weights);

/// Number of cells L^(n_obs) * l^(n_ctrl+1) * T guarded by the POFI budget.
double pofi_cell_count(const WindowLayout& layout, int T);

}  // namespace fidesign
