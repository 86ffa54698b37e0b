#include "fidesign/via.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fidesign/error.hpp"
#include "fidesign/pofi.hpp"

namespace fidesign {

namespace {

bool is_identity(std::span<const double> r, int l) {
  for (int w = 0; w < l; ++w)
    for (int u = 0; u < l; ++u)
      if (r[w * l + u] != (w == u ? 1.0 : 0.0)) return false;
  return true;
}

inline double dot_mixed(const float* a, const double* b, int n) {
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

inline double dot_any(const double* a, const double* b, int n) { return dot_fixed(a, b, n); }
inline double dot_any(const float* a, const double* b, int n) { return dot_mixed(a, b, n); }

// One backup of a level against `next`, writing values and argmax.
template <class P>
void backup_rows(std::int64_t size, const P* pred, const double* reward, const SuccessorRows& sr, int l, int L,
                 std::span<const double> randomizer, double lambda, std::span<const double> next,
                 std::vector<double>& out, std::vector<int>* policy) {
  const bool identity = is_identity(randomizer, l);
  std::vector<double> q(l);
  std::vector<double> qw(l);
  std::vector<double> g;
  sr.gather(next, g);
  out.resize(static_cast<std::size_t>(size));
  if (policy) policy->resize(static_cast<std::size_t>(size));
  for (std::int64_t z = 0; z < size; ++z) {
    for (int u = 0; u < l; ++u) {
      const std::size_t cell = static_cast<std::size_t>(z) * l + u;
      const double acc = dot_any(pred + cell * L, g.data() + static_cast<std::size_t>(sr.row[cell]) * L, L);
      q[u] = reward[cell] + lambda * acc;
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
    out[z] = qw[best];
    if (policy) (*policy)[z] = best;
  }
}

void backup_level(const LevelTable& tab, const SuccessorRows& sr, int l, int L, std::span<const double> randomizer,
                  double lambda, std::span<const double> next, std::vector<double>& out, std::vector<int>* policy) {
  backup_rows(tab.size, tab.pred.data(), tab.reward.data(), sr, l, L, randomizer, lambda, next, out, policy);
}

template <class P>
double sweep_rows(ViaState& s, std::int64_t size, const P* pred, const double* reward, const SuccessorRows& sm, int l,
                  int L, std::span<const double> randomizer, std::vector<int>* policy) {
  if (s.v.size() != static_cast<std::size_t>(size)) s.v.assign(static_cast<std::size_t>(size), 0.0);
  std::vector<double> out;
  backup_rows(size, pred, reward, sm, l, L, randomizer, s.lambda, s.v, out, policy);
  double delta = 0.0;
  for (std::size_t z = 0; z < out.size(); ++z) delta = std::max(delta, std::abs(out[z] - s.v[z]));
  s.v.swap(out);
  return delta;
}

double sweep_with(ViaState& s, const WindowTables& mixed, const SuccessorRows& sm, std::span<const double> randomizer,
                  std::vector<int>* policy) {
  const LevelTable& tab = mixed.levels[mixed.layout.full_level()];
  return sweep_rows(s, tab.size, tab.pred.data(), tab.reward.data(), sm, mixed.l, mixed.L, randomizer, policy);
}

template <class Sweep>
std::vector<int> solve_loop(ViaState& s, int max_sweeps, Sweep&& sweep) {
  std::vector<int> policy;
  s.deltas.clear();
  s.sweeps = 0;
  double delta = 0.0;
  do {
    if (s.sweeps >= max_sweeps) {
      std::ostringstream os;
      os << "via: no convergence after " << max_sweeps << " sweeps (last delta " << delta << ")";
      throw numerical_error(os.str());
    }
    delta = sweep(&policy);
    s.deltas.push_back(delta);
    ++s.sweeps;
  } while (delta > s.epsilon);
  return policy;
}

void check_state(const ViaState& s) {
  if (!(s.lambda >= 0.0 && s.lambda < 1.0)) throw schema_error("via: discount lambda must lie in [0, 1)");
  if (!(s.epsilon > 0.0)) throw schema_error("via: epsilon must be positive");
}

}  // namespace

ViaProblem::ViaProblem(const ModelFamily& family, std::vector<double> grid, const ViaOptions& opts)
    : family_(family), grid_(std::move(grid)), opts_(opts) {
  if (grid_.empty()) throw schema_error("via: empty theta grid");
  layout_ = WindowLayout(family.L(), family.num_controls(), opts.m, opts.lead_control);
  tables_.reserve(grid_.size());
  const int full = layout_.full_level();
  for (double th : grid_) {
    tables_.push_back(build_window_tables(family, th, layout_, opts.nu, opts.fd_step));
    const auto& pred = tables_.back().levels[full].pred;
    pred32_.emplace_back(pred.begin(), pred.end());
  }
  randomizer_ = family.eval(grid_[0]).randomizer;
  full_rows_ = make_successor_rows(layout_, full);
}

void ViaProblem::mix_compact(const ThetaPosterior& post, CompactMix& out) const {
  if (post.size() != static_cast<int>(grid_.size())) throw index_error("via: posterior does not match grid");
  const int full = layout_.full_level();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < grid_.size(); ++i)
    if (post.weights[i] >= opts_.mix_cutoff && post.weights[i] > 0.0) active.push_back(i);
  const std::size_t n = pred32_[0].size();
  out.pred.resize(n);
  constexpr std::size_t kBlock = 2048;
  std::vector<double> acc(kBlock);
  for (std::size_t lo = 0; lo < n; lo += kBlock) {
    const std::size_t hi = std::min(n, lo + kBlock);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k : active) {
      const double w = post.weights[k];
      const float* src = pred32_[k].data();
      for (std::size_t i = lo; i < hi; ++i) acc[i - lo] += w * src[i];
    }
    for (std::size_t i = lo; i < hi; ++i) out.pred[i] = static_cast<float>(acc[i - lo]);
  }
  const std::size_t nr = tables_[0].levels[full].reward.size();
  out.reward.assign(nr, 0.0);
  for (std::size_t k : active) {
    const double w = post.weights[k];
    const auto& r = tables_[k].levels[full].reward;
    for (std::size_t i = 0; i < nr; ++i) out.reward[i] += w * r[i];
  }
}

std::vector<PomdpModel> ViaProblem::models() const {
  std::vector<PomdpModel> out;
  for (double th : grid_) out.push_back(family_.eval(th));
  return out;
}

WindowTables ViaProblem::mixed(const ThetaPosterior& post) const {
  if (post.size() != static_cast<int>(grid_.size())) throw index_error("via: posterior does not match grid");
  std::vector<double> w(post.weights);
  for (double& x : w)
    if (x < opts_.mix_cutoff) x = 0.0;
  return mix_tables(tables_, w);
}

double via_sweep(ViaState& s, const WindowTables& mixed, std::span<const double> randomizer,
                 std::vector<int>* policy) {
  check_state(s);
  return sweep_with(s, mixed, make_successor_rows(mixed.layout, mixed.layout.full_level()), randomizer, policy);
}

double via_sweep(ViaState& s, const ThetaPosterior& post, const ViaProblem& problem, std::vector<int>* policy) {
  return via_sweep(s, problem.mixed(post), problem.randomizer(), policy);
}

std::vector<int> via_solve(ViaState& s, const WindowTables& mixed, std::span<const double> randomizer,
                           int max_sweeps) {
  check_state(s);
  const SuccessorRows sm = make_successor_rows(mixed.layout, mixed.layout.full_level());
  return solve_loop(s, max_sweeps, [&](std::vector<int>* p) { return sweep_with(s, mixed, sm, randomizer, p); });
}

std::vector<int> via_solve(ViaState& s, const CompactMix& mixed, const ViaProblem& problem) {
  check_state(s);
  const SuccessorRows& sm = problem.full_rows();
  const WindowLayout& lay = problem.layout();
  const std::int64_t size = lay.size(lay.full_level());
  return solve_loop(s, problem.options().max_sweeps, [&](std::vector<int>* p) {
    return sweep_rows(s, size, mixed.pred.data(), mixed.reward.data(), sm, lay.l(), lay.L(), problem.randomizer(), p);
  });
}

std::vector<int> via_solve(ViaState& s, const ThetaPosterior& post, const ViaProblem& problem) {
  return via_solve(s, problem.mixed(post), problem.randomizer(), problem.options().max_sweeps);
}

std::vector<int> via_short_policy(int level, const WindowTables& mixed, std::span<const double> randomizer,
                                  std::span<const double> v_full, double lambda) {
  const int full = mixed.layout.full_level();
  if (level < 0 || level > full) throw index_error("via_short_policy: level out of range");
  std::vector<double> next(v_full.begin(), v_full.end());
  std::vector<double> cur;
  std::vector<int> policy;
  if (level == full) {
    ViaState s;
    s.v = next;
    s.lambda = lambda;
    sweep_with(s, mixed, make_successor_rows(mixed.layout, full), randomizer, &policy);
    return policy;
  }
  for (int k = full - 1; k >= level; --k) {
    backup_level(mixed.levels[k], make_successor_rows(mixed.layout, k), mixed.l, mixed.L, randomizer, lambda, next, cur,
                 k == level ? &policy : nullptr);
    next.swap(cur);
  }
  return policy;
}

ViaController::ViaController(std::shared_ptr<const ViaProblem> problem, ThetaPosterior prior)
    : problem_(std::move(problem)), prior_(std::move(prior)) {
  prior_.validate();
  filter_ = MixtureFilter(problem_->models(), prior_);
}

void ViaController::begin(int, std::uint64_t) {
  filter_ = MixtureFilter(problem_->models(), prior_);
  state_ = ViaState{};
  state_.lambda = problem_->options().lambda;
  state_.epsilon = problem_->options().epsilon;
  log_.clear();
  started_ = false;
}

int ViaController::choose(int t, std::span<const int> y, std::span<const int> u) {
  if (!started_) {
    filter_.start(y[0]);
    started_ = true;
  }
  problem_->mix_compact(filter_.posterior(), compact_);
  const std::vector<int> full_policy = via_solve(state_, compact_, *problem_);
  const WindowLayout& layout = problem_->layout();
  const int level = layout.level_for_time(t);
  const std::int64_t z = layout.encode(level, layout.window_at(y, u));
  int control;
  if (level == layout.full_level())
    control = full_policy[z];
  else
    control = via_short_policy(level, problem_->mixed(filter_.posterior()), problem_->randomizer(), state_.v,
                               state_.lambda)[z];
  ViaStepLog entry;
  entry.t = t;
  entry.control = control;
  entry.sweeps = state_.sweeps;
  entry.posterior = filter_.posterior().weights;
  if (keep_deltas) entry.deltas = state_.deltas;
  log_.push_back(std::move(entry));
  return control;
}

void ViaController::record(int, int u_exec, int y_next) { filter_.step(u_exec, y_next); }

ViaStateProblem::ViaStateProblem(const ModelFamily& family, std::vector<double> grid, const ViaOptions& opts)
    : family_(family), grid_(std::move(grid)), opts_(opts) {
  if (grid_.empty()) throw schema_error("via: empty theta grid");
  for (double th : grid_) tables_.push_back(build_state_tables(family, th, opts.fd_step));
  randomizer_ = family.eval(grid_[0]).randomizer;
}

std::vector<PomdpModel> ViaStateProblem::models() const {
  std::vector<PomdpModel> out;
  for (double th : grid_) out.push_back(family_.eval(th));
  return out;
}

StateTables ViaStateProblem::mixed(const ThetaPosterior& post) const {
  if (post.size() != static_cast<int>(grid_.size())) throw index_error("via: posterior does not match grid");
  StateTables out;
  for (std::size_t i = 0; i < tables_.size(); ++i)
    accumulate_state_tables(out, tables_[i], post.weights[i] < opts_.mix_cutoff ? 0.0 : post.weights[i]);
  return out;
}

double via_sweep_states(ViaState& s, const StateTables& tab, std::span<const double> randomizer,
                        std::vector<int>* policy) {
  check_state(s);
  const int K = tab.K;
  const int l = tab.l;
  if (s.v.size() != static_cast<std::size_t>(K)) s.v.assign(K, 0.0);
  std::vector<double> out(K);
  std::vector<double> q(l);
  std::vector<double> qw(l);
  if (policy) policy->resize(K);
  double delta = 0.0;
  for (int x = 0; x < K; ++x) {
    for (int u = 0; u < l; ++u) {
      const double* p = tab.trans.data() + (static_cast<std::size_t>(u) * K + x) * K;
      double acc = 0.0;
      for (int x2 = 0; x2 < K; ++x2) acc += p[x2] * s.v[x2];
      q[u] = tab.reward[static_cast<std::size_t>(x) * l + u] + s.lambda * acc;
    }
    for (int w = 0; w < l; ++w) {
      double acc = 0.0;
      for (int u = 0; u < l; ++u) acc += randomizer[w * l + u] * q[u];
      qw[w] = acc;
    }
    const int best = argmax_lowest(qw);
    out[x] = qw[best];
    if (policy) (*policy)[x] = best;
    delta = std::max(delta, std::abs(out[x] - s.v[x]));
  }
  s.v.swap(out);
  return delta;
}

std::vector<int> via_solve_states(ViaState& s, const StateTables& tab, std::span<const double> randomizer,
                                  int max_sweeps) {
  std::vector<int> policy;
  s.deltas.clear();
  s.sweeps = 0;
  double delta = 0.0;
  do {
    if (s.sweeps >= max_sweeps) {
      std::ostringstream os;
      os << "via: no convergence after " << max_sweeps << " sweeps (last delta " << delta << ")";
      throw numerical_error(os.str());
    }
    delta = via_sweep_states(s, tab, randomizer, &policy);
    s.deltas.push_back(delta);
    ++s.sweeps;
  } while (delta > s.epsilon);
  return policy;
}

ViaFofiController::ViaFofiController(std::shared_ptr<const ViaStateProblem> problem, ThetaPosterior prior)
    : problem_(std::move(problem)), prior_(std::move(prior)) {
  prior_.validate();
  filter_ = MixtureFilter(problem_->models(), prior_);
}

void ViaFofiController::begin(int, std::uint64_t) {
  filter_ = MixtureFilter(problem_->models(), prior_);
  state_ = ViaState{};
  state_.lambda = problem_->options().lambda;
  state_.epsilon = problem_->options().epsilon;
  log_.clear();
  started_ = false;
}

int ViaFofiController::choose(int t, std::span<const int> y, std::span<const int>) {
  if (!started_) {
    filter_.start(y[0]);
    started_ = true;
  }
  const std::vector<int> policy =
      via_solve_states(state_, problem_->mixed(filter_.posterior()), problem_->randomizer(),
                       problem_->options().max_sweeps);
  const std::vector<double> b = filter_.mixed_belief();
  int best = 0;
  for (std::size_t x = 1; x < b.size(); ++x)
    if (b[x] > b[best]) best = static_cast<int>(x);
  ViaStepLog entry;
  entry.t = t;
  entry.control = policy[best];
  entry.sweeps = state_.sweeps;
  entry.posterior = filter_.posterior().weights;
  log_.push_back(std::move(entry));
  return policy[best];
}

void ViaFofiController::record(int, int u_exec, int y_next) { filter_.step(u_exec, y_next); }

AdaptiveRun adaptive_run(const ModelFamily& family, std::shared_ptr<const ViaProblem> problem,
                         const ThetaPosterior& prior, int T, double true_theta, std::uint64_t seed, bool keep_deltas) {
  ViaController c(std::move(problem), prior);
  c.keep_deltas = keep_deltas;
  AdaptiveRun run;
  run.trajectory = simulate(family, true_theta, c, T, seed);
  run.log = c.log();
  run.final_posterior = c.posterior();
  return run;
}

}  // namespace fidesign
