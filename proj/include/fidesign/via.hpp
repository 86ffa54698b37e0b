#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fidesign/fofi.hpp"
#include "fidesign/inference.hpp"
#include "fidesign/simulate.hpp"
#include "fidesign/window.hpp"

namespace fidesign {

struct ViaOptions {
  double lambda = 0.9;
  double epsilon = 1e-6;
  int max_sweeps = 100000;
  int m = 1;
  bool lead_control = false;
  std::vector<double> nu;
  double fd_step = 0.0;
  /// Grid points whose posterior weight is below this are left out of the mixture.
  double mix_cutoff = 1e-14;
};

struct ViaState {
  std::vector<double> v;
  double lambda = 0.9;
  double epsilon = 1e-6;
  int sweeps = 0;
  std::vector<double> deltas;  // sup-norm change of every sweep in the last solve
};

/// Full-level mixture with predictives held in single precision (sweeps are bandwidth bound).
struct CompactMix {
  std::vector<float> pred;
  std::vector<double> reward;
};

/// Per-theta window tables over a fixed grid, mixed on demand by a posterior.
class ViaProblem {
 public:
  ViaProblem(const ModelFamily& family, std::vector<double> grid, const ViaOptions& opts = {});

  const WindowLayout& layout() const { return layout_; }
  const std::vector<double>& grid() const { return grid_; }
  std::span<const double> randomizer() const { return randomizer_; }
  const std::vector<WindowTables>& per_theta() const { return tables_; }
  std::vector<PomdpModel> models() const;
  const ViaOptions& options() const { return opts_; }

  WindowTables mixed(const ThetaPosterior& post) const;
  void mix_compact(const ThetaPosterior& post, CompactMix& out) const;
  const SuccessorRows& full_rows() const { return full_rows_; }

 private:
  ModelFamily family_;
  std::vector<double> grid_;
  ViaOptions opts_;
  WindowLayout layout_;
  std::vector<WindowTables> tables_;
  std::vector<std::vector<float>> pred32_;
  std::vector<double> randomizer_;
  SuccessorRows full_rows_;
};

/// One Bellman backup on the full-level windows:
///   v'(z) = max_w sum_u q(u|w) [R(z,u) + lambda sum_y' P(y'|z,u) v(shift(z,u,y'))].
/// Returns max |v' - v|; the argmax goes to `policy` when given.
double via_sweep(ViaState& state, const WindowTables& mixed, std::span<const double> randomizer,
                 std::vector<int>* policy = nullptr);
double via_sweep(ViaState& state, const ThetaPosterior& post, const ViaProblem& problem,
                 std::vector<int>* policy = nullptr);

/// Sweeps until the change is at most epsilon. An empty state.v starts from zero.
/// Throws a numerical Error when max_sweeps is reached.
std::vector<int> via_solve(ViaState& state, const WindowTables& mixed, std::span<const double> randomizer,
                           int max_sweeps = 100000);
std::vector<int> via_solve(ViaState& state, const ThetaPosterior& post, const ViaProblem& problem);
std::vector<int> via_solve(ViaState& state, const CompactMix& mixed, const ViaProblem& problem);

/// Controls for a short window level, by finite-depth backups from the full-level values.
std::vector<int> via_short_policy(int level, const WindowTables& mixed, std::span<const double> randomizer,
                                  std::span<const double> v_full, double lambda);

struct ViaStepLog {
  int t = 0;
  int control = 0;
  int sweeps = 0;
  std::vector<double> posterior;
  std::vector<double> deltas;
};

/// Re-solves the discounted problem under the running posterior at every step, warm
/// started from the previous fixed point, and looks up the current window.
class ViaController : public Controller {
 public:
  ViaController(std::shared_ptr<const ViaProblem> problem, ThetaPosterior prior);
  std::string name() const override { return "via"; }
  void begin(int T, std::uint64_t seed) override;
  int choose(int t, std::span<const int> y, std::span<const int> u) override;
  void record(int t, int u_exec, int y_next) override;

  const std::vector<ViaStepLog>& log() const { return log_; }
  const ThetaPosterior& posterior() const { return filter_.posterior(); }
  bool keep_deltas = false;

 private:
  std::shared_ptr<const ViaProblem> problem_;
  ThetaPosterior prior_;
  MixtureFilter filter_;
  ViaState state_;
  CompactMix compact_;
  std::vector<ViaStepLog> log_;
  bool started_ = false;
};

/// State-indexed variant: value over latent states with posterior-mixed transition and
/// reward tables; the runtime control uses the posterior-mixed belief.
class ViaStateProblem {
 public:
  ViaStateProblem(const ModelFamily& family, std::vector<double> grid, const ViaOptions& opts = {});
  const std::vector<double>& grid() const { return grid_; }
  std::span<const double> randomizer() const { return randomizer_; }
  std::vector<PomdpModel> models() const;
  const ViaOptions& options() const { return opts_; }
  StateTables mixed(const ThetaPosterior& post) const;

 private:
  ModelFamily family_;
  std::vector<double> grid_;
  ViaOptions opts_;
  std::vector<StateTables> tables_;
  std::vector<double> randomizer_;
};

double via_sweep_states(ViaState& state, const StateTables& mixed, std::span<const double> randomizer,
                        std::vector<int>* policy = nullptr);
std::vector<int> via_solve_states(ViaState& state, const StateTables& mixed, std::span<const double> randomizer,
                                  int max_sweeps = 100000);

class ViaFofiController : public Controller {
 public:
  ViaFofiController(std::shared_ptr<const ViaStateProblem> problem, ThetaPosterior prior);
  std::string name() const override { return "via_fofi"; }
  void begin(int T, std::uint64_t seed) override;
  int choose(int t, std::span<const int> y, std::span<const int> u) override;
  void record(int t, int u_exec, int y_next) override;
  const std::vector<ViaStepLog>& log() const { return log_; }

 private:
  std::shared_ptr<const ViaStateProblem> problem_;
  ThetaPosterior prior_;
  MixtureFilter filter_;
  ViaState state_;
  std::vector<ViaStepLog> log_;
  bool started_ = false;
};

struct AdaptiveRun {
  Trajectory trajectory;
  std::vector<ViaStepLog> log;
  ThetaPosterior final_posterior;
};

/// Simulates the true-theta system under the VIA controller.
AdaptiveRun adaptive_run(const ModelFamily& family, std::shared_ptr<const ViaProblem> problem,
                         const ThetaPosterior& prior, int T, double true_theta, std::uint64_t seed,
                         bool keep_deltas = false);

}  // namespace fidesign
