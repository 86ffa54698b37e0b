#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fidesign/fofi.hpp"
#include "fidesign/inference.hpp"
#include "fidesign/model.hpp"
#include "fidesign/pofi.hpp"
#include "fidesign/rng.hpp"

namespace fidesign {

struct Trajectory {
  std::vector<int> x;         // T+1 latent states
  std::vector<int> y;         // T+1 observations
  std::vector<int> u_chosen;  // T chosen controls
  std::vector<int> u_exec;    // T executed controls (after the randomizer)
  std::uint64_t seed = 0;
};

/// Decides the chosen control from the observed history only.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  /// Called once before step 0 with the horizon and the controller's private seed.
  virtual void begin(int /*T*/, std::uint64_t /*seed*/) {}
  /// y holds y_0..y_t, u holds the executed u_0..u_{t-1}.
  virtual int choose(int t, std::span<const int> y, std::span<const int> u) = 0;
  /// Executed control u_t and the new observation y_{t+1}.
  virtual void record(int /*t*/, int /*u_exec*/, int /*y_next*/) {}
};

/// Draws x_0 ~ initial_state, y_t ~ emission(x_t), executed u_t ~ randomizer row of the
/// chosen control, x_{t+1} ~ transition. Standard-mask models only.
Trajectory simulate(const PomdpModel& truth, Controller& controller, int T, std::uint64_t seed);
Trajectory simulate(const ModelFamily& family, double true_theta, Controller& controller, int T,
                    std::uint64_t seed);

class FixedController : public Controller {
 public:
  explicit FixedController(int u) : u_(u) {}
  std::string name() const override { return "fixed"; }
  int choose(int, std::span<const int>, std::span<const int>) override { return u_; }

 private:
  int u_;
};

class RandomController : public Controller {
 public:
  explicit RandomController(int l) : l_(l), rng_(0) {}
  std::string name() const override { return "random"; }
  void begin(int, std::uint64_t seed) override { rng_ = Rng(seed); }
  int choose(int, std::span<const int>, std::span<const int>) override { return rng_.uniform_int(l_); }

 private:
  int l_;
  Rng rng_;
};

/// Table lookup on the current history window.
class PofiController : public Controller {
 public:
  explicit PofiController(std::shared_ptr<const PofiPolicy> policy) : policy_(std::move(policy)) {}
  std::string name() const override { return "pofi"; }
  int choose(int t, std::span<const int> y, std::span<const int> u) override;

 private:
  std::shared_ptr<const PofiPolicy> policy_;
};

/// Runs a Bayes filter per theta grid point and mixes the beliefs by the running
/// posterior over the grid. A single grid point gives the plain filter.
class MixtureFilter {
 public:
  MixtureFilter() = default;
  MixtureFilter(std::vector<PomdpModel> models, ThetaPosterior prior);

  void start(int y0);
  /// Returns the per-model predictive probabilities of y_next.
  const std::vector<double>& step(int u, int y_next);
  std::vector<double> mixed_belief() const;
  const ThetaPosterior& posterior() const { return post_; }
  const std::vector<double>& belief(int i) const { return beliefs_[i]; }
  int size() const { return static_cast<int>(models_.size()); }
  const PomdpModel& model(int i) const { return models_[i]; }

 private:
  std::vector<PomdpModel> models_;
  ThetaPosterior prior_;
  ThetaPosterior post_;
  std::vector<std::vector<double>> beliefs_;
  std::vector<double> preds_;
};

/// MAP-state lookup on a filtered belief. With a one-point grid at the true theta this is
/// the oracle-theta variant.
class FofiController : public Controller {
 public:
  FofiController(std::shared_ptr<const StatePolicy> policy, std::vector<PomdpModel> filter_models,
                 ThetaPosterior filter_prior);
  std::string name() const override { return "fofi"; }
  void begin(int T, std::uint64_t seed) override;
  int choose(int t, std::span<const int> y, std::span<const int> u) override;
  void record(int t, int u_exec, int y_next) override;

 private:
  std::shared_ptr<const StatePolicy> policy_;
  MixtureFilter filter_;
  MixtureFilter initial_;
  bool started_ = false;
};

}  // namespace fidesign
