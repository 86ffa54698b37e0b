#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fidesign {

/// Probabilities passed to a logarithm are clamped below at this value.
inline constexpr double kProbFloor = 1e-12;

struct ControlSet {
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(labels.size()); }
  /// Index of a label, or -1.
  int index_of(const std::string& label) const;
};

/// Which variables the emission of y_{t+1} is conditioned on.
/// The default {x_next} is the ordinary hidden Markov emission p(y | x).
struct EmissionMask {
  bool x_next = true;
  bool x_prev = false;
  bool y_prev = false;

  bool is_standard() const { return x_next && !x_prev && !y_prev; }
  bool operator==(const EmissionMask&) const = default;
};

/// A finite controlled hidden Markov model at one parameter value.
///
/// Tensor layouts (row-major, all stochastic along the last axis):
///   transition  [u][x_from][x_to]                         size l*K*K
///   emission    [x_next?][x_prev?][y_prev?][y_next]        axes present per mask
///   randomizer  [chosen w][executed u]                     size l*l
struct PomdpModel {
  int K = 0;
  int L = 0;
  ControlSet controls;
  std::vector<double> transition;
  EmissionMask mask;
  std::vector<double> emission;
  std::vector<double> initial_state;
  std::vector<double> initial_obs;
  std::vector<double> randomizer;

  int num_controls() const { return controls.size(); }

  double trans(int u, int from, int to) const {
    return transition[(static_cast<std::size_t>(u) * K + from) * K + to];
  }
  /// General emission lookup; arguments for axes absent from the mask are ignored.
  double emit(int y_next, int x_next, int x_prev, int y_prev) const;
  /// Emission for a standard-mask model.
  double emit(int x, int y) const { return emission[static_cast<std::size_t>(x) * L + y]; }
  double rand_prob(int chosen, int executed) const {
    return randomizer[static_cast<std::size_t>(chosen) * num_controls() + executed];
  }
  bool has_identity_randomizer() const;

  /// Expected emission-tensor length for the current mask.
  std::size_t emission_size() const;

  /// Builds a standard-mask model with identity randomizer and uniform initial_obs.
  static PomdpModel standard(int K, int L, ControlSet controls, std::vector<double> transition,
                             std::vector<double> emission, std::vector<double> initial_state);
};

struct BeliefState {
  std::vector<double> weights;
};

struct ThetaDomain {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double theta) const { return theta >= lo - 1e-12 && theta <= hi + 1e-12; }
};

/// theta -> PomdpModel, with fixed dimensions over the domain.
class ModelFamily {
 public:
  using Evaluator = std::function<PomdpModel(double)>;

  ModelFamily(std::string name, ThetaDomain domain, Evaluator eval);

  PomdpModel eval(double theta) const;
  const ThetaDomain& domain() const { return domain_; }
  const std::string& name() const { return name_; }
  int K() const { return K_; }
  int L() const { return L_; }
  int num_controls() const { return l_; }

 private:
  std::string name_;
  ThetaDomain domain_;
  Evaluator eval_;
  int K_ = 0;
  int L_ = 0;
  int l_ = 0;
};

struct Violation {
  std::string what;
  std::vector<int> index;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

ValidationReport validate_model(const PomdpModel& model);

/// K x K row-stochastic matrix for control u; row i is p(. | x = i, u).
Eigen::MatrixXd transition_matrix(const PomdpModel& model, int u);

struct AugmentResult {
  PomdpModel model;
  bool was_standard = false;
};

/// Folds emission history dependence into the state so that the result uses the
/// standard {x_next} mask. With y_prev in the mask the new state is (x, y) with
/// index x * L + y and a deterministic emission of its y component; with only
/// x_prev the new state is (x, x_prev) with index x * K + x_prev.
AugmentResult augment_autoregressive(const PomdpModel& model);

/// Distribution over executed controls for chosen control w.
std::vector<double> apply_randomizer(const PomdpModel& model, int w);

/// Distribution of y_0 for a standard-mask model started from `nu`.
std::vector<double> initial_obs_law(const PomdpModel& model, std::span<const double> nu);

}  // namespace fidesign
