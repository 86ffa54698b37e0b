#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "fidesign/estimation.hpp"
#include "fidesign/simulate.hpp"

namespace fidesign {

enum class EstimatorKind { MleGrid, Em };

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::MleGrid;
  double grid_step = 0.01;
  std::vector<double> grid;  // overrides grid_step when not empty
  EmOptions em;
  double em_start = std::nan("");  // NaN: the domain midpoint
};

struct VariantSpec {
  std::string name;
  /// Called once per replication; the controller must not share mutable state.
  std::function<std::unique_ptr<Controller>()> make;
};

struct StudyConfig {
  ModelFamily family;
  double true_theta = 0.0;
  int T = 0;
  int reps = 0;
  std::uint64_t base_seed = 0;
  std::vector<VariantSpec> variants;
  EstimatorSpec estimator;
  int threads = 1;
  std::string config_hash;
};

struct VariantSummary {
  std::string name;
  int n = 0;
  double mean = 0.0;
  double bias = 0.0;  // mean(theta_hat) - theta*
  double sd = 0.0;    // sample standard deviation, 0 when n == 1
  double mse = 0.0;   // mean squared error
  std::vector<double> estimates;
  std::vector<std::uint64_t> seeds;
};

struct StudyResult {
  std::vector<VariantSummary> variants;
  std::string config_hash;

  const VariantSummary& variant(const std::string& name) const;
};

/// Sum with Neumaier compensation.
double compensated_sum(const std::vector<double>& xs);

VariantSummary summarize(std::string name, std::vector<double> estimates, double true_theta);

/// Every variant of replication r runs on seed replication_seed(base_seed, r), so the
/// variants share their random numbers. Results do not depend on the thread count.
StudyResult run_study(const StudyConfig& config);

/// Estimator applied to one trajectory.
class Estimator {
 public:
  Estimator(const ModelFamily& family, const EstimatorSpec& spec);
  double operator()(const Trajectory& tr) const;

 private:
  const ModelFamily* family_;
  EstimatorSpec spec_;
  std::vector<double> grid_;
  std::vector<PomdpModel> models_;
};

/// `variant,n,bias,sd,mse` with 12 significant digits.
void write_study_csv(std::ostream& os, const StudyResult& r);
/// `variant,rep,seed,theta_hat`.
void write_detail_csv(std::ostream& os, const StudyResult& r);
std::string format_number(double x);

}  // namespace fidesign
