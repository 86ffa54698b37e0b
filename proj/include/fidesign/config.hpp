#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fidesign/inference.hpp"
#include "fidesign/model.hpp"
#include "fidesign/study.hpp"

namespace fidesign {

/// Builtin name plus its parameters as JSON text, or a model file path.
struct ModelSpec {
  std::string builtin;
  std::string params_json = "{}";
  std::string file;
};

struct ThetaSpec {
  bool is_prior = false;
  double value = 0.0;
  ThetaPosterior prior;

  /// The prior itself, or a one-point prior at value.
  ThetaPosterior as_prior() const { return is_prior ? prior : ThetaPosterior::point(value); }
};

struct SolverSpec {
  std::string type;  // pofi | fofi | via | fixed | random
  std::string name;  // variant label in study output; defaults to type
  int m = 1;
  bool lead_control = false;
  double lambda = 0.9;
  double epsilon = 1e-6;
  std::string fixed_control;       // label, or an index written as a number
  std::optional<ThetaSpec> theta;  // design theta for this variant; default: the config theta
};

struct StudySpec {
  int reps = 0;
  int slow_reps = 0;  // used with --slow when positive
  std::optional<std::uint64_t> base_seed;
  EstimatorSpec estimator;
  std::vector<SolverSpec> variants;  // empty: the config solver alone
  bool detail = false;
};

struct RunConfig {
  ModelSpec model;
  std::optional<ThetaSpec> theta;
  std::optional<double> true_theta;
  std::optional<SolverSpec> solver;
  std::optional<int> horizon;
  std::optional<StudySpec> study;
  std::string output;
  std::string base_dir;  // directory of the config file, for relative model paths
  std::string hash;      // FNV-1a of the canonical JSON document

  /// Throws a schema Error naming the missing key.
  const ThetaSpec& need_theta() const;
  const SolverSpec& need_solver() const;
  int need_horizon() const;
  double truth() const;  // true_theta, or the point theta
};

/// Validates the whole document (unknown keys, types, ranges) before returning.
RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);

ModelFamily build_family(const ModelSpec& spec, const std::string& base_dir = "");

/// Solves whatever the variant needs once and returns a per-replication factory.
VariantSpec prepare_variant(const SolverSpec& solver, const ModelFamily& family, const ThetaSpec& theta, int T);

/// Index of a control given by label or by number.
int resolve_control(const ModelFamily& family, const std::string& control);

std::string fnv1a_hex(const std::string& text);

}  // namespace fidesign
