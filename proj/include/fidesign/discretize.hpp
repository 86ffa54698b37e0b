#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fidesign/model.hpp"

namespace fidesign {

struct GridAxis {
  double lower = 0.0;
  double upper = 1.0;
  int count = 2;

  double width() const { return (upper - lower) / count; }
  double midpoint(int i) const { return lower + (i + 0.5) * width(); }
  /// Cell containing v, clamped to the grid.
  int cell_of(double v) const;
};

/// Equidistant product grid; flat index is row-major with the first axis slowest.
struct GridSpec {
  std::vector<GridAxis> axes;

  int dim() const { return static_cast<int>(axes.size()); }
  int size() const;
  double volume() const;
  std::vector<double> midpoint(int flat) const;
  void validate() const;
};

struct SdeSpec {
  using Drift = std::function<void(std::span<const double> x, double theta, double u, std::span<double> out)>;
  using ObsMap = std::function<void(std::span<const double> x, std::span<double> out)>;

  Drift drift;
  std::vector<double> state_cov;  // d x d, row-major
  double dt = 1.0;
  ObsMap obs_map;
  std::vector<double> obs_cov;  // e x e, row-major
  std::vector<double> controls;

  /// obs_dim < 0 skips the observation covariance.
  void validate(int state_dim, int obs_dim) const;
};

/// [u][i1][i2]: Gaussian density of the Euler step at the target midpoints times the
/// cell volume, renormalized per slice.
std::vector<double> discretize_transition(const SdeSpec& spec, const GridSpec& grid, double theta);

/// [x][y]: Gaussian density around g(state midpoint) at observation midpoints, renormalized per row.
std::vector<double> discretize_emission(const SdeSpec::ObsMap& g, std::span<const double> obs_cov,
                                        const GridSpec& state_grid, const GridSpec& obs_grid);

// Builders for the example families.

/// Three-state chain observed through a two-valued process whose law depends on the previous
/// state and observation; augment_autoregressive of this gives the six-state family.
PomdpModel six_state_raw(double p);
ModelFamily build_six_state_raw();
ModelFamily build_six_state();

/// Row/Column game with hidden strategy S and state (S, U_prev).
/// State index s * 2 + u_prev with s = 0 for Nash (S = -1); observations 0 = left (-1), 1 = right (+1).
ModelFamily build_adversarial(ThetaDomain domain = {-3.0, 3.0}, double randomize = 0.8);

/// Small smooth family on [0, 1]: every row is A + theta * B normalized, with A and B
/// drawn uniformly from [0.05, 1) by the seed. Identity randomizer.
ModelFamily build_random_family(std::uint64_t seed, int K, int L, int l);

struct PcrParams {
  double a = 2.0;
  double b = 4.2;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double dt = 1.0;
  /// Exponent of (b + (1-u) x) in the growth term; 1 gives the Monod form.
  double saturation_power = 2.0;
  std::vector<double> controls{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  GridAxis state{0.0, 15.0, 200};
  GridAxis obs{0.0, 15.0, 50};
  ThetaDomain domain{1.7, 8.0};
};

SdeSpec pcr_sde(const PcrParams& p);
ModelFamily build_pcr(const PcrParams& p = {});

struct MorrisLecarParams {
  double Cm = 20.0;
  double gCa = 4.4;
  double gK = 8.0;
  double gl = 2.0;
  double EK = -84.0;
  double El = -60.0;
  double ECa = 120.0;
  double phi = 0.04;
  double v1 = -1.2;
  double v2 = 18.0;
  double v3 = 2.0;
  double v4 = 30.0;
  double sigma = 1.0;
  double sigma_n = 1.0;
  double obs_sigma = 1.0;
  double dt = 1.0;
  std::vector<double> controls{-1.5, 0.0, 1.5, 3.0, 4.5, 6.0};
  GridAxis v_axis{-75.0, 45.0, 25};
  GridAxis n_axis{0.0, 1.0, 25};
  GridAxis obs_axis{-75.0, 45.0, 20};
  std::string parameter = "gCa";  // one of Cm, gCa, phi
};

double ml_m_inf(const MorrisLecarParams& p, double v);
double ml_n_inf(const MorrisLecarParams& p, double v);
/// Drift (dv/dt, dn/dt) with the selected parameter set to theta.
void ml_drift(const MorrisLecarParams& p, double v, double n, double I, double& dv, double& dn);
ThetaDomain ml_domain(const std::string& parameter);
SdeSpec morris_lecar_sde(const MorrisLecarParams& p);
ModelFamily build_morris_lecar(const MorrisLecarParams& p = {});

}  // namespace fidesign
