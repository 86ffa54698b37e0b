#include "fidesign/discretize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <Eigen/Cholesky>

#include "fidesign/error.hpp"
#include "fidesign/rng.hpp"

namespace fidesign {

namespace {

constexpr double kUnderflow = 1e-300;

// Normalized Gaussian log-density pieces for a fixed covariance.
struct Gaussian {
  Eigen::MatrixXd precision;
  double log_norm = 0.0;

  Gaussian(std::span<const double> cov, int d) {
    Eigen::MatrixXd C(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) C(i, j) = cov[i * d + j];
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success) throw schema_error("covariance is not positive definite");
    precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const Eigen::MatrixXd Lc = llt.matrixL();
    double logdet = 0.0;
    for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(Lc(i, i));
    log_norm = -0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet);
  }

  double density(std::span<const double> r) const {
    const int d = static_cast<int>(r.size());
    double q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) q += r[i] * precision(i, j) * r[j];
    return std::exp(log_norm - 0.5 * q);
  }
};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_symmetric(std::span<const double> c, int d, const char* what) {
  if (c.size() != static_cast<std::size_t>(d) * d) throw schema_error(std::string(what) + ": wrong size");
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (c[i * d + j] != c[j * d + i]) throw schema_error(std::string(what) + ": not symmetric");
  for (int i = 0; i < d; ++i)
    if (!(c[i * d + i] > 0.0)) throw schema_error(std::string(what) + ": diagonal must be positive");
}

}  // namespace

int GridAxis::cell_of(double v) const {
  const int i = static_cast<int>(std::floor((v - lower) / width()));
  return std::clamp(i, 0, count - 1);
}

int GridSpec::size() const {
  int n = 1;
  for (const auto& a : axes) n *= a.count;
  return n;
}

double GridSpec::volume() const {
  double v = 1.0;
  for (const auto& a : axes) v *= a.width();
  return v;
}

std::vector<double> GridSpec::midpoint(int flat) const {
  std::vector<double> m(axes.size());
  for (int k = dim() - 1; k >= 0; --k) {
    m[k] = axes[k].midpoint(flat % axes[k].count);
    flat /= axes[k].count;
  }
  return m;
}

void GridSpec::validate() const {
  if (axes.empty()) throw schema_error("grid has no axes");
  for (const auto& a : axes)
    if (!(a.lower < a.upper) || a.count < 2) throw schema_error("grid axis needs lower < upper and count >= 2");
}

void SdeSpec::validate(int state_dim, int obs_dim) const {
  if (!(dt > 0.0)) throw schema_error("SDE time step must be positive");
  if (controls.empty()) throw schema_error("SDE needs at least one control");
  if (!drift || !obs_map) throw schema_error("SDE needs drift and observation map");
  check_symmetric(state_cov, state_dim, "state covariance");
  if (obs_dim >= 0) check_symmetric(obs_cov, obs_dim, "observation covariance");
}

std::vector<double> discretize_transition(const SdeSpec& spec, const GridSpec& grid, double theta) {
  grid.validate();
  const int d = grid.dim();
  spec.validate(d, -1);
  std::vector<double> cov(spec.state_cov);
  for (double& c : cov) c *= spec.dt;
  const Gaussian g(cov, d);
  const int K = grid.size();
  const int l = static_cast<int>(spec.controls.size());
  const double vol = grid.volume();

  std::vector<std::vector<double>> mids(K);
  for (int i = 0; i < K; ++i) mids[i] = grid.midpoint(i);

  std::vector<double> out(static_cast<std::size_t>(l) * K * K);
  std::vector<double> f(d);
  std::vector<double> mean(d);
  std::vector<double> r(d);
  for (int u = 0; u < l; ++u)
    for (int i1 = 0; i1 < K; ++i1) {
      spec.drift(mids[i1], theta, spec.controls[u], f);
      for (int k = 0; k < d; ++k) mean[k] = mids[i1][k] + spec.dt * f[k];
      double* row = out.data() + (static_cast<std::size_t>(u) * K + i1) * K;
      double sum = 0.0;
      for (int i2 = 0; i2 < K; ++i2) {
        for (int k = 0; k < d; ++k) r[k] = mids[i2][k] - mean[k];
        row[i2] = g.density(r) * vol;
        sum += row[i2];
      }
      if (!(sum > kUnderflow)) {
        std::ostringstream os;
        os << "transition slice underflows: Euler mean of cell " << i1 << " under control " << u << " at (";
        for (int k = 0; k < d; ++k) os << (k ? ", " : "") << mean[k];
        os << ") left the grid";
        throw numerical_error(os.str());
      }
      for (int i2 = 0; i2 < K; ++i2) row[i2] /= sum;
    }
  return out;
}

std::vector<double> discretize_emission(const SdeSpec::ObsMap& gmap, std::span<const double> obs_cov,
                                        const GridSpec& state_grid, const GridSpec& obs_grid) {
  state_grid.validate();
  obs_grid.validate();
  const int e = obs_grid.dim();
  check_symmetric(obs_cov, e, "observation covariance");
  const Gaussian g(obs_cov, e);
  const int K = state_grid.size();
  const int L = obs_grid.size();
  const double vol = obs_grid.volume();
  std::vector<std::vector<double>> ymids(L);
  for (int j = 0; j < L; ++j) ymids[j] = obs_grid.midpoint(j);

  std::vector<double> out(static_cast<std::size_t>(K) * L);
  std::vector<double> center(e);
  std::vector<double> r(e);
  for (int i = 0; i < K; ++i) {
    const std::vector<double> x = state_grid.midpoint(i);
    gmap(x, center);
    double* row = out.data() + static_cast<std::size_t>(i) * L;
    double sum = 0.0;
    for (int j = 0; j < L; ++j) {
      for (int k = 0; k < e; ++k) r[k] = ymids[j][k] - center[k];
      row[j] = g.density(r) * vol;
      sum += row[j];
    }
    if (!(sum > kUnderflow)) {
      std::ostringstream os;
      os << "emission row underflows: observation of cell " << i << " falls outside the observation grid";
      throw numerical_error(os.str());
    }
    for (int j = 0; j < L; ++j) row[j] /= sum;
  }
  return out;
}

PomdpModel six_state_raw(double p) {
  PomdpModel m;
  m.K = 3;
  m.L = 2;
  m.controls.labels = {"-1", "+1"};
  m.transition.assign(2 * 9, 0.0);
  for (int ui = 0; ui < 2; ++ui) {
    const double u = ui == 0 ? -1.0 : 1.0;
    // columns of the printed matrix are the source states
    const double cols[3][3] = {{0.5 - p / 4 + u / 4, p / 2, 0.5 - p / 4 - u / 4},
                               {1.0 / 3, 1.0 / 3, 1.0 / 3},
                               {0.4 - u / 4, 0.15, 0.45 + u / 4}};
    for (int from = 0; from < 3; ++from)
      for (int to = 0; to < 3; ++to) m.transition[(ui * 3 + from) * 3 + to] = cols[from][to];
  }
  m.mask = EmissionMask{false, true, true};
  m.emission.assign(3 * 2 * 2, 0.5);
  m.emission[(2 * 2 + 0) * 2 + 0] = 1.0 - p / 2;
  m.emission[(2 * 2 + 0) * 2 + 1] = p / 2;
  m.emission[(2 * 2 + 1) * 2 + 0] = p / 2;
  m.emission[(2 * 2 + 1) * 2 + 1] = 1.0 - p / 2;
  m.initial_state.assign(3, 1.0 / 3);
  m.initial_obs.assign(2, 0.5);
  m.randomizer = {1.0, 0.0, 0.0, 1.0};
  return m;
}

ModelFamily build_six_state_raw() { return ModelFamily("six_state_raw", {0.0, 0.5}, six_state_raw); }

ModelFamily build_six_state() {
  return ModelFamily("six_state", {0.0, 0.5}, [](double p) { return augment_autoregressive(six_state_raw(p)).model; });
}

ModelFamily build_adversarial(ThetaDomain domain, double randomize) {
  return ModelFamily("adversarial", domain, [randomize](double theta) {
    PomdpModel m;
    m.K = 4;
    m.L = 2;
    m.controls.labels = {"-1", "+1"};
    m.transition.assign(2 * 16, 0.0);
    for (int ui = 0; ui < 2; ++ui) {
      const double U = ui == 0 ? -1.0 : 1.0;
      for (int s = 0; s < 2; ++s)
        for (int up = 0; up < 2; ++up) {
          const double S = s == 0 ? -1.0 : 1.0;
          const double Up = up == 0 ? -1.0 : 1.0;
          const double nash = logistic(1.2 * U + Up + theta * S);
          const int from = s * 2 + up;
          m.transition[(ui * 4 + from) * 4 + (0 * 2 + ui)] = nash;
          m.transition[(ui * 4 + from) * 4 + (1 * 2 + ui)] = 1.0 - nash;
        }
    }
    m.emission = {0.5, 0.5, 0.5, 0.5, 0.0, 1.0, 0.0, 1.0};
    m.initial_state.assign(4, 0.25);
    m.initial_obs.assign(2, 0.5);
    m.randomizer = {randomize, 1.0 - randomize, 1.0 - randomize, randomize};
    return m;
  });
}

ModelFamily build_random_family(std::uint64_t seed, int K, int L, int l) {
  if (K < 1 || L < 1 || l < 1) throw schema_error("random family: dimensions must be positive");
  Rng rng(seed);
  auto draw = [&](std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = 0.05 + 0.95 * rng.uniform();
    return v;
  };
  const std::size_t nt = static_cast<std::size_t>(l) * K * K;
  const std::size_t ne = static_cast<std::size_t>(K) * L;
  const std::vector<double> ta = draw(nt), tb = draw(nt), ea = draw(ne), eb = draw(ne), nu = draw(K);
  ControlSet controls;
  for (int u = 0; u < l; ++u) controls.labels.push_back(std::to_string(u));
  return ModelFamily("random", {0.0, 1.0}, [=](double theta) {
    auto rows = [theta](const std::vector<double>& a, const std::vector<double>& b, int width) {
      std::vector<double> out(a.size());
      for (std::size_t r = 0; r < a.size() / width; ++r) {
        double s = 0.0;
        for (int j = 0; j < width; ++j) s += out[r * width + j] = a[r * width + j] + theta * b[r * width + j];
        for (int j = 0; j < width; ++j) out[r * width + j] /= s;
      }
      return out;
    };
    std::vector<double> init = nu;
    double s = 0.0;
    for (double x : init) s += x;
    for (double& x : init) x /= s;
    return PomdpModel::standard(K, L, controls, rows(ta, tb, K), rows(ea, eb, L), std::move(init));
  });
}

SdeSpec pcr_sde(const PcrParams& p) {
  SdeSpec s;
  s.drift = [p](std::span<const double> x, double b, double u, std::span<double> out) {
    const double kept = (1.0 - u) * x[0];
    const double denom = b + kept;
    const double scale = p.saturation_power == 2.0 ? denom * denom : std::pow(denom, p.saturation_power);
    out[0] = -u * x[0] / p.dt + p.a * kept / scale;
  };
  s.state_cov = {p.sigma1 * p.sigma1};
  s.dt = p.dt;
  s.obs_map = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
  s.obs_cov = {p.sigma2 * p.sigma2};
  s.controls = p.controls;
  return s;
}

namespace {

ControlSet labels_for(const std::vector<double>& values) {
  ControlSet c;
  for (double v : values) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    c.labels.emplace_back(buf);
  }
  return c;
}

ModelFamily grid_family(std::string name, ThetaDomain domain, SdeSpec sde, GridSpec state, GridSpec obs) {
  const std::vector<double> emission = discretize_emission(sde.obs_map, sde.obs_cov, state, obs);
  const ControlSet controls = labels_for(sde.controls);
  const int K = state.size();
  const int L = obs.size();
  return ModelFamily(std::move(name), domain, [=](double theta) {
    std::vector<double> trans = discretize_transition(sde, state, theta);
    return PomdpModel::standard(K, L, controls, std::move(trans), emission, std::vector<double>(K, 1.0 / K));
  });
}

}  // namespace

ModelFamily build_pcr(const PcrParams& p) {
  return grid_family("pcr", p.domain, pcr_sde(p), GridSpec{{p.state}}, GridSpec{{p.obs}});
}

double ml_m_inf(const MorrisLecarParams& p, double v) { return 0.5 * (1.0 + std::tanh((v - p.v1) / p.v2)); }
double ml_n_inf(const MorrisLecarParams& p, double v) { return 0.5 * (1.0 + std::tanh((v - p.v3) / p.v4)); }

void ml_drift(const MorrisLecarParams& p, double v, double n, double I, double& dv, double& dn) {
  const double F1 = I - p.gl * (v - p.El) - p.gK * n * (v - p.EK) - p.gCa * ml_m_inf(p, v) * (v - p.ECa);
  dv = F1 / p.Cm;
  // 1 / tau_n = cosh((v - v3) / (2 v4))
  dn = -p.phi * (n - ml_n_inf(p, v)) * std::cosh((v - p.v3) / (2.0 * p.v4));
}

ThetaDomain ml_domain(const std::string& parameter) {
  if (parameter == "Cm") return {8.0, 40.0};
  if (parameter == "gCa") return {2.0, 7.0};
  if (parameter == "phi") return {0.005, 0.1};
  throw schema_error("morris_lecar: unknown parameter '" + parameter + "' (expected Cm, gCa or phi)");
}

SdeSpec morris_lecar_sde(const MorrisLecarParams& p) {
  ml_domain(p.parameter);
  SdeSpec s;
  s.drift = [p](std::span<const double> x, double theta, double I, std::span<double> out) {
    MorrisLecarParams q = p;
    if (p.parameter == "Cm")
      q.Cm = theta;
    else if (p.parameter == "gCa")
      q.gCa = theta;
    else
      q.phi = theta;
    ml_drift(q, x[0], x[1], I, out[0], out[1]);
  };
  s.state_cov = {p.sigma * p.sigma, 0.0, 0.0, p.sigma_n * p.sigma_n};
  s.dt = p.dt;
  s.obs_map = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
  s.obs_cov = {p.obs_sigma * p.obs_sigma};
  s.controls = p.controls;
  return s;
}

ModelFamily build_morris_lecar(const MorrisLecarParams& p) {
  return grid_family("morris_lecar_" + p.parameter, ml_domain(p.parameter), morris_lecar_sde(p),
                     GridSpec{{p.v_axis, p.n_axis}}, GridSpec{{p.obs_axis}});
}

}  // namespace fidesign
