#include "fidesign/model.hpp"

#include <cmath>
#include <sstream>

#include "fidesign/error.hpp"

namespace fidesign {

namespace {

constexpr double kStochasticTol = 1e-12;

void check_distribution(std::span<const double> p, const std::string& what, std::vector<int> index,
                        ValidationReport& report) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0) || !std::isfinite(p[i])) {
      auto idx = index;
      idx.push_back(static_cast<int>(i));
      report.violations.push_back({what + ": negative or non-finite entry", idx});
      return;
    }
    sum += p[i];
  }
  if (std::abs(sum - 1.0) > kStochasticTol) {
    std::ostringstream os;
    os.precision(17);
    os << what << ": sums to " << sum;
    report.violations.push_back({os.str(), std::move(index)});
  }
}

}  // namespace

int ControlSet::index_of(const std::string& label) const {
  for (int i = 0; i < size(); ++i)
    if (labels[i] == label) return i;
  return -1;
}

std::size_t PomdpModel::emission_size() const {
  std::size_t n = static_cast<std::size_t>(L);
  if (mask.x_next) n *= K;
  if (mask.x_prev) n *= K;
  if (mask.y_prev) n *= L;
  return n;
}

double PomdpModel::emit(int y_next, int x_next, int x_prev, int y_prev) const {
  std::size_t idx = 0;
  if (mask.x_next) idx = idx * K + x_next;
  if (mask.x_prev) idx = idx * K + x_prev;
  if (mask.y_prev) idx = idx * L + y_prev;
  idx = idx * L + y_next;
  return emission[idx];
}

bool PomdpModel::has_identity_randomizer() const {
  const int l = num_controls();
  for (int w = 0; w < l; ++w)
    for (int u = 0; u < l; ++u)
      if (rand_prob(w, u) != (w == u ? 1.0 : 0.0)) return false;
  return true;
}

PomdpModel PomdpModel::standard(int K, int L, ControlSet controls, std::vector<double> transition,
                                std::vector<double> emission, std::vector<double> initial_state) {
  PomdpModel m;
  m.K = K;
  m.L = L;
  const int l = controls.size();
  m.controls = std::move(controls);
  m.transition = std::move(transition);
  m.emission = std::move(emission);
  m.initial_state = std::move(initial_state);
  m.initial_obs.assign(L, 1.0 / L);
  m.randomizer.assign(static_cast<std::size_t>(l) * l, 0.0);
  for (int u = 0; u < l; ++u) m.randomizer[static_cast<std::size_t>(u) * l + u] = 1.0;
  return m;
}

ModelFamily::ModelFamily(std::string name, ThetaDomain domain, Evaluator eval)
    : name_(std::move(name)), domain_(domain), eval_(std::move(eval)) {
  if (!(domain_.lo <= domain_.hi)) throw schema_error("family " + name_ + ": empty theta domain");
  const PomdpModel probe = eval_(0.5 * (domain_.lo + domain_.hi));
  K_ = probe.K;
  L_ = probe.L;
  l_ = probe.num_controls();
}

PomdpModel ModelFamily::eval(double theta) const {
  if (!domain_.contains(theta)) {
    std::ostringstream os;
    os << "family " << name_ << ": theta " << theta << " outside [" << domain_.lo << ", "
       << domain_.hi << "]";
    throw index_error(os.str());
  }
  PomdpModel m = eval_(theta);
  if (m.K != K_ || m.L != L_ || m.num_controls() != l_)
    throw schema_error("family " + name_ + ": dimensions change with theta");
  return m;
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& v : violations) {
    os << v.what << " at (";
    for (std::size_t i = 0; i < v.index.size(); ++i) os << (i ? "," : "") << v.index[i];
    os << ")\n";
  }
  return os.str();
}

ValidationReport validate_model(const PomdpModel& m) {
  ValidationReport report;
  const int l = m.num_controls();
  if (m.K < 1 || m.L < 1 || l < 1) {
    report.violations.push_back({"dimensions must be positive", {m.K, m.L, l}});
    return report;
  }
  for (int i = 0; i < l; ++i)
    for (int j = i + 1; j < l; ++j)
      if (m.controls.labels[i] == m.controls.labels[j])
        report.violations.push_back({"duplicate control label", {i, j}});

  const std::size_t kk = static_cast<std::size_t>(m.K) * m.K;
  if (m.transition.size() != l * kk) {
    report.violations.push_back({"transition tensor has wrong size", {static_cast<int>(m.transition.size())}});
  } else {
    for (int u = 0; u < l; ++u)
      for (int x = 0; x < m.K; ++x)
        check_distribution(std::span(m.transition).subspan((u * m.K + x) * static_cast<std::size_t>(m.K), m.K),
                           "transition slice", {u, x}, report);
  }

  if (m.emission.size() != m.emission_size()) {
    report.violations.push_back({"emission tensor has wrong size", {static_cast<int>(m.emission.size())}});
  } else {
    const std::size_t rows = m.emission.size() / m.L;
    for (std::size_t r = 0; r < rows; ++r)
      check_distribution(std::span(m.emission).subspan(r * m.L, m.L), "emission slice",
                         {static_cast<int>(r)}, report);
  }

  if (m.initial_state.size() != static_cast<std::size_t>(m.K))
    report.violations.push_back({"initial_state has wrong size", {static_cast<int>(m.initial_state.size())}});
  else
    check_distribution(m.initial_state, "initial_state", {}, report);

  if (m.initial_obs.size() != static_cast<std::size_t>(m.L))
    report.violations.push_back({"initial_obs has wrong size", {static_cast<int>(m.initial_obs.size())}});
  else
    check_distribution(m.initial_obs, "initial_obs", {}, report);

  if (m.randomizer.size() != static_cast<std::size_t>(l) * l) {
    report.violations.push_back({"randomizer has wrong size", {static_cast<int>(m.randomizer.size())}});
  } else {
    for (int w = 0; w < l; ++w)
      check_distribution(std::span(m.randomizer).subspan(static_cast<std::size_t>(w) * l, l),
                         "randomizer row", {w}, report);
  }
  return report;
}

Eigen::MatrixXd transition_matrix(const PomdpModel& m, int u) {
  if (u < 0 || u >= m.num_controls())
    throw index_error("transition_matrix: control index " + std::to_string(u) + " out of range");
  Eigen::MatrixXd P(m.K, m.K);
  for (int i = 0; i < m.K; ++i)
    for (int j = 0; j < m.K; ++j) P(i, j) = m.trans(u, i, j);
  return P;
}

AugmentResult augment_autoregressive(const PomdpModel& m) {
  if (m.mask.is_standard()) return {m, true};

  const int K = m.K;
  const int L = m.L;
  const int l = m.num_controls();
  PomdpModel out;
  out.L = L;
  out.controls = m.controls;
  out.randomizer = m.randomizer;
  out.initial_obs = m.initial_obs;
  out.mask = EmissionMask{};

  if (m.mask.y_prev) {
    // state (x, y); the emission becomes a deterministic read of y
    const int K2 = K * L;
    out.K = K2;
    out.transition.assign(static_cast<std::size_t>(l) * K2 * K2, 0.0);
    for (int u = 0; u < l; ++u)
      for (int x = 0; x < K; ++x)
        for (int y = 0; y < L; ++y)
          for (int x2 = 0; x2 < K; ++x2)
            for (int y2 = 0; y2 < L; ++y2) {
              const int from = x * L + y;
              const int to = x2 * L + y2;
              out.transition[(static_cast<std::size_t>(u) * K2 + from) * K2 + to] =
                  m.trans(u, x, x2) * m.emit(y2, x2, x, y);
            }
    out.emission.assign(static_cast<std::size_t>(K2) * L, 0.0);
    for (int x = 0; x < K; ++x)
      for (int y = 0; y < L; ++y) out.emission[static_cast<std::size_t>(x * L + y) * L + y] = 1.0;
    out.initial_state.assign(K2, 0.0);
    for (int x = 0; x < K; ++x)
      for (int y = 0; y < L; ++y) out.initial_state[x * L + y] = m.initial_state[x] * m.initial_obs[y];
  } else if (m.mask.x_prev) {
    // state (x, x_prev); x_{-1} is taken equal to x_0
    const int K2 = K * K;
    out.K = K2;
    out.transition.assign(static_cast<std::size_t>(l) * K2 * K2, 0.0);
    for (int u = 0; u < l; ++u)
      for (int x = 0; x < K; ++x)
        for (int xp = 0; xp < K; ++xp)
          for (int x2 = 0; x2 < K; ++x2) {
            const int from = x * K + xp;
            const int to = x2 * K + x;
            out.transition[(static_cast<std::size_t>(u) * K2 + from) * K2 + to] = m.trans(u, x, x2);
          }
    out.emission.assign(static_cast<std::size_t>(K2) * L, 0.0);
    for (int x = 0; x < K; ++x)
      for (int xp = 0; xp < K; ++xp)
        for (int y = 0; y < L; ++y)
          out.emission[static_cast<std::size_t>(x * K + xp) * L + y] = m.emit(y, x, xp, 0);
    out.initial_state.assign(K2, 0.0);
    for (int x = 0; x < K; ++x) out.initial_state[x * K + x] = m.initial_state[x];
  } else {
    // emission independent of the state
    out.K = K;
    out.transition = m.transition;
    out.emission.assign(static_cast<std::size_t>(K) * L, 0.0);
    for (int x = 0; x < K; ++x)
      for (int y = 0; y < L; ++y) out.emission[static_cast<std::size_t>(x) * L + y] = m.emit(y, x, 0, 0);
    out.initial_state = m.initial_state;
  }
  return {std::move(out), false};
}

std::vector<double> apply_randomizer(const PomdpModel& m, int w) {
  const int l = m.num_controls();
  if (w < 0 || w >= l) throw index_error("apply_randomizer: control index " + std::to_string(w) + " out of range");
  return {m.randomizer.begin() + static_cast<std::ptrdiff_t>(w) * l,
          m.randomizer.begin() + static_cast<std::ptrdiff_t>(w + 1) * l};
}

std::vector<double> initial_obs_law(const PomdpModel& m, std::span<const double> nu) {
  std::vector<double> law(m.L, 0.0);
  for (int x = 0; x < m.K; ++x)
    for (int y = 0; y < m.L; ++y) law[y] += nu[x] * m.emit(x, y);
  return law;
}

}  // namespace fidesign
