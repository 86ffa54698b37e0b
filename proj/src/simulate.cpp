#include "fidesign/simulate.hpp"

#include "fidesign/error.hpp"

namespace fidesign {

Trajectory simulate(const PomdpModel& m, Controller& c, int T, std::uint64_t seed) {
  if (!m.mask.is_standard()) throw schema_error("simulate: model has a non-standard emission mask; augment it first");
  if (T < 0) throw index_error("simulate: negative horizon");
  const int K = m.K;
  const int L = m.L;
  const int l = m.num_controls();
  Rng rng(seed);
  Trajectory tr;
  tr.seed = seed;
  tr.x.reserve(T + 1);
  tr.y.reserve(T + 1);
  c.begin(T, mix64(seed ^ 0x636f6e74726f6cULL));

  auto emit_row = [&](int x) { return std::span<const double>(m.emission).subspan(static_cast<std::size_t>(x) * L, L); };
  tr.x.push_back(rng.categorical(m.initial_state));
  tr.y.push_back(rng.categorical(emit_row(tr.x.back())));
  for (int t = 0; t < T; ++t) {
    const int w = c.choose(t, tr.y, tr.u_exec);
    if (w < 0 || w >= l) throw index_error("simulate: controller '" + c.name() + "' returned an invalid control");
    const int u = rng.categorical(std::span<const double>(m.randomizer).subspan(static_cast<std::size_t>(w) * l, l));
    const int x = tr.x.back();
    const int x2 = rng.categorical(
        std::span<const double>(m.transition).subspan((static_cast<std::size_t>(u) * K + x) * K, K));
    const int y2 = rng.categorical(emit_row(x2));
    tr.u_chosen.push_back(w);
    tr.u_exec.push_back(u);
    tr.x.push_back(x2);
    tr.y.push_back(y2);
    c.record(t, u, y2);
  }
  return tr;
}

Trajectory simulate(const ModelFamily& family, double true_theta, Controller& c, int T, std::uint64_t seed) {
  return simulate(family.eval(true_theta), c, T, seed);
}

int PofiController::choose(int t, std::span<const int> y, std::span<const int> u) {
  const PofiPolicy& p = *policy_;
  const int tt = t < p.T ? t : p.T - 1;
  const HistoryWindow w = p.layout.window_at(y, u);
  const int level = p.layout.level_for_time(t);
  if (tt != t && level != p.layout.level_for_time(tt)) throw index_error("pofi controller: history longer than policy");
  return p.tables[tt][p.layout.encode(level, w)];
}

MixtureFilter::MixtureFilter(std::vector<PomdpModel> models, ThetaPosterior prior)
    : models_(std::move(models)), prior_(std::move(prior)), post_(prior_) {
  if (models_.empty() || static_cast<int>(models_.size()) != prior_.size())
    throw index_error("MixtureFilter: one model per grid point required");
  beliefs_.resize(models_.size());
  preds_.resize(models_.size());
}

void MixtureFilter::start(int y0) {
  post_ = prior_;
  for (std::size_t i = 0; i < models_.size(); ++i)
    preds_[i] = condition_initial(models_[i].initial_state, y0, models_[i], beliefs_[i]);
  post_ = posterior_update(post_, preds_);
}

const std::vector<double>& MixtureFilter::step(int u, int y_next) {
  std::vector<double> tmp;
  for (std::size_t i = 0; i < models_.size(); ++i) {
    preds_[i] = propagate(beliefs_[i], u, y_next, models_[i], tmp);
    if (preds_[i] > 0.0) beliefs_[i].swap(tmp);
  }
  post_ = posterior_update(post_, preds_);
  return preds_;
}

std::vector<double> MixtureFilter::mixed_belief() const {
  std::vector<double> b(models_[0].K, 0.0);
  for (std::size_t i = 0; i < models_.size(); ++i) {
    const double w = post_.weights[i];
    if (w == 0.0) continue;
    for (std::size_t x = 0; x < b.size(); ++x) b[x] += w * beliefs_[i][x];
  }
  return b;
}

FofiController::FofiController(std::shared_ptr<const StatePolicy> policy, std::vector<PomdpModel> models,
                               ThetaPosterior prior)
    : policy_(std::move(policy)), filter_(std::move(models), std::move(prior)) {
  initial_ = filter_;
}

void FofiController::begin(int, std::uint64_t) {
  filter_ = initial_;
  started_ = false;
}

int FofiController::choose(int t, std::span<const int> y, std::span<const int>) {
  if (!started_) {
    filter_.start(y[0]);
    started_ = true;
  }
  const int tt = t < policy_->T ? t : policy_->T - 1;
  return fofi_runtime_control(*policy_, tt, filter_.mixed_belief());
}

void FofiController::record(int, int u_exec, int y_next) { filter_.step(u_exec, y_next); }

}  // namespace fidesign
