// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--slow] [--only N ...] [--threads N] [--configs DIR]
//
// Exit status is the number of failed criteria (capped at 100).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fidesign/config.hpp"
#include "fidesign/discretize.hpp"
#include "fidesign/error.hpp"
#include "fidesign/estimation.hpp"
#include "fidesign/fofi.hpp"
#include "fidesign/oracles.hpp"
#include "fidesign/pofi.hpp"
#include "fidesign/study.hpp"
#include "fidesign/via.hpp"
#include "fidesign/window.hpp"
#include "test_support.hpp"

using namespace fidesign;
using fidesign::testing::for_each_sequence;
using fidesign::testing::path_sum;
using fidesign::testing::random_model;

#ifndef FIDESIGN_CONFIG_DIR
#define FIDESIGN_CONFIG_DIR "configs"
#endif

namespace {

struct Options {
  bool slow = false;
  int threads = 1;
  std::string configs = FIDESIGN_CONFIG_DIR;
};

struct Outcome {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  bool pass() const { return failures.empty(); }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

bool within(double value, double reference, double rel) { return std::abs(value - reference) <= rel * reference; }

int pm(int v) { return v > 0 ? 1 : 0; }

// Study from a shipped config, optionally with a different variant factory per name.
StudyResult run_config_study(const Options& opt, const std::string& file,
                             const std::function<void(StudyConfig&)>& tweak = {}) {
  const RunConfig c = load_config(opt.configs + "/" + file);
  const StudySpec& st = *c.study;
  const ModelFamily family = build_family(c.model, c.base_dir);
  const int T = c.need_horizon();
  StudyConfig sc{family,
                 c.truth(),
                 T,
                 opt.slow && st.slow_reps > 0 ? st.slow_reps : st.reps,
                 st.base_seed.value_or(0),
                 {},
                 st.estimator,
                 opt.threads,
                 c.hash};
  for (const auto& v : st.variants) sc.variants.push_back(prepare_variant(v, family, c.need_theta(), T));
  if (tweak) tweak(sc);
  return run_study(sc);
}

std::string mse_line(const StudyResult& r) {
  std::string s;
  for (const auto& v : r.variants) s += (s.empty() ? "" : ", ") + v.name + " " + num(v.mse);
  return "MSE " + s + " (n=" + std::to_string(r.variants[0].n) + ")";
}

// =============================================================================
// Criteria
// =============================================================================

void oracle_equivalence(const Options&, Outcome& out) {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < 25; ++i) {
    const int K = 1 + i % 3;
    const int T = 1 + (i / 3) % 4;
    const ModelFamily f = build_random_family(9000 + i, K, 2, 2);
    const double theta = 0.2 + 0.6 * i / 24.0;
    PofiOptions o;
    o.m = T - 1;
    const PofiPolicy p = solve_pofi(f, theta, T, o);
    const double exact = exact_fi(f, theta, pofi_history_policy(p), T);
    const double best = brute_force_policy(f, theta, T).value;
    worst = std::max({worst, std::abs(p.root_value - exact), std::abs(p.root_value - best)});
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.check(worst <= 1e-9, "max deviation " + num(worst));
  out.check(secs < 60.0, "took " + num(secs) + " s");
  out.detail << "25 families, max |root - exact|, |root - brute force| = " << num(worst);
}

void lag_error(const Options&, Outcome& out) {
  // one control: the only policy is the fixed one
  const ModelFamily f = build_random_family(1, 3, 2, 1);
  const int T = 5;
  const double exact = exact_fi(f, 0.5, fixed_history_policy(0), T);
  double prev = INFINITY;
  for (int m = 0; m < T; ++m) {
    PofiOptions o;
    o.m = m;
    const double err = std::abs(exact - solve_pofi(f, 0.5, T, o).root_value);
    out.check(err <= prev + 1e-12, "error grew at m=" + std::to_string(m));
    out.detail << (m ? " " : "errors m=0..4: ") << num(err);
    prev = err;
  }
  out.check(prev <= 1e-12, "error at m=4 is " + num(prev));
}

void six_state_table(const Options&, Outcome& out) {
  const PofiPolicy p = solve_pofi(build_six_state(), 0.37, 40);
  out.check(p.long_run && p.long_run->converged, "long-run table did not settle");
  if (!out.pass()) return;
  // u_t given (y_t, y_{t-1}, u_{t-1}); observations 1/2 are indices 0/1
  const int cols[8][4] = {{1, 1, 1, 1},  {2, 1, 1, -1}, {1, 2, 1, -1},  {2, 2, 1, 1},
                          {1, 1, -1, -1}, {2, 1, -1, 1}, {1, 2, -1, 1}, {2, 2, -1, -1}};
  const int full = p.layout.full_level();
  int hits = 0;
  for (const auto& c : cols) {
    const std::int64_t z = p.layout.encode(full, {{c[1] - 1, c[0] - 1}, {pm(c[2])}});
    hits += p.long_run->table[z] == pm(c[3]);
  }
  out.check(hits == 8, std::to_string(8 - hits) + " entries differ");
  out.detail << hits << "/8 entries, settled from t=" << p.long_run->t0;
}

void adversarial_table(const Options&, Outcome& out) {
  PofiOptions o;
  o.lead_control = true;
  const PofiPolicy p = solve_pofi(build_adversarial(), 0.7, 40, o);
  out.check(p.long_run && p.long_run->converged, "long-run table did not settle");
  if (!out.pass()) return;
  // rows (U_{t-1}, Y_t), columns (U_{t-2}, Y_{t-1})
  const int keys[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  const int table[4][4] = {{1, 1, 1, -1}, {-1, -1, -1, -1}, {-1, -1, -1, -1}, {1, 1, 1, 1}};
  const int full = p.layout.full_level();
  int hits = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const HistoryWindow w{{pm(keys[c][1]), pm(keys[r][1])}, {pm(keys[c][0]), pm(keys[r][0])}};
      hits += p.long_run->table[p.layout.encode(full, w)] == pm(table[r][c]);
    }
  out.check(hits == 16, std::to_string(16 - hits) + " entries differ");
  out.detail << hits << "/16 entries, settled from t=" << p.long_run->t0;
}

void six_state_fofi(const Options&, Outcome& out) {
  const StatePolicy p = solve_fofi(build_six_state(), 0.37, 40);
  out.check(p.long_run.has_value(), "long-run table did not settle");
  if (!out.pass()) return;
  // augmented state x * 2 + y
  for (int y = 0; y < 2; ++y) {
    out.check((*p.long_run)[0 * 2 + y] == 1, "state 1 does not get +1");
    out.check((*p.long_run)[2 * 2 + y] == 0, "state 3 does not get -1");
  }
  out.detail << "state 1 -> " << ((*p.long_run)[0] ? "+1" : "-1") << ", state 3 -> "
             << ((*p.long_run)[4] ? "+1" : "-1");
}

void six_state_study(const Options& opt, Outcome& out) {
  const StudyResult r = run_config_study(opt, "six_state_study.json");
  const double pofi = r.variant("POFI").mse;
  const double random = r.variant("random").mse;
  const double fofi = r.variant("FOFI oracle-theta").mse;
  out.check(pofi < random && random < fofi, "ordering POFI < random < FOFI broken");
  out.check(within(pofi, 0.0076, 0.4), "POFI MSE outside .0076 +-40%");
  out.check(within(random, 0.0089, 0.4), "random MSE outside .0089 +-40%");
  out.check(within(fofi, 0.0121, 0.4), "FOFI MSE outside .0121 +-40%");
  out.detail << mse_line(r);
}

void adversarial_study(const Options& opt, Outcome& out) {
  const StudyResult r = run_config_study(opt, "adversarial_study.json");
  const double pofi = r.variant("POFI").mse;
  const double random = r.variant("random").mse;
  const double fofi = r.variant("FOFI oracle-theta").mse;
  out.check(pofi <= random && pofi <= fofi, "POFI is not the smallest MSE");
  out.check(within(pofi, 0.054, 0.4), "POFI MSE outside .054 +-40%");
  out.check(within(random, 0.064, 0.4), "random MSE outside .064 +-40%");
  out.check(within(fofi, 0.068, 0.4), "FOFI MSE outside .068 +-40%");
  out.detail << mse_line(r);
}

void pcr_fixed_vs_designed(const Options& opt, Outcome& out) {
  const StudyResult r = run_config_study(opt, "pcr_prior.json");
  const double fixed = r.variant("fixed u=.2").mse;
  const double pofi = r.variant("POFI uniform prior").mse;
  out.check(pofi < fixed, "POFI MSE not below fixed");
  out.check(within(fixed, 0.5734, 0.4), "fixed MSE outside .5734 +-40%");
  out.check(within(pofi, 0.3831, 0.4), "POFI MSE outside .3831 +-40%");
  out.detail << mse_line(r);
}

// Keeps the step log of every VIA run so the sweep counts can be inspected afterwards.
struct ViaLogs {
  std::mutex mu;
  std::map<std::uint64_t, std::vector<ViaStepLog>> runs;  // keyed by controller seed
  double lambda = 0.9;
};

class LoggedVia : public Controller {
 public:
  LoggedVia(std::unique_ptr<Controller> inner, std::shared_ptr<ViaLogs> sink)
      : inner_(std::move(inner)), via_(dynamic_cast<ViaController*>(inner_.get())), sink_(std::move(sink)) {
    if (!via_) throw schema_error("acceptance: VIA variant did not build a VIA controller");
    via_->keep_deltas = true;
  }
  ~LoggedVia() override {
    std::lock_guard<std::mutex> lock(sink_->mu);
    sink_->runs[seed_] = via_->log();
  }
  std::string name() const override { return inner_->name(); }
  void begin(int T, std::uint64_t seed) override {
    seed_ = seed;
    inner_->begin(T, seed);
  }
  int choose(int t, std::span<const int> y, std::span<const int> u) override { return inner_->choose(t, y, u); }
  void record(int t, int u_exec, int y_next) override { inner_->record(t, u_exec, y_next); }

 private:
  std::unique_ptr<Controller> inner_;
  ViaController* via_;
  std::shared_ptr<ViaLogs> sink_;
  std::uint64_t seed_ = 0;
};

std::shared_ptr<ViaLogs> g_via_logs;

StudyResult run_via_study(const Options& opt) {
  auto logs = std::make_shared<ViaLogs>();
  const RunConfig c = load_config(opt.configs + "/pcr_via.json");
  for (const auto& v : c.study->variants)
    if (v.type == "via") logs->lambda = v.lambda;
  const StudyResult r = run_config_study(opt, "pcr_via.json", [logs](StudyConfig& sc) {
    for (auto& v : sc.variants) {
      if (v.name.find("VIA") == std::string::npos) continue;
      auto make = v.make;
      v.make = [make, logs] { return std::make_unique<LoggedVia>(make(), logs); };
    }
  });
  g_via_logs = logs;
  return r;
}

void via_vs_prior(const Options& opt, Outcome& out) {
  const StudyResult r = run_via_study(opt);
  const double prior_only = r.variant("POFI uniform prior").mse;
  const double via = r.variant("VIA uniform prior").mse;
  out.check(via <= 1.15 * prior_only, "VIA MSE above prior-only POFI + 15%");
  out.detail << "VIA/prior-only = " << num(via / prior_only) << "; " << mse_line(r);
}

std::vector<std::vector<ViaStepLog>> via_runs_for_mechanics(const Options& opt, int count) {
  if (!g_via_logs) {
    // run on its own: only the VIA arm, first `count` replications
    auto logs = std::make_shared<ViaLogs>();
    run_config_study(opt, "pcr_via.json", [logs, count](StudyConfig& sc) {
      sc.reps = std::min(sc.reps, count);
      std::vector<VariantSpec> keep;
      for (auto& v : sc.variants) {
        if (v.name.find("VIA") == std::string::npos) continue;
        auto make = v.make;
        v.make = [make, logs] { return std::make_unique<LoggedVia>(make(), logs); };
        keep.push_back(v);
      }
      sc.variants = keep;
    });
    g_via_logs = logs;
  }
  std::vector<std::vector<ViaStepLog>> runs;
  for (auto& [seed, log] : g_via_logs->runs) {
    if (static_cast<int>(runs.size()) == count) break;
    runs.push_back(log);
  }
  return runs;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void via_mechanics(const Options& opt, Outcome& out) {
  const auto runs = via_runs_for_mechanics(opt, 20);
  const double lambda = g_via_logs->lambda;
  out.check(runs.size() == 20, "only " + std::to_string(runs.size()) + " VIA runs logged");
  int violations = 0;
  std::vector<double> ratios;
  std::vector<double> first, later;
  for (const auto& log : runs) {
    for (const auto& step : log)
      for (std::size_t n = 1; n < step.deltas.size(); ++n)
        // predictives are held in single precision, so rows sum to 1 only to ~1e-7
        violations += step.deltas[n] > lambda * (1.0 + 1e-6) * step.deltas[n - 1] + 1e-12;
    std::vector<double> tail;
    for (const auto& step : log)
      if (step.t >= 50) tail.push_back(step.sweeps);
    if (log.empty() || tail.empty()) continue;
    first.push_back(log.front().sweeps);
    later.push_back(median(tail));
    ratios.push_back(median(tail) / log.front().sweeps);
  }
  out.check(violations == 0, std::to_string(violations) + " residuals grew faster than lambda");
  const double ratio = ratios.empty() ? INFINITY : median(ratios);
  out.check(ratio <= 0.25, "median sweep ratio " + num(ratio) + " > .25");
  out.detail << "sweeps at t=0 median " << num(median(first)) << ", t>=50 median " << num(median(later))
             << ", ratio " << num(ratio);
}

void em_properties(const Options&, Outcome& out) {
  const ModelFamily f = build_six_state();
  const auto grid = theta_grid(f.domain(), 0.001);
  const double start = 0.5 * (f.domain().lo + f.domain().hi);
  int drops = 0;
  double worst = 0.0;
  for (int s = 0; s < 20; ++s) {
    RandomController c(2);
    const Trajectory t = simulate(f, 0.37, c, 1000, 500 + s);
    const EmResult r = em_estimate(f, start, t.y, t.u_exec);
    for (std::size_t i = 1; i < r.log.size(); ++i) drops += r.log[i].loglik < r.log[i - 1].loglik - 1e-10;
    worst = std::max(worst, std::abs(r.loglik - mle_grid(f, grid, t.y, t.u_exec).loglik));
  }
  out.check(drops == 0, std::to_string(drops) + " EM iterations lowered the loglikelihood");
  out.check(worst <= 1e-4, "EM vs grid loglikelihood gap " + num(worst));
  out.detail << "20 datasets, max |EM - grid| loglik " << num(worst);
}

void morris_lecar(const Options& opt, Outcome& out) {
  const StudyResult r = run_config_study(opt, "morris_lecar.json");
  const double pofi = r.variant("POFI").mse;
  const double fofi = r.variant("FOFI oracle-theta").mse;
  const double fixed = r.variant("fixed I=1.5").mse;
  out.check(pofi < fixed, "POFI MSE not below fixed I=1.5");
  out.check(fofi < fixed, "FOFI MSE not below fixed I=1.5");
  out.detail << mse_line(r);
}

void property_suites(const Options& opt, Outcome& out) {
  // stochasticity of every builtin across its domain
  PcrParams pcr;
  pcr.state.count = 40;
  pcr.obs.count = 10;
  MorrisLecarParams ml;
  ml.v_axis.count = 8;
  ml.n_axis.count = 6;
  int invalid = 0;
  for (const ModelFamily& f : {build_six_state(), build_adversarial(), build_pcr(pcr), build_morris_lecar(ml)})
    for (int i = 0; i < 20; ++i) {
      const double th = f.domain().lo + (f.domain().hi - f.domain().lo) * i / 19.0;
      invalid += !validate_model(f.eval(th)).ok();
    }
  out.check(invalid == 0, std::to_string(invalid) + " invalid model slices");

  // window encode / decode round trips
  int bad_windows = 0;
  const int shapes[][4] = {{2, 2, 0, 0}, {2, 2, 2, 0}, {3, 2, 2, 0}, {2, 3, 1, 1}, {3, 2, 2, 1}};
  for (const auto& s : shapes) {
    const WindowLayout w(s[0], s[1], s[2], s[3] != 0);
    for (int level = 0; level <= w.full_level(); ++level)
      for (std::int64_t z = 0; z < w.size(level); ++z) bad_windows += w.encode(level, w.decode(level, z)) != z;
  }
  out.check(bad_windows == 0, std::to_string(bad_windows) + " window round trips failed");

  // augmentation preserves the law of the observations
  const EmissionMask masks[] = {{true, false, true}, {false, true, true}, {true, true, true}, {false, true, false}};
  double worst = 0.0;
  int instance = 0;
  for (const EmissionMask& mask : masks)
    for (int K = 1; K <= 3; ++K) {
      const PomdpModel raw = random_model(700 + instance++, K, 2, 2, mask);
      const PomdpModel aug = augment_autoregressive(raw).model;
      for_each_sequence(3, 2, [&](std::span<const int> u) {
        for_each_sequence(4, 2, [&](std::span<const int> y) {
          worst = std::max(worst, std::abs(path_sum(raw, y, u) - path_sum(aug, y, u)));
        });
      });
    }
  out.check(worst <= 1e-12, "augmentation changed path probabilities by " + num(worst));

  // study reruns are bit-identical, whatever the thread count
  auto small = [&](int threads) {
    Options o = opt;
    o.threads = threads;
    return run_config_study(o, "six_state_study.json", [](StudyConfig& sc) {
      sc.reps = 8;
      sc.T = 300;
    });
  };
  const StudyResult a = small(1), b = small(1), c = small(3);
  bool same = true;
  for (std::size_t v = 0; v < a.variants.size(); ++v)
    same = same && a.variants[v].estimates == b.variants[v].estimates &&
           a.variants[v].estimates == c.variants[v].estimates && a.variants[v].mse == c.variants[v].mse;
  out.check(same, "study reruns differ");
  out.detail << "models, windows, augmentation (max gap " << num(worst) << "), determinism";
}

struct Criterion {
  int id;
  const char* name;
  void (*run)(const Options&, Outcome&);
};

const Criterion kCriteria[] = {
    {1, "oracle-equivalence", oracle_equivalence},
    {2, "lag-error-monotone", lag_error},
    {3, "six-state-long-run-table", six_state_table},
    {4, "adversarial-long-run-table", adversarial_table},
    {5, "six-state-fofi-long-run", six_state_fofi},
    {6, "six-state-study", six_state_study},
    {7, "adversarial-study", adversarial_study},
    {8, "pcr-fixed-vs-designed", pcr_fixed_vs_designed},
    {9, "pcr-via-vs-prior-only", via_vs_prior},
    {10, "via-mechanics", via_mechanics},
    {11, "em-properties", em_properties},
    {12, "morris-lecar-direction", morris_lecar},
    {13, "property-suites", property_suites},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fidesign acceptance criteria"};
  Options opt;
  std::vector<int> only;
  app.add_flag("--slow", opt.slow, "full-scale replication counts");
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 13));
  app.add_option("--threads", opt.threads, "worker threads for studies")->check(CLI::PositiveNumber);
  app.add_option("--configs", opt.configs, "directory holding the study configs");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> chosen(only.begin(), only.end());
  int failed = 0;
  for (const Criterion& c : kCriteria) {
    if (!chosen.empty() && !chosen.count(c.id)) continue;
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(opt, out);
    } catch (const std::exception& e) {
      out.check(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string text = out.detail.str();
    for (std::size_t i = 0; i < out.failures.size(); ++i) text += (i ? "; " : " | failed: ") + out.failures[i];
    std::printf("%s %2d %-28s %s (%.1f s)\n", out.pass() ? "PASS" : "FAIL", c.id, c.name, text.c_str(), secs);
    std::fflush(stdout);
    failed += !out.pass();
  }
  return std::min(failed, 100);
}
