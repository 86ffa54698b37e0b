// Command-line front end: solve, study, via-run, play, export-model, validate.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fidesign/config.hpp"
#include "fidesign/error.hpp"
#include "fidesign/estimation.hpp"
#include "fidesign/fofi.hpp"
#include "fidesign/model_io.hpp"
#include "fidesign/pofi.hpp"
#include "fidesign/study.hpp"
#include "fidesign/via.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fidesign;

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 1;
  bool slow = false;
};

std::string num(double x) { return format_number(x); }

fs::path out_dir(const Flags& f, const RunConfig& c) {
  fs::path d = !f.out.empty() ? fs::path(f.out) : !c.output.empty() ? fs::path(c.output) : fs::path(".");
  return d;
}

void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec) throw schema_error("cannot create output directory '" + d.string() + "': " + ec.message());
}

json theta_json(const ThetaSpec& t) {
  if (!t.is_prior) return t.value;
  return json{{"grid", t.prior.grid}, {"weights", t.prior.weights}};
}

std::string window_text(const WindowLayout& lay, int level, std::int64_t z, const ControlSet& labels) {
  const HistoryWindow w = lay.decode(level, z);
  std::ostringstream os;
  os << "y=(";
  for (std::size_t i = w.obs.size(); i-- > 0;) os << w.obs[i] << (i ? "," : "");
  os << ") u=(";
  for (std::size_t i = w.ctrl.size(); i-- > 0;) os << labels.labels[w.ctrl[i]] << (i ? "," : "");
  os << ")";
  return os.str();
}

int cmd_solve(const Flags& f) {
  const RunConfig c = load_config(f.config);
  const ModelFamily family = build_family(c.model, c.base_dir);
  const ThetaSpec& theta = c.need_theta();
  const SolverSpec& s = c.need_solver();
  const int T = c.need_horizon();
  const ThetaPosterior prior = theta.as_prior();
  prior.validate(&family.domain());
  const ControlSet labels = family.eval(prior.grid[0]).controls;
  const auto t0 = std::chrono::steady_clock::now();

  std::ostringstream csv;
  json meta{{"solver", s.type}, {"K", family.K()}, {"L", family.L()}, {"l", family.num_controls()},
            {"T", T}, {"theta", theta_json(theta)}, {"config_hash", c.hash}, {"model", family.name()}};
  std::ostringstream summary;
  if (s.type == "pofi") {
    PofiOptions opts;
    opts.m = s.m;
    opts.lead_control = s.lead_control;
    const PofiPolicy pol = solve_pofi(family, prior, T, opts);
    csv << "t,window_index,control_index,value\n";
    for (int t = 0; t < T; ++t)
      for (std::size_t z = 0; z < pol.tables[t].size(); ++z)
        csv << t << ',' << z << ',' << pol.tables[t][z] << ',' << num(pol.values[t][z]) << '\n';
    meta["m"] = s.m;
    meta["lead_control"] = s.lead_control;
    meta["nu"] = pol.nu;
    meta["root_value"] = pol.root_value;
    summary << "root value (Fisher information to go at t=0): " << num(pol.root_value) << "\n";
    if (pol.long_run && pol.long_run->converged) {
      meta["long_run"] = json{{"converged", true}, {"t0", pol.long_run->t0}, {"table", pol.long_run->table}};
      const int full = pol.layout.full_level();
      summary << "long-run policy from t=" << pol.long_run->t0 << " (window: newest first)\n";
      for (std::size_t z = 0; z < pol.long_run->table.size(); ++z)
        summary << "  " << window_text(pol.layout, full, static_cast<std::int64_t>(z), labels) << " -> "
                << labels.labels[pol.long_run->table[z]] << "\n";
    } else {
      meta["long_run"] = json{{"converged", false}};
      summary << "no long-run policy within the horizon\n";
    }
  } else if (s.type == "fofi") {
    const StatePolicy pol = solve_fofi(family, prior, T);
    csv << "t,state_index,control_index,value\n";
    for (int t = 0; t < T; ++t)
      for (std::size_t x = 0; x < pol.tables[t].size(); ++x)
        csv << t << ',' << x << ',' << pol.tables[t][x] << ',' << num(pol.values[t][x]) << '\n';
    if (pol.long_run) {
      meta["long_run"] = json{{"converged", true}, {"t0", pol.long_run_t0}, {"table", *pol.long_run}};
      summary << "long-run state policy from t=" << pol.long_run_t0 << "\n";
      for (std::size_t x = 0; x < pol.long_run->size(); ++x)
        summary << "  state " << x << " -> " << labels.labels[(*pol.long_run)[x]] << "\n";
    } else {
      meta["long_run"] = json{{"converged", false}};
      summary << "no long-run policy within the horizon\n";
    }
  } else if (s.type == "via") {
    ViaOptions opts;
    opts.lambda = s.lambda;
    opts.epsilon = s.epsilon;
    opts.m = s.m;
    opts.lead_control = s.lead_control;
    const ViaProblem problem(family, prior.grid, opts);
    ViaState st;
    st.lambda = s.lambda;
    st.epsilon = s.epsilon;
    const std::vector<int> pol = via_solve(st, prior, problem);
    csv << "window_index,control_index,value\n";
    for (std::size_t z = 0; z < pol.size(); ++z) csv << z << ',' << pol[z] << ',' << num(st.v[z]) << '\n';
    meta["m"] = s.m;
    meta["lambda"] = s.lambda;
    meta["epsilon"] = s.epsilon;
    meta["sweeps"] = st.sweeps;
    summary << "value iteration converged in " << st.sweeps << " sweeps\n";
  } else {
    throw schema_error("solve: solver type '" + s.type + "' has no policy to compute");
  }
  meta["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = out_dir(f, c);
  ensure_dir(dir);
  write_text_file((dir / "policy.csv").string(), csv.str());
  write_text_file((dir / "policy.json").string(), meta.dump(1) + "\n");
  std::cout << summary.str() << "wrote " << (dir / "policy.csv").string() << "\n";
  return 0;
}

int cmd_study(const Flags& f) {
  const RunConfig c = load_config(f.config);
  if (!c.study) throw schema_error("config: missing required key 'study'");
  const StudySpec& st = *c.study;
  const ModelFamily family = build_family(c.model, c.base_dir);
  const int T = c.need_horizon();
  const ThetaSpec& theta = c.need_theta();
  StudyConfig sc{family, c.truth(), T, f.slow && st.slow_reps > 0 ? st.slow_reps : st.reps,
                 f.seed ? *f.seed : st.base_seed.value_or(0), {}, st.estimator, f.threads, c.hash};
  std::vector<SolverSpec> variants = st.variants;
  if (variants.empty()) variants.push_back(c.need_solver());
  for (const auto& v : variants) sc.variants.push_back(prepare_variant(v, family, theta, T));
  const StudyResult r = run_study(sc);

  std::ostringstream csv;
  write_study_csv(csv, r);
  const fs::path dir = out_dir(f, c);
  ensure_dir(dir);
  write_text_file((dir / "study.csv").string(), csv.str());
  if (st.detail) {
    std::ostringstream d;
    write_detail_csv(d, r);
    write_text_file((dir / "study_detail.csv").string(), d.str());
  }
  std::printf("%-20s %6s %14s %14s %14s\n", "variant", "n", "bias", "st. dev.", "MSE");
  for (const auto& v : r.variants)
    std::printf("%-20s %6d %14s %14s %14s\n", v.name.c_str(), v.n, num(v.bias).c_str(), num(v.sd).c_str(),
                num(v.mse).c_str());
  std::printf("true theta %s, T=%d, seed %llu\n", num(sc.true_theta).c_str(), T,
              static_cast<unsigned long long>(sc.base_seed));
  return 0;
}

ViaOptions via_options(const SolverSpec& s) {
  ViaOptions o;
  o.lambda = s.lambda;
  o.epsilon = s.epsilon;
  o.m = s.m;
  o.lead_control = s.lead_control;
  return o;
}

int cmd_via_run(const Flags& f) {
  const RunConfig c = load_config(f.config);
  const ModelFamily family = build_family(c.model, c.base_dir);
  const SolverSpec& s = c.need_solver();
  if (s.type != "via") throw schema_error("via-run: 'solver.type' must be via");
  const ThetaPosterior prior = c.need_theta().as_prior();
  prior.validate(&family.domain());
  const int T = c.need_horizon();
  const double truth = c.truth();
  const std::uint64_t seed = f.seed.value_or(0);
  auto problem = std::make_shared<const ViaProblem>(family, prior.grid, via_options(s));
  const AdaptiveRun run = adaptive_run(family, problem, prior, T, truth, seed);

  std::ostringstream csv;
  csv << "t,control,observation,sweeps";
  for (int g = 0; g < prior.size(); ++g) csv << ",posterior_w" << g + 1;
  csv << '\n';
  for (const auto& e : run.log) {
    csv << e.t << ',' << e.control << ',' << run.trajectory.y[e.t] << ',' << e.sweeps;
    for (double w : e.posterior) csv << ',' << num(w);
    csv << '\n';
  }
  const fs::path dir = out_dir(f, c);
  ensure_dir(dir);
  write_text_file((dir / "via_run.csv").string(), csv.str());
  std::printf("final posterior (true theta %s):\n", num(truth).c_str());
  for (int g = 0; g < prior.size(); ++g)
    std::printf("  theta %-10s %s\n", num(run.final_posterior.grid[g]).c_str(),
                num(run.final_posterior.weights[g]).c_str());
  std::printf("posterior mean %s\n", num(run.final_posterior.mean()).c_str());
  return 0;
}

int parse_play(const std::string& line, int L) {
  std::string s;
  for (char ch : line)
    if (!std::isspace(static_cast<unsigned char>(ch))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (L == 2) {
    if (s == "left" || s == "l" || s == "-1") return 0;
    if (s == "right" || s == "r" || s == "+1" || s == "1") return 1;
    return -1;
  }
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size() && v >= 0 && v < L) return v;
  } catch (...) {
  }
  return -1;
}

int cmd_play(const Flags& f) {
  const RunConfig c = load_config(f.config);
  const ModelFamily family = build_family(c.model, c.base_dir);
  const SolverSpec& s = c.need_solver();
  const int T = c.need_horizon();
  const ThetaSpec& theta = c.need_theta();
  ThetaPosterior post = theta.is_prior ? theta.prior : ThetaPosterior::uniform(theta_grid(family.domain(), 0.5));
  post.validate(&family.domain());
  std::unique_ptr<Controller> ctrl;
  if (s.type == "via") {
    auto problem = std::make_shared<const ViaProblem>(family, post.grid, via_options(s));
    ctrl = std::make_unique<ViaController>(problem, post);
  } else if (s.type == "pofi" || s.type == "fixed" || s.type == "random") {
    ctrl = prepare_variant(s, family, theta, T).make();
  } else {
    throw schema_error("play: 'solver.type' must be pofi, via, fixed or random");
  }
  std::vector<PomdpModel> models;
  for (double th : post.grid) models.push_back(family.eval(th));
  const PomdpModel& ref = models[0];
  const int L = ref.L;
  const int l = ref.num_controls();
  const std::uint64_t seed = f.seed.value_or(0);
  Rng rng(mix64(seed ^ 0x706c6179ULL));
  ctrl->begin(T, mix64(seed ^ 0x636f6e74726f6cULL));
  MixtureFilter filter(models, post);

  std::vector<int> y;
  std::vector<int> u;
  auto read_play = [&](const std::string& prompt) -> int {
    for (;;) {
      std::cout << prompt << std::flush;
      std::string line;
      if (!std::getline(std::cin, line)) {
        std::cout << "\n";
        return -2;
      }
      const int v = parse_play(line, L);
      if (v >= 0) return v;
      std::cout << (L == 2 ? "please answer left or right\n" : "please answer an observation index\n");
    }
  };
  std::cout << "You are the Column player; " << T << " rounds.\n";
  int first = read_play("Your opening play: ");
  if (first >= 0) {
    y.push_back(first);
    filter.start(first);
    for (int t = 0; t < T; ++t) {
      const int w = ctrl->choose(t, y, u);
      const int executed = rng.categorical(std::span<const double>(ref.randomizer).subspan(static_cast<std::size_t>(w) * l, l));
      std::cout << "Round " << t + 1 << ": Row plays " << ref.controls.labels[executed] << "\n";
      const int yn = read_play("Your play: ");
      if (yn < 0) break;
      u.push_back(executed);
      y.push_back(yn);
      ctrl->record(t, executed, yn);
      filter.step(executed, yn);
    }
  }
  if (y.empty()) {
    std::cout << "No plays recorded; no estimate.\n";
    return 0;
  }
  const GridEstimate est = mle_grid(models, post.grid, y, u);
  std::cout << "Rounds played: " << u.size() << "\n";
  std::cout << "theta_hat (grid maximum likelihood): " << num(est.theta) << "\n";
  std::cout << "posterior:\n";
  for (int g = 0; g < filter.posterior().size(); ++g)
    std::cout << "  theta " << num(filter.posterior().grid[g]) << "  " << num(filter.posterior().weights[g]) << "\n";
  return 0;
}

int cmd_export_model(const Flags& f) {
  const RunConfig c = load_config(f.config);
  const ModelFamily family = build_family(c.model, c.base_dir);
  std::vector<double> thetas;
  if (c.theta)
    thetas = c.theta->as_prior().grid;
  else
    thetas = {family.domain().lo, family.domain().hi};
  for (double th : thetas)
    if (!family.domain().contains(th)) throw schema_error("export-model: theta " + num(th) + " outside the domain");
  const std::string text = model_file_text(family, thetas);
  const fs::path dir = out_dir(f, c);
  ensure_dir(dir);
  write_text_file((dir / "model.json").string(), text);
  std::cout << "wrote " << (dir / "model.json").string() << " (" << thetas.size() << " slices)\n";
  return 0;
}

int cmd_validate(const Flags& f) {
  const RunConfig c = load_config(f.config);
  const ModelFamily family = build_family(c.model, c.base_dir);
  const ThetaDomain& d = family.domain();
  std::vector<double> thetas;
  for (int i = 0; i < 20; ++i) thetas.push_back(d.lo + (d.hi - d.lo) * i / 19.0);
  if (c.theta)
    for (double th : c.theta->as_prior().grid) thetas.push_back(th);
  int bad = 0;
  for (double th : thetas) {
    if (!d.contains(th)) {
      std::cout << "theta " << num(th) << ": outside the domain [" << num(d.lo) << ", " << num(d.hi) << "]\n";
      ++bad;
      continue;
    }
    const ValidationReport rep = validate_model(family.eval(th));
    if (!rep.ok()) {
      std::cout << "theta " << num(th) << ": " << rep.to_string() << "\n";
      ++bad;
    }
  }
  std::cout << family.name() << ": K=" << family.K() << " L=" << family.L() << " l=" << family.num_controls()
            << ", " << thetas.size() << " theta values checked, " << (bad ? "INVALID" : "valid") << "\n";
  return bad ? 2 : 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Budget:
      return 3;
    case ErrorKind::Numerical:
      return 4;
    default:
      return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fisher-information experimental design for partially observed controlled Markov models"};
  app.require_subcommand(1);
  Flags flags;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed for all randomness");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--threads", flags.threads, "Worker threads for studies")->check(CLI::PositiveNumber);
    sub->add_flag("--slow", flags.slow, "Full-scale replication counts");
  };
  struct Cmd {
    const char* name;
    const char* help;
    int (*fn)(const Flags&);
  };
  const Cmd cmds[] = {{"solve", "Solve a POFI, FOFI or VIA policy and write it as CSV", cmd_solve},
                      {"study", "Run a Monte Carlo policy comparison", cmd_study},
                      {"via-run", "Simulate one adaptive run under value iteration", cmd_via_run},
                      {"play", "Play the Column side of the adversarial game", cmd_play},
                      {"export-model", "Write the model tensors to a model file", cmd_export_model},
                      {"validate", "Check the model's stochasticity invariants", cmd_validate}};
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_common(sub);
    subs.emplace_back(sub, &c);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  for (auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) flags.seed = seed;
    try {
      return cmd->fn(flags);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return exit_code(e.kind());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
  }
  return 2;
}
