// Config schema, model files and the command-line tool end to end.
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <gtest/gtest.h>
#include <sstream>

#include "fidesign/config.hpp"
#include "fidesign/discretize.hpp"
#include "fidesign/error.hpp"
#include "fidesign/model_io.hpp"

using namespace fidesign;
namespace fs = std::filesystem;

#ifndef FIDESIGN_CLI
#error "FIDESIGN_CLI must name the command-line binary"
#endif

namespace {

struct Proc {
  int code = -1;
  std::string out;
};

Proc run(const std::string& args, const std::string& stdin_text = "") {
  const fs::path in = fs::temp_directory_path() / ("fidesign_stdin_" + std::to_string(::getpid()));
  {
    std::ofstream f(in);
    f << stdin_text;
  }
  const std::string cmd = std::string(FIDESIGN_CLI) + " " + args + " < " + in.string() + " 2>&1";
  Proc r;
  FILE* p = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  fs::remove(in);
  return r;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("fidesign_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name) << text;
    return (path_ / name).string();
  }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

int schema_kind(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return static_cast<int>(e.kind());
  }
  return -1;
}

std::string schema_message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

const char* kSixStudy = R"({
  "model": {"builtin": "six_state"},
  "theta": 0.37,
  "horizon": 300,
  "study": {"reps": 6, "base_seed": 7,
            "variants": [{"type": "pofi", "name": "POFI"}, {"type": "random"}]}
})";

}  // namespace

// =============================================================================
// Config schema
// =============================================================================

TEST(Config, ParsesFullDocument) {
  const RunConfig c = parse_config(R"({
    "model": {"builtin": "pcr", "params": {"state": {"count": 30}}},
    "theta": {"grid": [1.7, 4.5, 8.0], "weights": [0.25, 0.5, 0.25]},
    "true_theta": 4.2,
    "solver": {"type": "via", "lambda": 0.8, "epsilon": 1e-7},
    "horizon": 20,
    "study": {"reps": 3, "base_seed": 1, "estimator": {"type": "em", "tol": 1e-6}},
    "output": "x"
  })");
  ASSERT_TRUE(c.theta && c.theta->is_prior);
  EXPECT_EQ(c.theta->prior.weights[1], 0.5);
  EXPECT_EQ(c.solver->lambda, 0.8);
  EXPECT_EQ(c.truth(), 4.2);
  EXPECT_EQ(c.study->estimator.kind, EstimatorKind::Em);
  EXPECT_EQ(build_family(c.model).K(), 30);
}

TEST(Config, MissingHorizonNamesKey) {
  const RunConfig c = parse_config(R"({"model": {"builtin": "six_state"}, "theta": 0.37})");
  try {
    c.need_horizon();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
    EXPECT_NE(std::string(e.what()).find("horizon"), std::string::npos);
  }
}

TEST(Config, UnknownKeyRejectedWithPath) {
  const std::string msg = schema_message(R"({"model": {"builtin": "six_state"}, "study": {"reps": 2, "seeds": 3}})");
  EXPECT_NE(msg.find("study.seeds"), std::string::npos) << msg;
  EXPECT_NE(schema_message(R"({"model": {"builtin": "six_state"}, "colour": 1})").find("colour"), std::string::npos);
}

TEST(Config, SchemaViolations) {
  const int schema = static_cast<int>(ErrorKind::Schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "study": {"reps": 0}})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "horizon": 0})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "horizon": 2.5})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "theta": {"grid": [0.3, 0.1]}})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "theta": {"grid": [0.1, 0.3], "weights": [1, 1]}})"),
            schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "solver": {"type": "magic"}})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "solver": {"type": "via", "lambda": 1.0}})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"}, "solver": {"type": "pofi", "m": 3}, "horizon": 3})"),
            schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state", "file": "a.json"}})"), schema);
  EXPECT_EQ(schema_kind(R"({"model": {"builtin": "six_state"})"), schema);
  EXPECT_EQ(schema_kind(R"({"theta": 0.3})"), schema);
}

TEST(Config, UnknownBuiltinAndParams) {
  EXPECT_THROW(build_family(parse_config(R"({"model": {"builtin": "lorenz"}})").model), Error);
  EXPECT_THROW(build_family(parse_config(R"({"model": {"builtin": "pcr", "params": {"bee": 2}}})").model), Error);
}

TEST(Config, HashIgnoresFormatting) {
  const RunConfig a = parse_config(R"({"model": {"builtin": "six_state"}, "horizon": 3})");
  const RunConfig b = parse_config("{\n  \"horizon\" : 3,\n  \"model\":{\"builtin\":\"six_state\"}}");
  const RunConfig c = parse_config(R"({"model": {"builtin": "six_state"}, "horizon": 4})");
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(a.hash, c.hash);
}

TEST(Config, FixedControlByLabelOrIndex) {
  const ModelFamily f = build_pcr();
  EXPECT_EQ(resolve_control(f, "0.2"), 1);
  EXPECT_EQ(resolve_control(f, "#5"), 5);
  EXPECT_THROW(resolve_control(f, "0.3"), Error);
}

// =============================================================================
// Model files
// =============================================================================

TEST(ModelFile, RoundTripBuiltinsBitExact) {
  PcrParams pcr;
  pcr.state.count = 25;
  pcr.obs.count = 8;
  MorrisLecarParams ml;
  ml.v_axis.count = 6;
  ml.n_axis.count = 5;
  const std::vector<std::pair<ModelFamily, double>> cases{
      {build_six_state(), 0.37}, {build_adversarial(), 0.7}, {build_pcr(pcr), 4.2}, {build_morris_lecar(ml), 4.4}};
  for (const auto& [family, theta] : cases) {
    const std::vector<double> thetas{theta};
    const std::string text = model_file_text(family, thetas);
    const ModelFamily back = parse_model_text(text);
    const PomdpModel a = family.eval(theta);
    const PomdpModel b = back.eval(theta);
    EXPECT_EQ(a.transition, b.transition) << family.name();
    EXPECT_EQ(a.emission, b.emission);
    EXPECT_EQ(a.initial_state, b.initial_state);
    EXPECT_EQ(a.randomizer, b.randomizer);
    EXPECT_EQ(a.controls.labels, b.controls.labels);
    EXPECT_EQ(model_file_text(back, thetas), text);
  }
}

TEST(ModelFile, ExportedSixStateValidates) {
  const std::vector<double> thetas{0.37};
  const ModelFamily back = parse_model_text(model_file_text(build_six_state(), thetas));
  EXPECT_TRUE(validate_model(back.eval(0.37)).ok());
  EXPECT_EQ(back.K(), 6);
}

TEST(ModelFile, InterpolatesBetweenSlices) {
  const ModelFamily f = build_six_state();
  const std::vector<double> thetas{0.2, 0.4};
  const ModelFamily back = parse_model_text(model_file_text(f, thetas));
  // six-state entries are affine in p
  const PomdpModel mid = back.eval(0.3);
  const PomdpModel exact = f.eval(0.3);
  for (std::size_t i = 0; i < mid.transition.size(); ++i) EXPECT_NEAR(mid.transition[i], exact.transition[i], 1e-12);
  EXPECT_EQ(back.eval(0.0).transition, f.eval(0.2).transition);
}

TEST(ModelFile, CorruptedFileReportsOffset) {
  const std::vector<double> thetas{0.37};
  std::string text = model_file_text(build_six_state(), thetas);
  const std::size_t cut = text.find("\"emission\"");
  text.insert(cut, "@@");
  try {
    parse_model_text(text, "m.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Schema);
    EXPECT_NE(std::string(e.what()).find("byte offset " + std::to_string(cut + 1)), std::string::npos) << e.what();
  }
}

TEST(ModelFile, StructuralErrors) {
  const std::vector<double> thetas{0.37};
  const std::string good = model_file_text(build_six_state(), thetas);
  std::string bad_key = good;
  bad_key.replace(bad_key.find("\"randomizer\""), 12, "\"randomiser\"");
  EXPECT_THROW(parse_model_text(bad_key), Error);
  std::string bad_prob = good;
  bad_prob.replace(bad_prob.find("\"initial_state\": [") + 18, 1, "7");
  EXPECT_THROW(parse_model_text(bad_prob), Error);
}

// =============================================================================
// Command-line tool
// =============================================================================

TEST(Cli, SolveSixStatePrintsLongRun) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "six_state"}, "theta": 0.37,
    "solver": {"type": "pofi", "m": 1}, "horizon": 40})");
  const Proc r = run("solve --config " + cfg + " --out " + (d.path() / "o").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("y=(1,0) u=(+1) -> -1"), std::string::npos) << r.out;
  const std::string csv = slurp(d.path() / "o" / "policy.csv");
  EXPECT_EQ(csv.substr(0, 35), "t,window_index,control_index,value\n");
  EXPECT_NE(slurp(d.path() / "o" / "policy.json").find("\"wall_time_s\""), std::string::npos);
}

TEST(Cli, SolveFofiAndVia) {
  TempDir d;
  const std::string fofi = d.write("f.json", R"({"model": {"builtin": "six_state"}, "theta": 0.37,
    "solver": {"type": "fofi"}, "horizon": 40})");
  Proc r = run("solve --config " + fofi + " --out " + (d.path() / "f").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(d.path() / "f" / "policy.csv").substr(0, 34), "t,state_index,control_index,value\n");
  const std::string via = d.write("v.json", R"({"model": {"builtin": "adversarial"},
    "theta": {"grid": [0.2, 0.7, 1.2]}, "solver": {"type": "via", "lead_control": true}, "horizon": 10})");
  r = run("solve --config " + via + " --out " + (d.path() / "v").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(slurp(d.path() / "v" / "policy.csv").substr(0, 33), "window_index,control_index,value\n");
}

TEST(Cli, MissingHorizonExitsWithSchemaCode) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "six_state"}, "theta": 0.37,
    "solver": {"type": "pofi"}})");
  const Proc r = run("solve --config " + cfg + " --out " + (d.path() / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("horizon"), std::string::npos);
  EXPECT_FALSE(fs::exists(d.path() / "o"));
}

TEST(Cli, ZeroRepsIsSchemaError) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "six_state"}, "theta": 0.37, "horizon": 10,
    "study": {"reps": 0, "variants": [{"type": "random"}]}})");
  const Proc r = run("study --config " + cfg + " --out " + (d.path() / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(d.path() / "o" / "study.csv"));
}

TEST(Cli, BudgetGuardExitCode) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "pcr"}, "theta": 4.2,
    "solver": {"type": "pofi", "m": 4}, "horizon": 200})");
  const Proc r = run("solve --config " + cfg + " --out " + (d.path() / "o").string());
  EXPECT_EQ(r.code, 3) << r.out;
  EXPECT_NE(r.out.find("L^(m+1)"), std::string::npos);
  EXPECT_FALSE(fs::exists(d.path() / "o" / "policy.csv"));
}

TEST(Cli, NumericalErrorExitCode) {
  TempDir d;
  // the estimator grid sits where the simulated data are impossible
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "adversarial", "params": {"randomize": 1.0}},
    "theta": 0.7, "horizon": 50,
    "study": {"reps": 2, "estimator": {"type": "mle_grid", "grid": [0.7]}, "variants": [{"type": "fixed", "u": "+1"}]}})");
  const Proc ok = run("study --config " + cfg + " --out " + (d.path() / "o").string());
  EXPECT_EQ(ok.code, 0) << ok.out;
  const std::string broken = d.write("m.json", R"({"format": "fidesign-model", "version": 1, "K": 1, "L": 2,
    "controls": ["a"], "mask": {"x_next": true}, "theta_domain": [0, 1],
    "slices": [{"theta": 0, "transition": [1], "emission": [1, 0], "initial_state": [1], "initial_obs": [0.5, 0.5],
                "randomizer": [1]},
               {"theta": 1, "transition": [1], "emission": [0, 1], "initial_state": [1], "initial_obs": [0.5, 0.5],
                "randomizer": [1]}]})");
  const std::string cfg2 = d.write("c2.json", R"({"model": {"file": "m.json"}, "theta": 0.0, "true_theta": 0.0,
    "horizon": 5, "study": {"reps": 1, "estimator": {"type": "mle_grid", "grid": [1.0]},
    "variants": [{"type": "fixed", "u": "a"}]}})");
  const Proc bad = run("study --config " + cfg2 + " --out " + (d.path() / "p").string());
  EXPECT_EQ(bad.code, 4) << bad.out;
  EXPECT_NE(bad.out.find("replication 0"), std::string::npos) << bad.out;
  EXPECT_FALSE(fs::exists(d.path() / "p" / "study.csv"));
}

TEST(Cli, StudyBytesStableAcrossRunsAndThreads) {
  TempDir d;
  const std::string cfg = d.write("c.json", kSixStudy);
  const Proc a = run("study --config " + cfg + " --out " + (d.path() / "a").string());
  const Proc b = run("study --config " + cfg + " --threads 3 --out " + (d.path() / "b").string());
  ASSERT_EQ(a.code, 0) << a.out;
  ASSERT_EQ(b.code, 0) << b.out;
  EXPECT_EQ(slurp(d.path() / "a" / "study.csv"), slurp(d.path() / "b" / "study.csv"));
  EXPECT_EQ(a.out, b.out);
  const Proc c = run("study --config " + cfg + " --seed 8 --out " + (d.path() / "c").string());
  EXPECT_NE(slurp(d.path() / "a" / "study.csv"), slurp(d.path() / "c" / "study.csv"));
}

TEST(Cli, ExportModelRoundTrip) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "six_state"}, "theta": 0.37})");
  ASSERT_EQ(run("export-model --config " + cfg + " --out " + d.path().string()).code, 0);
  const std::string cfg2 = d.write("c2.json", R"({"model": {"file": "model.json"}})");
  const Proc v = run("validate --config " + cfg2);
  EXPECT_EQ(v.code, 0) << v.out;
  EXPECT_NE(v.out.find("valid"), std::string::npos);
  const ModelFamily back = load_model_file((d.path() / "model.json").string());
  EXPECT_EQ(back.eval(0.37).transition, build_six_state().eval(0.37).transition);
}

TEST(Cli, ViaRunWritesLog) {
  TempDir d;
  const std::string cfg = d.write("c.json", R"({"model": {"builtin": "adversarial"},
    "theta": {"grid": [0.2, 0.7, 1.2]}, "true_theta": 0.7,
    "solver": {"type": "via", "lead_control": true}, "horizon": 15})");
  const Proc r = run("via-run --config " + cfg + " --seed 4 --out " + d.path().string());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string log = slurp(d.path() / "via_run.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "t,control,observation,sweeps,posterior_w1,posterior_w2,posterior_w3");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 16);
}

// =============================================================================
// Interactive play
// =============================================================================

namespace {

const char* kPlay = R"({"model": {"builtin": "adversarial"},
  "theta": {"grid": {"lower": -3, "upper": 3, "count": 13}},
  "solver": {"type": "pofi", "m": 1, "lead_control": true}, "horizon": 12})";

double posterior_mean(const std::string& transcript) {
  std::istringstream in(transcript.substr(transcript.find("posterior:")));
  std::string line;
  std::getline(in, line);
  double mean = 0.0;
  std::string word;
  double th, w;
  while (in >> word >> th >> w) mean += th * w;
  return mean;
}

}  // namespace

TEST(Play, ScriptedSessionIsDeterministic) {
  TempDir d;
  const std::string cfg = d.write("c.json", kPlay);
  std::string script;
  for (int i = 0; i < 13; ++i) script += (i % 3 ? "left\n" : "right\n");
  const Proc a = run("play --config " + cfg + " --seed 5", script);
  const Proc b = run("play --config " + cfg + " --seed 5", script);
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("Round 12: Row plays"), std::string::npos);
  EXPECT_NE(a.out.find("theta_hat"), std::string::npos);
}

TEST(Play, InvalidInputReprompts) {
  TempDir d;
  const std::string cfg = d.write("c.json", kPlay);
  const Proc r = run("play --config " + cfg, "right\nup\nleft\n");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("please answer left or right"), std::string::npos);
  EXPECT_NE(r.out.find("Rounds played: 1"), std::string::npos) << r.out;
}

TEST(Play, EarlyEofGivesPartialEstimate) {
  TempDir d;
  const std::string cfg = d.write("c.json", kPlay);
  const Proc r = run("play --config " + cfg, "right\nright\nleft\n");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("Rounds played: 2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("theta_hat"), std::string::npos);
}

TEST(Play, ImmediateEofHasNoEstimate) {
  TempDir d;
  const std::string cfg = d.write("c.json", kPlay);
  const Proc r = run("play --config " + cfg, "");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("No plays recorded"), std::string::npos);
  EXPECT_EQ(r.out.find("theta_hat"), std::string::npos);
}

TEST(Play, PersistentOpponentMovesPosterior) {
  // Always right is Gamble-safe kept for good; P(S' = -1 | S = +1) grows with theta,
  // so persistence pulls the posterior toward low theta.
  TempDir d;
  const std::string cfg = d.write("c.json", kPlay);
  std::string script;
  for (int i = 0; i < 13; ++i) script += "right\n";
  for (int seed : {1, 2, 3}) {
    const Proc r = run("play --config " + cfg + " --seed " + std::to_string(seed), script);
    ASSERT_EQ(r.code, 0);
    EXPECT_LT(posterior_mean(r.out), -0.5) << r.out;
  }
}
