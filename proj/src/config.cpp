#include "fidesign/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fidesign/discretize.hpp"
#include "fidesign/error.hpp"
#include "fidesign/fofi.hpp"
#include "fidesign/model_io.hpp"
#include "fidesign/pofi.hpp"
#include "fidesign/via.hpp"

namespace fidesign {

using nlohmann::json;

namespace {

// Typed access to one JSON object that remembers which keys were read, so that
// leftovers can be rejected as unknown.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw schema_error(where() + " must be an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string key_path(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }

  const json& raw(const std::string& k) {
    if (!j_.contains(k)) throw schema_error("config: missing required key '" + key_path(k) + "'");
    used_.insert(k);
    return j_.at(k);
  }

  double num(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_number()) throw schema_error("config: '" + key_path(k) + "' must be a number");
    return v.get<double>();
  }
  double num(const std::string& k, double def) { return has(k) ? num(k) : def; }

  long long integer(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_number_integer()) throw schema_error("config: '" + key_path(k) + "' must be an integer");
    return v.get<long long>();
  }
  long long integer(const std::string& k, long long def) { return has(k) ? integer(k) : def; }

  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_boolean()) throw schema_error("config: '" + key_path(k) + "' must be true or false");
    return v.get<bool>();
  }

  std::string str(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_string()) throw schema_error("config: '" + key_path(k) + "' must be a string");
    return v.get<std::string>();
  }
  std::string str(const std::string& k, const std::string& def) { return has(k) ? str(k) : def; }

  std::vector<double> numbers(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_array()) throw schema_error("config: '" + key_path(k) + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw schema_error("config: '" + key_path(k) + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  Obj child(const std::string& k) {
    const json& v = raw(k);
    return Obj(v, key_path(k));
  }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw schema_error("config: unknown key '" + key_path(it.key()) + "'");
  }

  std::string where() const { return path_.empty() ? "config" : "config: '" + path_ + "'"; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

ThetaSpec parse_theta(const json& j, const std::string& path) {
  ThetaSpec t;
  if (j.is_number()) {
    t.value = j.get<double>();
    return t;
  }
  Obj o(j, path);
  t.is_prior = true;
  std::vector<double> grid;
  const json& g = o.raw("grid");
  if (g.is_array()) {
    grid = o.numbers("grid");
  } else {
    Obj go(g, o.key_path("grid"));
    const double lo = go.num("lower");
    const double hi = go.num("upper");
    const long long n = go.integer("count");
    go.done();
    if (n < 1 || !(lo <= hi)) throw schema_error("config: '" + o.key_path("grid") + "' needs lower <= upper, count >= 1");
    for (long long i = 0; i < n; ++i) grid.push_back(n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / (n - 1));
  }
  if (grid.empty()) throw schema_error("config: '" + o.key_path("grid") + "' is empty");
  t.prior = o.has("weights") ? ThetaPosterior{grid, o.numbers("weights")} : ThetaPosterior::uniform(grid);
  o.done();
  try {
    t.prior.validate();
  } catch (const Error& e) {
    throw schema_error("config: '" + path + "': " + e.what());
  }
  return t;
}

SolverSpec parse_solver(const json& j, const std::string& path) {
  Obj o(j, path);
  SolverSpec s;
  s.type = o.str("type");
  s.name = o.str("name", s.type);
  if (s.type == "pofi") {
    s.m = static_cast<int>(o.integer("m", 1));
    s.lead_control = o.boolean("lead_control", false);
    if (s.m < 0) throw schema_error("config: '" + o.key_path("m") + "' must be >= 0");
  } else if (s.type == "via") {
    s.m = static_cast<int>(o.integer("m", 1));
    s.lead_control = o.boolean("lead_control", false);
    s.lambda = o.num("lambda", 0.9);
    s.epsilon = o.num("epsilon", 1e-6);
    if (!(s.lambda >= 0.0 && s.lambda < 1.0)) throw schema_error("config: '" + o.key_path("lambda") + "' must lie in [0, 1)");
    if (!(s.epsilon > 0.0)) throw schema_error("config: '" + o.key_path("epsilon") + "' must be positive");
    if (s.m < 0) throw schema_error("config: '" + o.key_path("m") + "' must be >= 0");
  } else if (s.type == "fixed") {
    const json& u = o.raw("u");
    if (u.is_string())
      s.fixed_control = u.get<std::string>();
    else if (u.is_number_integer())
      s.fixed_control = "#" + std::to_string(u.get<long long>());
    else
      throw schema_error("config: '" + o.key_path("u") + "' must be a control label or index");
  } else if (s.type != "fofi" && s.type != "random") {
    throw schema_error("config: '" + o.key_path("type") + "' must be one of pofi, fofi, via, fixed, random");
  }
  if (o.has("theta")) s.theta = parse_theta(o.raw("theta"), o.key_path("theta"));
  o.done();
  return s;
}

EstimatorSpec parse_estimator(const json& j, const std::string& path) {
  Obj o(j, path);
  EstimatorSpec e;
  const std::string type = o.str("type", "mle_grid");
  if (type == "mle_grid") {
    e.kind = EstimatorKind::MleGrid;
    e.grid_step = o.num("step", 0.01);
    if (o.has("grid")) e.grid = o.numbers("grid");
    if (!(e.grid_step > 0.0)) throw schema_error("config: '" + o.key_path("step") + "' must be positive");
  } else if (type == "em") {
    e.kind = EstimatorKind::Em;
    e.em.tol = o.num("tol", 1e-8);
    e.em.max_iter = static_cast<int>(o.integer("max_iter", 200));
    if (o.has("start")) e.em_start = o.num("start");
    if (e.em.max_iter < 1) throw schema_error("config: '" + o.key_path("max_iter") + "' must be >= 1");
  } else {
    throw schema_error("config: '" + o.key_path("type") + "' must be mle_grid or em");
  }
  o.done();
  return e;
}

GridAxis parse_axis(Obj& parent, const std::string& k, GridAxis def) {
  if (!parent.has(k)) return def;
  Obj o = parent.child(k);
  GridAxis a{o.num("lower", def.lower), o.num("upper", def.upper), static_cast<int>(o.integer("count", def.count))};
  o.done();
  return a;
}

ThetaDomain parse_domain(Obj& o, const std::string& k, ThetaDomain def) {
  if (!o.has(k)) return def;
  const std::vector<double> d = o.numbers(k);
  if (d.size() != 2 || !(d[0] <= d[1])) throw schema_error("config: '" + o.key_path(k) + "' must be [lower, upper]");
  return {d[0], d[1]};
}

}  // namespace

const ThetaSpec& RunConfig::need_theta() const {
  if (!theta) throw schema_error("config: missing required key 'theta'");
  return *theta;
}
const SolverSpec& RunConfig::need_solver() const {
  if (!solver) throw schema_error("config: missing required key 'solver'");
  return *solver;
}
int RunConfig::need_horizon() const {
  if (!horizon) throw schema_error("config: missing required key 'horizon'");
  return *horizon;
}
double RunConfig::truth() const {
  if (true_theta) return *true_theta;
  if (theta && !theta->is_prior) return theta->value;
  throw schema_error("config: missing required key 'true_theta' (theta is a prior)");
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << origin << ": malformed JSON at byte offset " << e.byte;
    throw schema_error(os.str());
  }
  RunConfig c;
  c.hash = fnv1a_hex(doc.dump());
  Obj top(doc, "");

  Obj model = top.child("model");
  if (model.has("file")) {
    c.model.file = model.str("file");
    if (model.has("builtin")) throw schema_error("config: 'model' takes either 'builtin' or 'file'");
  } else {
    c.model.builtin = model.str("builtin");
    if (model.has("params")) {
      const json& p = model.raw("params");
      if (!p.is_object()) throw schema_error("config: 'model.params' must be an object");
      c.model.params_json = p.dump();
    }
  }
  model.done();

  if (top.has("theta")) c.theta = parse_theta(top.raw("theta"), "theta");
  if (top.has("true_theta")) c.true_theta = top.num("true_theta");
  if (top.has("solver")) c.solver = parse_solver(top.raw("solver"), "solver");
  if (top.has("horizon")) {
    c.horizon = static_cast<int>(top.integer("horizon"));
    if (*c.horizon < 1) throw schema_error("config: 'horizon' must be >= 1");
  }
  if (top.has("study")) {
    Obj s = top.child("study");
    StudySpec st;
    st.reps = static_cast<int>(s.integer("reps"));
    if (st.reps < 1) throw schema_error("config: 'study.reps' must be >= 1");
    st.slow_reps = static_cast<int>(s.integer("slow_reps", 0));
    if (s.has("base_seed")) {
      const long long seed = s.integer("base_seed");
      if (seed < 0) throw schema_error("config: 'study.base_seed' must be >= 0");
      st.base_seed = static_cast<std::uint64_t>(seed);
    }
    if (s.has("estimator")) st.estimator = parse_estimator(s.raw("estimator"), "study.estimator");
    if (s.has("variants")) {
      const json& v = s.raw("variants");
      if (!v.is_array() || v.empty()) throw schema_error("config: 'study.variants' must be a non-empty array");
      for (std::size_t i = 0; i < v.size(); ++i)
        st.variants.push_back(parse_solver(v[i], "study.variants[" + std::to_string(i) + "]"));
    }
    st.detail = s.boolean("detail", false);
    s.done();
    c.study = std::move(st);
  }
  c.output = top.str("output", "");
  top.done();

  for (const SolverSpec* s : {c.solver ? &*c.solver : nullptr}) {
    if (s && c.horizon && (s->type == "pofi") && s->m >= *c.horizon)
      throw schema_error("config: 'solver.m' must be smaller than 'horizon'");
  }
  if (c.study) {
    for (const auto& v : c.study->variants)
      if (c.horizon && v.type == "pofi" && v.m >= *c.horizon)
        throw schema_error("config: study variant '" + v.name + "' has m >= horizon");
    std::set<std::string> names;
    for (const auto& v : c.study->variants)
      if (!names.insert(v.name).second) throw schema_error("config: duplicate study variant name '" + v.name + "'");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  RunConfig c = parse_config(read_text_file(path), path);
  c.base_dir = std::filesystem::path(path).parent_path().string();
  return c;
}

ModelFamily build_family(const ModelSpec& spec, const std::string& base_dir) {
  if (!spec.file.empty()) {
    std::filesystem::path p(spec.file);
    if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
    return load_model_file(p.string());
  }
  const json pj = json::parse(spec.params_json);
  Obj o(pj, "model.params");
  const std::string& b = spec.builtin;
  if (b == "six_state") {
    const bool raw = o.boolean("raw", false);
    o.done();
    return raw ? build_six_state_raw() : build_six_state();
  }
  if (b == "adversarial") {
    const double r = o.num("randomize", 0.8);
    const ThetaDomain d = parse_domain(o, "domain", {-3.0, 3.0});
    o.done();
    if (!(r >= 0.0 && r <= 1.0)) throw schema_error("config: 'model.params.randomize' must lie in [0, 1]");
    return build_adversarial(d, r);
  }
  if (b == "pcr") {
    PcrParams p;
    p.a = o.num("a", p.a);
    p.sigma1 = o.num("sigma1", p.sigma1);
    p.sigma2 = o.num("sigma2", p.sigma2);
    p.dt = o.num("dt", p.dt);
    p.saturation_power = o.num("saturation_power", p.saturation_power);
    if (o.has("controls")) p.controls = o.numbers("controls");
    p.state = parse_axis(o, "state", p.state);
    p.obs = parse_axis(o, "obs", p.obs);
    p.domain = parse_domain(o, "domain", p.domain);
    o.done();
    return build_pcr(p);
  }
  if (b == "morris_lecar") {
    MorrisLecarParams p;
    p.parameter = o.str("parameter", p.parameter);
    for (auto [k, ptr] : std::initializer_list<std::pair<const char*, double*>>{
             {"Cm", &p.Cm}, {"gCa", &p.gCa}, {"gK", &p.gK}, {"gl", &p.gl}, {"EK", &p.EK}, {"El", &p.El},
             {"ECa", &p.ECa}, {"phi", &p.phi}, {"v1", &p.v1}, {"v2", &p.v2}, {"v3", &p.v3}, {"v4", &p.v4},
             {"sigma", &p.sigma}, {"sigma_n", &p.sigma_n}, {"obs_sigma", &p.obs_sigma}, {"dt", &p.dt}})
      *ptr = o.num(k, *ptr);
    if (o.has("controls")) p.controls = o.numbers("controls");
    p.v_axis = parse_axis(o, "v_axis", p.v_axis);
    p.n_axis = parse_axis(o, "n_axis", p.n_axis);
    p.obs_axis = parse_axis(o, "obs_axis", p.obs_axis);
    o.done();
    return build_morris_lecar(p);
  }
  if (b == "random") {
    const long long seed = o.integer("seed", 1);
    const int K = static_cast<int>(o.integer("K", 2));
    const int L = static_cast<int>(o.integer("L", 2));
    const int l = static_cast<int>(o.integer("l", 2));
    o.done();
    return build_random_family(static_cast<std::uint64_t>(seed), K, L, l);
  }
  throw schema_error("config: 'model.builtin' must be one of six_state, adversarial, pcr, morris_lecar, random");
}

int resolve_control(const ModelFamily& family, const std::string& control) {
  const int l = family.num_controls();
  if (!control.empty() && control[0] == '#') {
    const int idx = std::stoi(control.substr(1));
    if (idx < 0 || idx >= l) throw schema_error("config: control index " + control.substr(1) + " out of range");
    return idx;
  }
  const ControlSet labels = family.eval(family.domain().lo).controls;
  const int idx = labels.index_of(control);
  if (idx < 0) throw schema_error("config: unknown control label '" + control + "'");
  return idx;
}

VariantSpec prepare_variant(const SolverSpec& s, const ModelFamily& family, const ThetaSpec& theta_in, int T) {
  const ThetaSpec& theta = s.theta ? *s.theta : theta_in;
  const ThetaPosterior prior = theta.as_prior();
  try {
    prior.validate(&family.domain());
  } catch (const Error& e) {
    throw schema_error("config: variant '" + s.name + "': " + e.what());
  }
  VariantSpec v;
  v.name = s.name;
  if (s.type == "pofi") {
    PofiOptions opts;
    opts.m = s.m;
    opts.lead_control = s.lead_control;
    auto pol = std::make_shared<const PofiPolicy>(solve_pofi(family, prior, T, opts));
    v.make = [pol] { return std::make_unique<PofiController>(pol); };
  } else if (s.type == "fofi") {
    auto pol = std::make_shared<const StatePolicy>(solve_fofi(family, prior, T));
    std::vector<PomdpModel> models;
    for (double th : prior.grid) models.push_back(family.eval(th));
    v.make = [pol, models, prior] { return std::make_unique<FofiController>(pol, models, prior); };
  } else if (s.type == "via") {
    ViaOptions opts;
    opts.lambda = s.lambda;
    opts.epsilon = s.epsilon;
    opts.m = s.m;
    opts.lead_control = s.lead_control;
    auto problem = std::make_shared<const ViaProblem>(family, prior.grid, opts);
    v.make = [problem, prior] { return std::make_unique<ViaController>(problem, prior); };
  } else if (s.type == "fixed") {
    const int u = resolve_control(family, s.fixed_control);
    v.make = [u] { return std::make_unique<FixedController>(u); };
  } else {
    const int l = family.num_controls();
    v.make = [l] { return std::make_unique<RandomController>(l); };
  }
  return v;
}

}  // namespace fidesign
