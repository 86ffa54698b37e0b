#include "fidesign/model_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fidesign/error.hpp"

namespace fidesign {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "fidesign-model";
constexpr int kVersion = 1;

json slice_json(const PomdpModel& m, double theta) {
  return json{{"theta", theta},
              {"transition", m.transition},
              {"emission", m.emission},
              {"initial_state", m.initial_state},
              {"initial_obs", m.initial_obs},
              {"randomizer", m.randomizer}};
}

std::vector<double> get_vector(const json& obj, const char* key, std::size_t expected, const std::string& where) {
  if (!obj.contains(key)) throw schema_error(where + ": missing key '" + key + "'");
  const json& v = obj.at(key);
  if (!v.is_array()) throw schema_error(where + ": '" + key + "' must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw schema_error(where + ": '" + key + "' must be an array of numbers");
    out.push_back(x.get<double>());
  }
  if (out.size() != expected) {
    std::ostringstream os;
    os << where << ": '" << key << "' has " << out.size() << " entries, expected " << expected;
    throw schema_error(os.str());
  }
  return out;
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }) == allowed.end())
      throw schema_error(where + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace

std::string model_file_text(const ModelFamily& family, std::span<const double> thetas) {
  if (thetas.empty()) throw schema_error("export: at least one theta slice required");
  std::vector<double> sorted(thetas.begin(), thetas.end());
  std::sort(sorted.begin(), sorted.end());
  const PomdpModel first = family.eval(sorted[0]);
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["name"] = family.name();
  doc["K"] = first.K;
  doc["L"] = first.L;
  doc["controls"] = first.controls.labels;
  doc["mask"] = json{{"x_next", first.mask.x_next}, {"x_prev", first.mask.x_prev}, {"y_prev", first.mask.y_prev}};
  doc["theta_domain"] = json::array({family.domain().lo, family.domain().hi});
  json slices = json::array();
  for (double th : sorted) slices.push_back(slice_json(th == sorted[0] ? first : family.eval(th), th));
  doc["slices"] = std::move(slices);
  return doc.dump(1) + "\n";
}

void write_model_file(const std::string& path, const ModelFamily& family, std::span<const double> thetas) {
  write_text_file(path, model_file_text(family, thetas));
}

ModelFamily parse_model_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << origin << ": malformed JSON at byte offset " << e.byte << " (" << e.what() << ")";
    throw schema_error(os.str());
  }
  if (!doc.is_object()) throw schema_error(origin + ": top level must be an object");
  reject_unknown(doc, {"format", "version", "name", "K", "L", "controls", "mask", "theta_domain", "slices"}, origin);
  if (doc.value("format", std::string()) != kFormat) throw schema_error(origin + ": 'format' must be \"fidesign-model\"");
  if (doc.value("version", 0) != kVersion) throw schema_error(origin + ": unsupported 'version'");
  for (const char* k : {"K", "L", "controls", "mask", "theta_domain", "slices"})
    if (!doc.contains(k)) throw schema_error(origin + ": missing key '" + k + "'");
  if (!doc["K"].is_number_integer() || !doc["L"].is_number_integer())
    throw schema_error(origin + ": 'K' and 'L' must be integers");
  const int K = doc["K"].get<int>();
  const int L = doc["L"].get<int>();
  if (K < 1 || L < 1) throw schema_error(origin + ": 'K' and 'L' must be positive");

  ControlSet controls;
  if (!doc["controls"].is_array() || doc["controls"].empty())
    throw schema_error(origin + ": 'controls' must be a non-empty array of labels");
  for (const auto& c : doc["controls"]) {
    if (!c.is_string()) throw schema_error(origin + ": control labels must be strings");
    controls.labels.push_back(c.get<std::string>());
  }
  const int l = controls.size();

  EmissionMask mask;
  const json& jm = doc["mask"];
  if (!jm.is_object()) throw schema_error(origin + ": 'mask' must be an object");
  reject_unknown(jm, {"x_next", "x_prev", "y_prev"}, origin + ": mask");
  mask.x_next = jm.value("x_next", true);
  mask.x_prev = jm.value("x_prev", false);
  mask.y_prev = jm.value("y_prev", false);

  const json& jd = doc["theta_domain"];
  if (!jd.is_array() || jd.size() != 2 || !jd[0].is_number() || !jd[1].is_number())
    throw schema_error(origin + ": 'theta_domain' must be [lower, upper]");
  const ThetaDomain domain{jd[0].get<double>(), jd[1].get<double>()};
  if (!(domain.lo <= domain.hi)) throw schema_error(origin + ": 'theta_domain' lower exceeds upper");

  PomdpModel shape;
  shape.K = K;
  shape.L = L;
  shape.controls = controls;
  shape.mask = mask;
  const std::size_t n_emit = shape.emission_size();

  const json& js = doc["slices"];
  if (!js.is_array() || js.empty()) throw schema_error(origin + ": 'slices' must be a non-empty array");
  std::vector<std::pair<double, PomdpModel>> slices;
  for (std::size_t i = 0; i < js.size(); ++i) {
    const std::string where = origin + ": slice " + std::to_string(i);
    const json& s = js[i];
    if (!s.is_object()) throw schema_error(where + " must be an object");
    reject_unknown(s, {"theta", "transition", "emission", "initial_state", "initial_obs", "randomizer"}, where);
    if (!s.contains("theta") || !s["theta"].is_number()) throw schema_error(where + ": missing numeric 'theta'");
    PomdpModel m = shape;
    m.transition = get_vector(s, "transition", static_cast<std::size_t>(l) * K * K, where);
    m.emission = get_vector(s, "emission", n_emit, where);
    m.initial_state = get_vector(s, "initial_state", K, where);
    m.initial_obs = get_vector(s, "initial_obs", L, where);
    m.randomizer = get_vector(s, "randomizer", static_cast<std::size_t>(l) * l, where);
    const ValidationReport rep = validate_model(m);
    if (!rep.ok()) throw schema_error(where + " is not a valid model: " + rep.to_string());
    slices.emplace_back(s["theta"].get<double>(), std::move(m));
  }
  std::sort(slices.begin(), slices.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 1; i < slices.size(); ++i)
    if (slices[i].first == slices[i - 1].first) throw schema_error(origin + ": duplicate slice theta");

  const std::string name = doc.value("name", std::string("file"));
  return ModelFamily(name, domain, [slices](double theta) {
    if (theta <= slices.front().first) return slices.front().second;
    if (theta >= slices.back().first) return slices.back().second;
    std::size_t hi = 1;
    while (slices[hi].first < theta) ++hi;
    const auto& [t0, a] = slices[hi - 1];
    const auto& [t1, b] = slices[hi];
    if (theta == t1) return b;
    const double w = (theta - t0) / (t1 - t0);
    PomdpModel m = a;
    auto mix = [w](std::vector<double>& x, const std::vector<double>& y) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = (1.0 - w) * x[i] + w * y[i];
    };
    mix(m.transition, b.transition);
    mix(m.emission, b.emission);
    mix(m.initial_state, b.initial_state);
    mix(m.initial_obs, b.initial_obs);
    mix(m.randomizer, b.randomizer);
    return m;
  });
}

ModelFamily load_model_file(const std::string& path) { return parse_model_text(read_text_file(path), path); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw schema_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw schema_error("cannot write '" + tmp + "'");
    out << text;
    if (!out) throw schema_error("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw schema_error("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

}  // namespace fidesign
