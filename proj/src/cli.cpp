#include "viso/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "viso/error.hpp"

namespace viso::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

// Line of the first occurrence of "key", 0 when absent.
int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

std::string where(const std::string& origin, int line) {
  return line > 0 ? origin + ":" + std::to_string(line) : origin;
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t at = e.byte > 0 ? e.byte - 1 : 0;
    throw CliError(kExitParse, where(origin, line_of_offset(text, at)) + ": parse error: " + e.what());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError(kExitParse, path.string() + ": cannot read file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CliError(kExitParse, path.string() + ": cannot write file");
  out << content;
}

// Scene schema helpers; every failure names the key and its line.
struct SceneReader {
  const std::string& text;
  const std::string& origin;

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw CliError(kExitParse, where(origin, line_of_key(text, key)) + ": key '" + key + "': " + what);
  }

  const json& member(const json& obj, const std::string& key) const {
    if (!obj.is_object()) fail(key, "enclosing value is not an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(key, "missing");
    return *it;
  }

  double number(const json& obj, const std::string& key) const {
    const json& v = member(obj, key);
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }

  std::string string(const json& obj, const std::string& key, bool required = true) const {
    if (!required && (!obj.is_object() || !obj.contains(key))) return {};
    const json& v = member(obj, key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const json& obj, const std::string& key, std::size_t n) const {
    const json& v = member(obj, key);
    if (!v.is_array() || v.size() != n) fail(key, "expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) fail(key, "expected an array of " + std::to_string(n) + " numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  Vec3 vec3(const json& obj, const std::string& key) const {
    const auto v = numbers(obj, key, 3);
    return {v[0], v[1], v[2]};
  }
};

void check_keys(const SceneReader& r, const json& obj, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      r.fail(k, "unknown key");
    }
  }
}

class Emitter {
 public:
  Emitter& key(const std::string& k) {
    sep();
    out_ += json(k).dump() + ":";
    fresh_ = true;
    return *this;
  }
  Emitter& num(double v) { return raw(format_number(v)); }
  Emitter& integer(long long v) { return raw(std::to_string(v)); }
  Emitter& boolean(bool v) { return raw(v ? "true" : "false"); }
  Emitter& str(const std::string& s) { return raw(json(s).dump()); }
  Emitter& null() { return raw("null"); }
  Emitter& vec(const Vec3& v) {
    return raw("[" + format_number(v.x()) + "," + format_number(v.y()) + "," + format_number(v.z()) + "]");
  }
  Emitter& open(char c) {
    sep();
    out_ += c;
    fresh_ = true;
    return *this;
  }
  Emitter& close(char c) {
    out_ += c;
    fresh_ = false;
    return *this;
  }
  const std::string& str() const { return out_; }

 private:
  Emitter& raw(const std::string& s) {
    sep();
    out_ += s;
    fresh_ = false;
    return *this;
  }
  void sep() {
    if (!fresh_ && !out_.empty()) out_ += ",";
    fresh_ = false;
  }
  std::string out_;
  bool fresh_ = true;
};

// Flat config keys, each bound to one LoopConfig field.
struct ConfigKey {
  std::string name;
  std::function<json(const LoopConfig&)> get;
  std::function<void(LoopConfig&, const json&)> set;  // throws std::string on bad values
};

using Check = std::function<bool(double)>;
const Check kPositive = [](double v) { return v > 0.0; };
const Check kNonNegative = [](double v) { return v >= 0.0; };
const Check kProbability = [](double v) { return v >= 0.0 && v <= 1.0; };

template <class T>
ConfigKey real_key(std::string name, T LoopConfig::*outer, double T::*field, Check ok,
                   std::string rule) {
  return {name, [=](const LoopConfig& c) { return json((c.*outer).*field); },
          [=](LoopConfig& c, const json& v) {
            if (!v.is_number()) throw std::string("expected a number");
            const double x = v.get<double>();
            if (!std::isfinite(x) || !ok(x)) throw "must be " + rule;
            (c.*outer).*field = x;
          }};
}

ConfigKey top_real(std::string name, double LoopConfig::*field, Check ok, std::string rule) {
  return {name, [=](const LoopConfig& c) { return json(c.*field); },
          [=](LoopConfig& c, const json& v) {
            if (!v.is_number()) throw std::string("expected a number");
            const double x = v.get<double>();
            if (!std::isfinite(x) || !ok(x)) throw "must be " + rule;
            c.*field = x;
          }};
}

int read_int(const json& v, int min) {
  if (!v.is_number_integer()) throw std::string("expected an integer");
  const auto x = v.get<long long>();
  if (x < min || x > 1'000'000'000) throw "must be an integer >= " + std::to_string(min);
  return static_cast<int>(x);
}

template <class T>
ConfigKey int_key(std::string name, T LoopConfig::*outer, int T::*field, int min) {
  return {name, [=](const LoopConfig& c) { return json((c.*outer).*field); },
          [=](LoopConfig& c, const json& v) { (c.*outer).*field = read_int(v, min); }};
}

ConfigKey top_int(std::string name, int LoopConfig::*field, int min) {
  return {name, [=](const LoopConfig& c) { return json(c.*field); },
          [=](LoopConfig& c, const json& v) { c.*field = read_int(v, min); }};
}

const std::vector<ConfigKey>& config_table() {
  static const std::vector<ConfigKey> table = [] {
    using L = LoopConfig;
    std::vector<ConfigKey> t;
    t.push_back(top_real("tick_hz", &L::tick_hz, kPositive, "positive"));
    t.push_back(top_int("max_ticks", &L::max_ticks, 1));
    t.push_back(real_key("gamma_d", &L::fusion, &FusionConfig::gamma_d, kPositive, "positive"));
    t.push_back(real_key("gamma_theta", &L::fusion, &FusionConfig::gamma_theta,
                         [](double v) { return v >= 0.0 && v <= 2.0; }, "in [0, 2]"));
    t.push_back(real_key("gamma_below", &L::relations, &RelationConfig::gamma_below, kNonNegative,
                         "non-negative"));
    t.push_back(real_key("gamma_hl", &L::relations, &RelationConfig::gamma_hl, kNonNegative,
                         "non-negative"));
    t.push_back(real_key("proximity_expansion", &L::relations, &RelationConfig::proximity_expansion,
                         kNonNegative, "non-negative"));
    t.push_back(real_key("q_max", &L::fusion, &FusionConfig::q_max, kProbability, "in [0, 1]"));
    t.push_back(real_key("kappa_max", &L::fusion, &FusionConfig::kappa_max, kPositive, "positive"));
    t.push_back(top_real("eps_stag", &L::eps_stag, kPositive, "positive"));
    t.push_back(top_real("step", &L::step, kPositive, "positive"));
    t.push_back(top_int("max_steps", &L::max_steps, 1));
    t.push_back({"kappa_mode", [](const L& c) { return json(std::string(to_string(c.fusion.kappa_mode))); },
                 [](L& c, const json& v) {
                   if (v == "natural") c.fusion.kappa_mode = KappaMode::kNatural;
                   else if (v == "additive") c.fusion.kappa_mode = KappaMode::kAdditive;
                   else throw std::string("must be \"natural\" or \"additive\"");
                 }});
    t.push_back({"proximal_rule",
                 [](const L& c) { return json(std::string(to_string(c.fusion.proximal_rule))); },
                 [](L& c, const json& v) {
                   if (v == "similar") c.fusion.proximal_rule = ProximalRule::kSimilar;
                   else if (v == "literal") c.fusion.proximal_rule = ProximalRule::kLiteral;
                   else throw std::string("must be \"similar\" or \"literal\"");
                 }});
    t.push_back(real_key("dbscan_eps", &L::fusion, &FusionConfig::dbscan_eps, kPositive, "positive"));
    t.push_back(int_key("dbscan_min_pts", &L::fusion, &FusionConfig::dbscan_min_pts, 1));
    t.push_back({"bins", [](const L& c) { return json(c.fusion.bins); },
                 [](L& c, const json& v) { c.fusion.bins = c.grasp.bins = read_int(v, 1); }});
    t.push_back(int_key("stale_ticks", &L::fusion, &FusionConfig::stale_ticks, 1));
    t.push_back(real_key("tau_match", &L::scene, &SceneConfig::tau_match, kPositive, "positive"));
    t.push_back(top_int("settle_ticks", &L::settle_ticks, 1));
    t.push_back(real_key("sigma_center", &L::detection, &DetectionNoise::sigma_center, kNonNegative,
                         "non-negative"));
    t.push_back(real_key("drop_prob", &L::detection, &DetectionNoise::drop_prob, kProbability,
                         "in [0, 1]"));
    t.push_back(real_key("mislabel_prob", &L::detection, &DetectionNoise::mislabel_prob, kProbability,
                         "in [0, 1]"));
    t.push_back(real_key("visibility_min", &L::detection, &DetectionNoise::visibility_min,
                         kProbability, "in [0, 1]"));
    t.push_back(real_key("sigma_contact", &L::grasp, &GraspNoise::sigma_contact, kNonNegative,
                         "non-negative"));
    t.push_back(real_key("kappa_obs", &L::grasp, &GraspNoise::kappa_obs, kPositive, "positive"));
    t.push_back(real_key("q_visibility_gain", &L::grasp, &GraspNoise::q_visibility_gain,
                         kProbability, "in [0, 1]"));
    t.push_back(real_key("base_q", &L::grasp, &GraspNoise::base_q, kProbability, "in [0, 1]"));
    t.push_back(int_key("grasps_per_object", &L::grasp, &GraspNoise::per_object, 1));
    t.push_back(top_real("finger_clearance", &L::finger_clearance, kNonNegative, "non-negative"));
    t.push_back(top_real("disturb_prob", &L::disturb_prob, kProbability, "in [0, 1]"));
    t.push_back(top_int("max_failures", &L::max_failures, 1));
    return t;
  }();
  return table;
}

std::string lines(const std::vector<std::string>& rows) {
  std::string out;
  for (const auto& r : rows) out += r + "\n";
  return out;
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError(kExitParse, dir.string() + ": cannot create directory: " + ec.message());
  return dir;
}

void write_episode(const fs::path& dir, const EpisodeRecord& rec) {
  ensure_dir(dir);
  write_file(dir / "trajectory.jsonl", trajectory_jsonl(rec.result));
  write_file(dir / "grasps.csv", grasps_csv(rec.result));
  write_file(dir / "events.jsonl", events_jsonl(rec.result));
  write_file(dir / "metrics.json", episode_metrics_json(rec));
}

LoopConfig config_or_default(const std::optional<fs::path>& path) {
  return path ? load_config(*path) : LoopConfig{};
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const CliError& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

std::string format_number(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

GroundTruthScene parse_scene(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  const SceneReader r{text, origin};
  if (!doc.is_object()) throw CliError(kExitParse, origin + ":1: scene must be a JSON object");
  check_keys(r, doc, {"schema_version", "seed", "target_label", "table_height", "sphere", "objects",
                      "initial_view"});
  const double version = r.number(doc, "schema_version");
  if (version != kSchemaVersion) r.fail("schema_version", "unsupported version");

  GroundTruthScene s;
  const json& seed = r.member(doc, "seed");
  if (!seed.is_number_unsigned()) r.fail("seed", "expected a non-negative integer");
  s.rng_seed = seed.get<std::uint64_t>();
  s.target_label = r.string(doc, "target_label");
  s.table_height = r.number(doc, "table_height");

  const json& sphere = r.member(doc, "sphere");
  check_keys(r, sphere, {"center", "radius"});
  s.sphere.center = r.vec3(sphere, "center");
  s.sphere.radius = r.number(sphere, "radius");

  if (doc.contains("initial_view")) {
    const json& iv = doc["initial_view"];
    check_keys(r, iv, {"azimuth_deg", "elevation_deg"});
    s.initial_azimuth = r.number(iv, "azimuth_deg") * std::numbers::pi / 180.0;
    s.initial_elevation = r.number(iv, "elevation_deg") * std::numbers::pi / 180.0;
    if (s.initial_elevation < 0.0 || s.initial_elevation > std::numbers::pi / 2) {
      r.fail("elevation_deg", "must lie in [0, 90]");
    }
  }

  const json& objects = r.member(doc, "objects");
  if (!objects.is_array()) r.fail("objects", "expected an array");
  for (const json& o : objects) {
    check_keys(r, o, {"label", "color", "pattern", "spatial_relation", "center", "rotation",
                      "half_extents"});
    SceneObject obj;
    obj.description.label = r.string(o, "label");
    obj.description.color = r.string(o, "color", false);
    obj.description.pattern = r.string(o, "pattern", false);
    obj.description.spatial_relation = r.string(o, "spatial_relation", false);
    obj.box.center = r.vec3(o, "center");
    if (o.contains("rotation")) {
      const auto q = r.numbers(o, "rotation", 4);  // w, x, y, z
      Quat quat(q[0], q[1], q[2], q[3]);
      if (quat.norm() < 1e-9) r.fail("rotation", "zero quaternion");
      obj.box.rotation = quat.normalized().toRotationMatrix();
    } else {
      obj.box.rotation = Mat3::Identity();
    }
    obj.box.half_extents = r.vec3(o, "half_extents");
    s.objects.push_back(std::move(obj));
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw CliError(kExitParse, origin + ": invalid scene: " + e.what());
  }
  return s;
}

GroundTruthScene load_scene(const fs::path& path) { return parse_scene(read_file(path), path.string()); }

std::string dump_scene(const GroundTruthScene& s) {
  Emitter e;
  e.open('{');
  e.key("schema_version").integer(kSchemaVersion);
  e.key("seed").integer(static_cast<long long>(s.rng_seed));
  e.key("target_label").str(s.target_label);
  e.key("table_height").num(s.table_height);
  e.key("sphere").open('{').key("center").vec(s.sphere.center).key("radius").num(s.sphere.radius).close('}');
  e.key("initial_view").open('{');
  e.key("azimuth_deg").num(s.initial_azimuth * 180.0 / std::numbers::pi);
  e.key("elevation_deg").num(s.initial_elevation * 180.0 / std::numbers::pi);
  e.close('}');
  e.key("objects").open('[');
  for (const auto& o : s.objects) {
    const Quat q(o.box.rotation);
    e.open('{');
    e.key("label").str(o.description.label);
    e.key("color").str(o.description.color);
    e.key("pattern").str(o.description.pattern);
    e.key("center").vec(o.box.center);
    e.key("rotation").open('[').num(q.w()).num(q.x()).num(q.y()).num(q.z()).close(']');
    e.key("half_extents").vec(o.box.half_extents);
    e.close('}');
  }
  e.close(']').close('}');
  return e.str() + "\n";
}

LoopConfig parse_config(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  if (!doc.is_object()) throw CliError(kExitParse, origin + ":1: config must be a JSON object");
  LoopConfig cfg;
  const auto& table = config_table();
  for (const auto& [k, v] : doc.items()) {
    const auto it = std::find_if(table.begin(), table.end(), [&](const ConfigKey& c) { return c.name == k; });
    const std::string loc = where(origin, line_of_key(text, k));
    if (it == table.end()) throw CliError(kExitConfig, loc + ": unknown key '" + k + "'");
    try {
      it->set(cfg, v);
    } catch (const std::string& why) {
      throw CliError(kExitConfig, loc + ": key '" + k + "' " + why);
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw CliError(kExitConfig, origin + ": " + e.what());
  }
  return cfg;
}

LoopConfig load_config(const fs::path& path) { return parse_config(read_file(path), path.string()); }

std::string dump_config(const LoopConfig& cfg) {
  std::string out = "{\n";
  const auto& table = config_table();
  for (std::size_t i = 0; i < table.size(); ++i) {
    const json v = table[i].get(cfg);
    const std::string value = v.is_number_float() ? format_number(v.get<double>()) : v.dump();
    out += "  " + json(table[i].name).dump() + ": " + value + (i + 1 < table.size() ? ",\n" : "\n");
  }
  return out + "}\n";
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& k : config_table()) keys.push_back(k.name);
  return keys;
}

std::string trajectory_jsonl(const EpisodeResult& r) {
  std::vector<std::string> rows;
  for (const auto& t : r.trajectory) {
    Emitter e;
    const Quat& q = t.pose.orientation;
    e.open('{');
    e.key("tick").integer(t.tick);
    e.key("position").vec(t.pose.position);
    e.key("orientation").open('[').num(q.w()).num(q.x()).num(q.y()).num(q.z()).close(']');
    e.key("optical_axis").vec(t.pose.optical_axis());
    e.key("nbv_active").boolean(t.nbv_active);
    e.key("velocity").vec(t.field.velocity);
    e.key("beta").num(t.field.beta);
    e.key("truncated").boolean(t.field.truncated);
    e.key("singular").boolean(t.field.singular);
    e.key("grasp_object").str(t.grasp_object);
    e.close('}');
    rows.push_back(e.str());
  }
  return lines(rows);
}

std::string events_jsonl(const EpisodeResult& r) {
  std::vector<std::string> rows;
  for (const auto& ev : r.events) {
    Emitter e;
    e.open('{');
    e.key("tick").integer(ev.tick);
    e.key("kind").str(std::string(to_string(ev.kind)));
    if (ev.object_id >= 0) e.key("object_id").integer(ev.object_id);
    else e.key("object_id").null();
    e.key("label").str(ev.label);
    e.key("detail").str(ev.detail);
    e.close('}');
    rows.push_back(e.str());
  }
  return lines(rows);
}

std::string grasps_csv(const EpisodeResult& r) {
  std::string out = "tick,id,cx,cy,cz,mux,muy,muz,kappa,kappa_sum,quality,width,update_count,bins\n";
  for (const auto& snap : r.buffers) {
    for (const auto& g : snap.grasps) {
      const Vec3 mu = g.mu();
      std::string bins;
      for (std::size_t i = 0; i < g.approach_bins.size(); ++i) {
        bins += (i ? ";" : "") + format_number(g.approach_bins[i]);
      }
      out += std::to_string(snap.tick) + "," + std::to_string(g.id) + "," + format_number(g.contact.x()) +
             "," + format_number(g.contact.y()) + "," + format_number(g.contact.z()) + "," +
             format_number(mu.x()) + "," + format_number(mu.y()) + "," + format_number(mu.z()) + "," +
             format_number(g.kappa(KappaMode::kNatural)) + "," + format_number(g.kappa_sum) + "," +
             format_number(g.quality()) + "," + format_number(g.width) + "," +
             std::to_string(g.update_count) + "," + bins + "\n";
    }
  }
  return out;
}

std::string episode_metrics_json(const EpisodeRecord& rec) {
  const EpisodeResult& r = rec.result;
  Emitter e;
  e.open('{');
  e.key("scene").str(rec.scene_name);
  e.key("seed").integer(static_cast<long long>(rec.seed));
  e.key("FS").integer(r.final_success ? 1 : 0);
  e.key("GA").integer(r.grasp_attempts);
  e.key("GSR");
  if (r.grasps_attempted > 0) e.num(100.0 * r.grasps_succeeded / r.grasps_attempted);
  else e.null();
  e.key("grasps_succeeded").integer(r.grasps_succeeded);
  e.key("grasps_attempted").integer(r.grasps_attempted);
  e.key("ticks").integer(r.ticks_used);
  e.key("aborted").boolean(r.aborted);
  e.key("termination").str(r.termination);
  e.close('}');
  return e.str() + "\n";
}

std::string suite_metrics_json(const SuiteResult& suite) {
  const SuiteMetrics& m = suite.metrics;
  Emitter e;
  e.open('{');
  e.key("episodes").integer(m.episodes);
  e.key("AFSR").num(m.afsr);
  e.key("AGA").num(m.aga);
  e.key("AGSR").num(m.agsr);
  e.key("scenes").open('[');
  for (const auto& s : m.scenes) {
    e.open('{');
    e.key("scene").str(s.scene_name);
    e.key("episodes").integer(s.episodes);
    e.key("FS").integer(s.final_successes);
    e.key("GA");
    if (s.has_attempts) e.num(s.mean_attempts);
    else e.null();
    e.key("GSR");
    if (s.has_gsr) e.num(s.grasp_success_rate);
    else e.null();
    e.close('}');
  }
  e.close(']');
  e.key("records").open('[');
  for (const auto& rec : suite.episodes) {
    e.open('{');
    e.key("scene").str(rec.scene_name);
    e.key("seed").integer(static_cast<long long>(rec.seed));
    e.key("FS").integer(rec.result.final_success ? 1 : 0);
    e.key("GA").integer(rec.result.grasp_attempts);
    e.key("grasps_succeeded").integer(rec.result.grasps_succeeded);
    e.key("grasps_attempted").integer(rec.result.grasps_attempted);
    e.close('}');
  }
  e.close(']').close('}');
  return e.str() + "\n";
}

std::vector<FieldRow> field_grid(const GroundTruthScene& scene, int n, FieldPoints points) {
  if (n < 1) throw Error(Errc::kInvalidArgument, "grid must be at least 1");
  const SceneObject* target = scene.find(scene.target_label);
  if (!target) throw Error(Errc::kUnknownLabel, scene.target_label);
  OccluderPoints occ;
  for (const auto& o : scene.objects) {
    if (&o == target) continue;
    if (points == FieldPoints::kCenters) {
      occ.push_back(o.box.center);
    } else {
      const auto p = occluder_points(o.box);
      occ.insert(occ.end(), p.begin(), p.end());
    }
  }
  std::vector<FieldRow> rows;
  rows.reserve(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const double el = (i + 0.5) / n * std::numbers::pi / 2;
    for (int j = 0; j < n; ++j) {
      const double az = 2.0 * std::numbers::pi * j / n;
      FieldRow row;
      row.position = scene.sphere.from_angles(az, el);
      row.azimuth = az;
      row.elevation = el;
      if (!occ.empty()) row.sample = planner_field(row.position, scene.sphere, target->box.center, occ);
      rows.push_back(row);
    }
  }
  return rows;
}

std::string field_csv(const std::vector<FieldRow>& rows) {
  std::string out = "x,y,z,azimuth,elevation,vx,vy,vz,beta,truncated\n";
  for (const auto& r : rows) {
    out += format_number(r.position.x()) + "," + format_number(r.position.y()) + "," +
           format_number(r.position.z()) + "," + format_number(r.azimuth) + "," +
           format_number(r.elevation) + "," + format_number(r.sample.velocity.x()) + "," +
           format_number(r.sample.velocity.y()) + "," + format_number(r.sample.velocity.z()) + "," +
           format_number(r.sample.beta) + "," + (r.sample.truncated ? "1" : "0") + "\n";
  }
  return out;
}

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  const char* env = std::getenv("VISO_SEED");
  if (!env || !*env) return 0;
  const std::string s(env);
  if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) || s.size() > 19) {
    throw CliError(kExitConfig, "VISO_SEED: expected a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

int cmd_run(const RunOptions& opt, std::ostream& err) {
  return guarded(err, [&] {
    const GroundTruthScene scene = load_scene(opt.scene);
    const LoopConfig cfg = config_or_default(opt.config);
    const std::uint64_t seed = resolve_seed(opt.seed);
    EpisodeRecord rec{opt.scene.stem().string(), seed, run_episode(scene, cfg, seed)};
    write_episode(opt.out, rec);
    return kExitOk;
  });
}

int cmd_suite(const SuiteOptions& opt, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.seeds < 1) throw CliError(kExitConfig, "--seeds must be at least 1");
    std::vector<fs::path> files;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(opt.scenes, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    if (ec) throw CliError(kExitParse, opt.scenes.string() + ": cannot list directory: " + ec.message());
    if (files.empty()) throw CliError(kExitParse, opt.scenes.string() + ": no scene files (*.json)");
    std::sort(files.begin(), files.end());

    std::vector<NamedScene> scenes;
    for (const auto& f : files) scenes.push_back({f.stem().string(), load_scene(f)});
    const LoopConfig cfg = config_or_default(opt.config);
    const std::uint64_t base = resolve_seed(opt.seed);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < opt.seeds; ++i) seeds.push_back(base + static_cast<std::uint64_t>(i));

    const SuiteResult suite = run_suite(scenes, cfg, seeds, opt.threads);
    ensure_dir(opt.out);
    for (const auto& rec : suite.episodes) {
      write_episode(opt.out / rec.scene_name / ("seed_" + std::to_string(rec.seed)), rec);
    }
    write_file(opt.out / "suite_metrics.json", suite_metrics_json(suite));
    return kExitOk;
  });
}

int cmd_field(const FieldOptions& opt, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.grid < 1) throw CliError(kExitConfig, "--grid must be at least 1");
    const GroundTruthScene scene = load_scene(opt.scene);
    const auto rows = field_grid(scene, opt.grid, opt.points);
    ensure_dir(opt.out);
    write_file(opt.out / "field.csv", field_csv(rows));
    return kExitOk;
  });
}

}  // namespace viso::cli
