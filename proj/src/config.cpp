#include "aerolabel/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

extern char** environ;

namespace aerolabel {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kDataKeys = {"lulc",     "logits", "dem",          "imagery",   "truth",      "pose_log",
                                            "frames",   "masks",  "ground_truth", "projected", "predictions"};

fs::path* data_field(DataPaths& d, const std::string& key) {
  if (key == "lulc") return &d.lulc;
  if (key == "logits") return &d.logits;
  if (key == "dem") return &d.dem;
  if (key == "imagery") return &d.imagery;
  if (key == "truth") return &d.truth;
  if (key == "pose_log") return &d.pose_log;
  if (key == "frames") return &d.frames;
  if (key == "masks") return &d.masks;
  if (key == "ground_truth") return &d.ground_truth;
  if (key == "projected") return &d.projected;
  if (key == "predictions") return &d.predictions;
  return nullptr;
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  fs::path out = (base / p).lexically_normal();
  if (!out.has_filename() && out.has_relative_path()) out = out.parent_path();
  return out;
}

// Reads one JSON object and remembers which keys were consumed, so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string where, fs::path base) : j_(j), where_(std::move(where)), base_(std::move(base)) {
    if (!j_.is_object()) throw ConfigError(label() + " must be an object");
  }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(label(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(label(key) + " must be an integer");
      const auto x = v->get<std::int64_t>();
      if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(label(key) + " is out of range");
      out = static_cast<int>(x);
    }
  }
  void uint64(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(label(key) + " must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void size(const std::string& key, std::size_t& out) {
    std::uint64_t x = out;
    uint64(key, x);
    out = static_cast<std::size_t>(x);
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(label(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  bool string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(label(key) + " must be a string");
      out = v->get<std::string>();
      return true;
    }
    return false;
  }
  void path(const std::string& key, fs::path& out) {
    std::string s;
    if (string(key, s)) out = resolve(base_, s);
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(label(key) + " must be an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(label(key) + " must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void paths(const std::string& key, std::vector<fs::path>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(label(key) + " must be an array of paths");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_string()) throw ConfigError(label(key) + " must be an array of paths");
        out.push_back(resolve(base_, e.get<std::string>()));
      }
    }
  }
  template <typename Fn>
  void child(const std::string& key, Fn&& fn) {
    if (const json* v = find(key)) {
      Section s(*v, where_.empty() ? key : where_ + "." + key, base_);
      fn(s);
      s.finish();
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + label(it.key()) + "'");
  }

  std::string label(const std::string& key = {}) const {
    if (key.empty()) return where_.empty() ? "config" : where_;
    return where_.empty() ? key : where_ + "." + key;
  }

 private:
  const json& j_;
  std::string where_;
  fs::path base_;
  std::set<std::string> used_;
};

Crs parse_crs(const json& v, const std::string& where) {
  int code = 0;
  if (v.is_number_integer()) {
    code = v.get<int>();
  } else if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.rfind("EPSG:", 0) == 0) s = s.substr(5);
    try {
      std::size_t used = 0;
      code = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError(where + " must be an EPSG code such as \"EPSG:32633\"");
    }
  } else {
    throw ConfigError(where + " must be an EPSG code");
  }
  try {
    return Crs::from_epsg(code);
  } catch (const DataError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

template <typename E>
E parse_enum(const std::string& value, const std::string& where, const std::vector<std::pair<std::string, E>>& options) {
  std::string list;
  for (const auto& [name, e] : options) {
    if (name == value) return e;
    list += (list.empty() ? "" : ", ") + name;
  }
  throw ConfigError(where + ": unknown value '" + value + "' (expected " + list + ")");
}

template <typename E>
void enum_field(Section& s, const std::string& key, E& out, const std::vector<std::pair<std::string, E>>& options) {
  std::string v;
  if (s.string(key, v)) out = parse_enum(v, s.label(key), options);
}

const std::vector<std::pair<std::string, InferenceMode>> kModes = {{"lattice", InferenceMode::Lattice},
                                                                   {"exact", InferenceMode::Exact}};
const std::vector<std::pair<std::string, KernelNormalization>> kNorms = {
    {"symmetric", KernelNormalization::Symmetric}, {"none", KernelNormalization::None}};
const std::vector<std::pair<std::string, Fallback>> kFallbacks = {{"keep_projected", Fallback::KeepProjected},
                                                                  {"unlabeled", Fallback::Unlabeled}};
const std::vector<std::pair<std::string, TrajectoryMode>> kTrajModes = {
    {"summed_confusion", TrajectoryMode::SummedConfusion}, {"mean_image_miou", TrajectoryMode::MeanImageMiou}};
const std::vector<std::pair<std::string, SearchStrategy>> kStrategies = {{"tpe", SearchStrategy::Tpe},
                                                                         {"random", SearchStrategy::Random}};
const std::vector<std::pair<std::string, TuneObjective>> kObjectives = {
    {"boundary_loss", TuneObjective::BoundaryLoss}, {"weighted_cross_entropy", TuneObjective::WeightedCrossEntropy}};

template <typename E>
std::string enum_name(E e, const std::vector<std::pair<std::string, E>>& options) {
  for (const auto& [name, v] : options)
    if (v == e) return name;
  return "unknown";
}

void parse_camera(Section& s, PipelineConfig& c) {
  c.camera_set = true;
  auto& k = c.camera;
  s.number("fx", k.fx);
  s.number("fy", k.fy);
  s.number("cx", k.cx);
  s.number("cy", k.cy);
  s.integer("width", k.width);
  s.integer("height", k.height);
  s.number("k1", k.k1);
  s.number("k2", k.k2);
  s.child("mount", [&](Section& m) {
    std::vector<double> q, arm;
    m.numbers("rotation", q);
    m.numbers("lever_arm", arm);
    if (!q.empty()) {
      if (q.size() != 4) throw ConfigError("camera.mount.rotation must be [w, x, y, z]");
      c.mount.rotation = {q[0], q[1], q[2], q[3]};
    }
    if (!arm.empty()) {
      if (arm.size() != 3) throw ConfigError("camera.mount.lever_arm must be [x, y, z]");
      c.mount.lever_arm = {arm[0], arm[1], arm[2]};
    }
  });
}

void parse_crf(Section& s, CrfSection& crf) {
  s.boolean("enabled", crf.enabled);
  auto& p = crf.params;
  s.number("w1", p.w1);
  s.number("w2", p.w2);
  s.number("theta_alpha", p.theta_alpha);
  s.number("theta_gamma", p.theta_gamma);
  s.numbers("theta_beta", p.theta_beta);
  s.integer("iterations", p.num_iterations);
  enum_field(s, "normalization", p.normalization, kNorms);
  enum_field(s, "mode", crf.mode, kModes);
  s.boolean("standardize", crf.standardize);
}

void parse_render(Section& s, RasterRenderOptions& r) {
  s.number("spacing", r.spacing);
  s.size("max_vertices", r.max_vertices);
  s.number("near_plane", r.render.near_plane);
  s.number("guard_px", r.render.guard_px);
  s.integer("tile", r.render.tile);
  s.child("horizon", [&](Section& h) {
    h.number("forward_m", r.horizon_sampling.forward_m);
    h.number("lateral_m", r.horizon_sampling.lateral_m);
    h.integer("rows", r.horizon_sampling.rows);
    h.integer("cols", r.horizon_sampling.cols);
    h.number("d_min", r.horizon_sampling.d_min);
  });
}

void parse_clahe(Section& s, ClaheOptions& c) {
  s.integer("tiles_x", c.tiles_x);
  s.integer("tiles_y", c.tiles_y);
  s.number("clip_limit", c.clip_limit);
}

void parse_refine(Section& s, PipelineConfig& c) {
  std::string provider;
  if (s.string("provider", provider)) {
    try {
      c.refine.provider = parse_mask_provider(provider);
    } catch (const ConfigError& e) {
      throw ConfigError(s.label("provider") + ": " + e.what());
    }
  }
  enum_field(s, "fallback", c.refine.fallback, kFallbacks);
  s.child("slic", [&](Section& x) {
    x.integer("n_segments", c.refine.slic.n_segments);
    x.number("compactness", c.refine.slic.compactness);
    x.integer("iterations", c.refine.slic.iterations);
  });
  s.child("felzenszwalb", [&](Section& x) {
    x.number("scale", c.refine.felzenszwalb.scale);
    x.number("sigma", c.refine.felzenszwalb.sigma);
    x.integer("min_size", c.refine.felzenszwalb.min_size);
  });
  s.child("clahe", [&](Section& x) { parse_clahe(x, c.clahe); });
}

void parse_synth(Section& s, SynthSection& syn) {
  s.child("scene", [&](Section& x) {
    auto& g = syn.scene;
    x.integer("size", g.size);
    x.number("fine_res", g.fine_res);
    x.number("coarse_res", g.coarse_res);
    x.integer("num_classes", g.num_classes);
    x.numbers("priors", g.priors);
    x.number("feature_scale", g.feature_scale);
    x.integer("octaves", g.octaves);
    x.number("base_elevation", g.base_elevation);
    x.number("terrain_amplitude", g.terrain_amplitude);
    x.number("terrain_scale", g.terrain_scale);
    x.integer("imagery_bands", g.imagery_bands);
    x.number("imagery_noise", g.imagery_noise);
    x.number("illumination", g.illumination);
    x.number("thermal_blur", g.thermal_blur);
    x.number("thermal_noise", g.thermal_noise);
    if (const json* v = x.find("crs")) g.crs = parse_crs(*v, x.label("crs"));
    x.number("origin_x", g.origin_x);
    x.number("origin_y", g.origin_y);
  });
  s.child("trajectory", [&](Section& x) {
    auto& t = syn.trajectory;
    x.integer("frames", t.frames);
    x.number("altitude_min", t.altitude_min);
    x.number("altitude_max", t.altitude_max);
    x.number("tilt_max_deg", t.tilt_max_deg);
    x.number("radius", t.radius);
    x.number("dt", t.dt);
  });
  s.number("frame_spacing", syn.frames.render.spacing);
  s.number("sensor_noise", syn.frames.sensor_noise);
  s.number("mask_jitter", syn.mask_jitter);
}

PipelineConfig parse_json(const json& root, const fs::path& base) {
  PipelineConfig c;
  Section s(root, "", base);
  s.path("output_dir", c.output_dir);
  s.uint64("seed", c.seed);
  s.integer("workers", c.workers);
  if (const json* v = s.find("crs")) c.crs = parse_crs(*v, "crs");
  s.child("data", [&](Section& d) {
    for (const auto& key : kDataKeys) d.path(key, *data_field(c.data, key));
  });
  s.child("camera", [&](Section& x) { parse_camera(x, c); });
  s.child("crf", [&](Section& x) { parse_crf(x, c.crf); });
  s.child("render", [&](Section& x) { parse_render(x, c.render); });
  s.child("refine", [&](Section& x) { parse_refine(x, c); });
  s.child("evaluate", [&](Section& x) {
    x.path("class_map", c.evaluate.class_map);
    enum_field(x, "mode", c.evaluate.mode, kTrajModes);
  });
  s.child("tune", [&](Section& x) {
    x.integer("budget", c.tune.budget);
    enum_field(x, "strategy", c.tune.strategy, kStrategies);
    x.integer("width", c.tune.width);
    enum_field(x, "objective", c.tune.objective, kObjectives);
    x.integer("theta0", c.tune.boundary.theta0);
    x.integer("theta", c.tune.boundary.theta);
    x.numbers("class_weights", c.tune.class_weights);
  });
  s.child("ablate", [&](Section& x) {
    x.boolean("pose", c.ablate.pose);
    x.boolean("resolution", c.ablate.resolution);
    x.numbers("meters", c.ablate.meters);
    x.numbers("degrees", c.ablate.degrees);
    x.integer("trials", c.ablate.trials);
    x.numbers("resolutions", c.ablate.resolutions);
    x.paths("class_maps", c.ablate.class_maps);
    x.boolean("plots", c.ablate.plots);
  });
  s.child("synth", [&](Section& x) { parse_synth(x, c.synth); });
  s.finish();
  c.validate();
  return c;
}

json parse_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(what + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& root, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' must look like key.path=value");
  const std::string key = item.substr(0, eq);
  const std::string text = item.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &root;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override '" + key + "': '" + parts[i] + "' is not a section");
    node = &next;
  }
  (*node)[parts.back()] = value;
}

std::string path_text(const fs::path& p, const fs::path& relative_to) {
  if (p.empty()) return "";
  if (!relative_to.empty() && p.is_absolute()) {
    const fs::path rel = p.lexically_relative(relative_to);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return p.generic_string();
}

}  // namespace

void PipelineConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (camera_set) camera.validate();
  if (crf.params.num_iterations < 1) throw ConfigError("crf.iterations must be at least 1");
  if (!(render.spacing >= 0.0)) throw ConfigError("render.spacing must be non-negative");
  if (render.max_vertices < 4) throw ConfigError("render.max_vertices must be at least 4");
  render.horizon_sampling.validate();
  if (refine.slic.n_segments < 1) throw ConfigError("refine.slic.n_segments must be at least 1");
  if (!(refine.slic.compactness > 0.0)) throw ConfigError("refine.slic.compactness must be positive");
  if (refine.slic.iterations < 1) throw ConfigError("refine.slic.iterations must be at least 1");
  if (!(refine.felzenszwalb.scale > 0.0) || !(refine.felzenszwalb.sigma >= 0.0) || refine.felzenszwalb.min_size < 1)
    throw ConfigError("refine.felzenszwalb needs scale > 0, sigma >= 0 and min_size >= 1");
  if (clahe.tiles_x < 1 || clahe.tiles_y < 1 || !(clahe.clip_limit > 0.0))
    throw ConfigError("refine.clahe needs positive tile counts and clip_limit");
  if (tune.budget < 1) throw ConfigError("tune.budget must be at least 1");
  if (tune.width < 1) throw ConfigError("tune.width must be at least 1");
  tune.boundary.validate();
  for (double w : tune.class_weights)
    if (!(w >= 0.0)) throw ConfigError("tune.class_weights must be non-negative");
  if (ablate.trials < 1) throw ConfigError("ablate.trials must be at least 1");
  for (double m : ablate.meters)
    if (!(m >= 0.0)) throw ConfigError("ablate.meters must be non-negative");
  for (double d : ablate.degrees)
    if (!(d >= 0.0)) throw ConfigError("ablate.degrees must be non-negative");
  for (double r : ablate.resolutions)
    if (!(r > 0.0)) throw ConfigError("ablate.resolutions must be positive");
  synth.scene.validate();
  synth.trajectory.validate();
  if (!(synth.frames.render.spacing > 0.0)) throw ConfigError("synth.frame_spacing must be positive");
  if (!(synth.frames.sensor_noise >= 0.0)) throw ConfigError("synth.sensor_noise must be non-negative");
  if (!(synth.mask_jitter >= 0.0 && synth.mask_jitter <= 1.0)) throw ConfigError("synth.mask_jitter must be in [0, 1]");
}

PipelineConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
  return parse_json(parse_text(json_text, "config"), base_dir);
}

PipelineConfig load_config(const fs::path& path, const std::vector<ConfigOverride>& overrides,
                           const std::map<std::string, std::string>& env) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json root = parse_text(buf.str(), path.string());
  if (!root.is_object()) throw ConfigError(path.string() + " must hold a JSON object");
  for (const auto& o : overrides) apply_override(root, o);

  for (const auto& [name, value] : env) {
    if (name.rfind("AEROLABEL_", 0) != 0) continue;
    if (value.empty()) throw ConfigError("environment variable " + name + " is empty");
    const std::string abs = fs::absolute(value).lexically_normal().generic_string();
    if (name == "AEROLABEL_OUTPUT_DIR") {
      root["output_dir"] = abs;
      continue;
    }
    const std::string prefix = "AEROLABEL_DATA_";
    if (name.rfind(prefix, 0) == 0) {
      std::string key = name.substr(prefix.size());
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (std::find(kDataKeys.begin(), kDataKeys.end(), key) != kDataKeys.end()) {
        if (!root.contains("data")) root["data"] = json::object();
        if (!root["data"].is_object()) throw ConfigError("data must be an object");
        root["data"][key] = abs;
        continue;
      }
    }
    throw ConfigError("unknown environment override " + name +
                      " (only AEROLABEL_OUTPUT_DIR and AEROLABEL_DATA_<KEY> paths are accepted)");
  }
  return parse_json(root, fs::absolute(path).parent_path());
}

std::map<std::string, std::string> aerolabel_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind("AEROLABEL_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

std::string config_to_json(const PipelineConfig& c, const fs::path& relative_to) {
  auto p = [&](const fs::path& x) { return path_text(x, relative_to); };
  ojson j;
  j["output_dir"] = p(c.output_dir);
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  if (c.crs) j["crs"] = "EPSG:" + std::to_string(c.crs->epsg());

  ojson data = ojson::object();
  DataPaths d = c.data;
  for (const auto& key : kDataKeys) {
    const fs::path& v = *data_field(d, key);
    if (!v.empty()) data[key] = p(v);
  }
  j["data"] = data;

  if (c.camera_set) {
    const auto& k = c.camera;
    const auto& q = c.mount.rotation;
    j["camera"] = {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height},
                   {"k1", k.k1}, {"k2", k.k2},
                   {"mount", {{"rotation", {q.w, q.x, q.y, q.z}}, {"lever_arm", c.mount.lever_arm}}}};
  }

  const auto& cp = c.crf.params;
  j["crf"] = {{"enabled", c.crf.enabled},
              {"w1", cp.w1},
              {"w2", cp.w2},
              {"theta_alpha", cp.theta_alpha},
              {"theta_gamma", cp.theta_gamma},
              {"theta_beta", cp.theta_beta},
              {"iterations", cp.num_iterations},
              {"normalization", enum_name(cp.normalization, kNorms)},
              {"mode", to_string(c.crf.mode)},
              {"standardize", c.crf.standardize}};

  const auto& r = c.render;
  j["render"] = {{"spacing", r.spacing},
                 {"max_vertices", r.max_vertices},
                 {"near_plane", r.render.near_plane},
                 {"guard_px", r.render.guard_px},
                 {"tile", r.render.tile},
                 {"horizon",
                  {{"forward_m", r.horizon_sampling.forward_m},
                   {"lateral_m", r.horizon_sampling.lateral_m},
                   {"rows", r.horizon_sampling.rows},
                   {"cols", r.horizon_sampling.cols},
                   {"d_min", r.horizon_sampling.d_min}}}};

  const auto& f = c.refine;
  j["refine"] = {{"provider", to_string(f.provider)},
                 {"fallback", to_string(f.fallback)},
                 {"slic",
                  {{"n_segments", f.slic.n_segments},
                   {"compactness", f.slic.compactness},
                   {"iterations", f.slic.iterations}}},
                 {"felzenszwalb",
                  {{"scale", f.felzenszwalb.scale},
                   {"sigma", f.felzenszwalb.sigma},
                   {"min_size", f.felzenszwalb.min_size}}},
                 {"clahe",
                  {{"tiles_x", c.clahe.tiles_x}, {"tiles_y", c.clahe.tiles_y}, {"clip_limit", c.clahe.clip_limit}}}};

  ojson ev = ojson::object();
  if (!c.evaluate.class_map.empty()) ev["class_map"] = p(c.evaluate.class_map);
  ev["mode"] = to_string(c.evaluate.mode);
  j["evaluate"] = ev;

  j["tune"] = {{"budget", c.tune.budget},
               {"strategy", to_string(c.tune.strategy)},
               {"width", c.tune.width},
               {"objective", to_string(c.tune.objective)},
               {"theta0", c.tune.boundary.theta0},
               {"theta", c.tune.boundary.theta},
               {"class_weights", c.tune.class_weights}};

  ojson maps = ojson::array();
  for (const auto& m : c.ablate.class_maps) maps.push_back(p(m));
  j["ablate"] = {{"pose", c.ablate.pose},
                 {"resolution", c.ablate.resolution},
                 {"meters", c.ablate.meters},
                 {"degrees", c.ablate.degrees},
                 {"trials", c.ablate.trials},
                 {"resolutions", c.ablate.resolutions},
                 {"class_maps", maps},
                 {"plots", c.ablate.plots}};

  const auto& g = c.synth.scene;
  const auto& t = c.synth.trajectory;
  j["synth"] = {{"scene",
                 {{"size", g.size},
                  {"fine_res", g.fine_res},
                  {"coarse_res", g.coarse_res},
                  {"num_classes", g.num_classes},
                  {"priors", g.priors},
                  {"feature_scale", g.feature_scale},
                  {"octaves", g.octaves},
                  {"base_elevation", g.base_elevation},
                  {"terrain_amplitude", g.terrain_amplitude},
                  {"terrain_scale", g.terrain_scale},
                  {"imagery_bands", g.imagery_bands},
                  {"imagery_noise", g.imagery_noise},
                  {"illumination", g.illumination},
                  {"thermal_blur", g.thermal_blur},
                  {"thermal_noise", g.thermal_noise},
                  {"crs", "EPSG:" + std::to_string(g.crs.epsg())},
                  {"origin_x", g.origin_x},
                  {"origin_y", g.origin_y}}},
                {"trajectory",
                 {{"frames", t.frames},
                  {"altitude_min", t.altitude_min},
                  {"altitude_max", t.altitude_max},
                  {"tilt_max_deg", t.tilt_max_deg},
                  {"radius", t.radius},
                  {"dt", t.dt}}},
                {"frame_spacing", c.synth.frames.render.spacing},
                {"sensor_noise", c.synth.frames.sensor_noise},
                {"mask_jitter", c.synth.mask_jitter}};
  return j.dump(2) + "\n";
}

std::string to_string(InferenceMode m) { return enum_name(m, kModes); }
std::string to_string(TuneObjective o) { return enum_name(o, kObjectives); }
std::string to_string(SearchStrategy s) { return enum_name(s, kStrategies); }
std::string to_string(Fallback f) { return enum_name(f, kFallbacks); }
std::string to_string(TrajectoryMode m) { return enum_name(m, kTrajModes); }

}  // namespace aerolabel
