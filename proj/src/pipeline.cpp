#include "aerolabel/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "aerolabel/ablate.hpp"
#include "aerolabel/geotiff.hpp"
#include "aerolabel/hash.hpp"
#include "aerolabel/parallel.hpp"
#include "aerolabel/png.hpp"
#include "aerolabel/refine.hpp"
#include "aerolabel/synth.hpp"

#ifndef AEROLABEL_VERSION
#define AEROLABEL_VERSION "0.0.0"
#endif

namespace aerolabel {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string version() { return AEROLABEL_VERSION; }

namespace {

constexpr std::uint64_t kMaskFixtureStream = 0x6d61736b;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string frame_name(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

Raster label_raster(const LabelImage& labels) {
  std::uint16_t top = 0;
  for (auto v : labels.data) top = std::max(top, v);
  Raster r = Raster::zeros(1, labels.height, labels.width, top > 255 ? SampleType::UInt16 : SampleType::UInt8,
                           GeoTransform{}, Crs::local(), RasterKind::Categorical);
  for (std::size_t i = 0; i < labels.size(); ++i) r.data[i] = labels.data[i];
  r.nodata = kUnlabeled;
  return r;
}

LabelImage label_image_of(const Raster& r, const std::string& what) {
  if (r.bands < 1) throw DataError(what + " has no bands");
  LabelImage out(r.width, r.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = r.data[i];
    if (r.is_nodata(v)) {
      out.data[i] = kUnlabeled;
      continue;
    }
    if (!(v >= 0.0 && v <= 65535.0) || v != std::floor(v))
      throw DataError(what + " holds a non-integer or out-of-range label");
    out.data[i] = static_cast<std::uint16_t>(v);
  }
  return out;
}

void require(const fs::path& p, const std::string& key, const std::string& command) {
  if (p.empty()) throw ConfigError("data." + key + " is required for " + command);
  if (!fs::exists(p)) throw DataError("data." + key + " does not exist: " + p.string());
}

ojson config_json(const PipelineConfig& c) { return ojson::parse(config_to_json(c)); }

// Per-stage bookkeeping: output directory, declared inputs, outputs written,
// deterministic summary and volatile timings.
class Stage {
 public:
  Stage(std::string command, const PipelineConfig& config, const RunOptions& options)
      : command_(std::move(command)), root_(config.output_dir), dir_(config.output_dir / command_), options_(options) {}

  const fs::path& dir() const { return dir_; }
  ojson params = ojson::object();
  ojson summary = ojson::object();
  ojson timing = ojson::object();

  void input(const std::string& label, const fs::path& path) { inputs_.emplace_back(label, path); }

  // Hashes the inputs and decides whether the existing outputs can stand.
  bool prepare(bool force) {
    std::sort(inputs_.begin(), inputs_.end());
    ContentHash h;
    h.update(command_);
    h.update(std::string_view("\n"));
    h.update(version());
    h.update(std::string_view("\n"));
    h.update(params.dump());
    for (const auto& [label, path] : inputs_) {
      const std::string digest = hash_file(path);
      input_hashes_.push_back(digest);
      h.update("\n" + label + "=" + digest);
    }
    key_ = h.hex();
    if (!force && matches_manifest()) return true;
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    return false;
  }

  fs::path output(const std::string& relative) {
    const fs::path p = dir_ / relative;
    fs::create_directories(p.parent_path());
    std::lock_guard lock(mutex_);
    outputs_.push_back(relative);
    return p;
  }

  void log(ojson line) {
    if (!options_.log) return;
    ojson out;
    out["command"] = command_;
    for (auto it = line.begin(); it != line.end(); ++it) out[it.key()] = it.value();
    std::lock_guard lock(mutex_);
    *options_.log << out.dump() << '\n';
    options_.log->flush();
  }

  void warn(const std::string& message) { log({{"level", "warning"}, {"message", message}}); }

  CommandResult finish(bool cached) {
    CommandResult r{command_, dir_, key_, cached, {}};
    if (cached) {
      r.outputs = cached_outputs_;
      return r;
    }
    std::sort(outputs_.begin(), outputs_.end());
    ojson m;
    m["command"] = command_;
    m["version"] = version();
    m["stage_key"] = key_;
    m["params"] = params;
    ojson in = ojson::object();
    for (std::size_t i = 0; i < inputs_.size(); ++i)
      in[inputs_[i].first] = {{"path", display(inputs_[i].second)}, {"hash", input_hashes_[i]}};
    m["inputs"] = in;
    ojson out = ojson::object();
    for (const auto& o : outputs_) out[o] = hash_file(dir_ / o);
    m["outputs"] = out;
    m["summary"] = summary;
    m["timing"] = timing;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &tm);
    m["created"] = stamp;
    write_text(dir_ / "manifest.json", m.dump(2) + "\n");
    r.outputs = outputs_;
    return r;
  }

 private:
  std::string display(const fs::path& p) const {
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path rel = abs.lexically_relative(fs::absolute(root_).lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
  }

  bool matches_manifest() {
    const fs::path path = dir_ / "manifest.json";
    if (!fs::exists(path)) return false;
    try {
      const auto m = ojson::parse(read_text(path));
      if (m.at("stage_key").get<std::string>() != key_) return false;
      std::vector<std::string> outs;
      for (auto it = m.at("outputs").begin(); it != m.at("outputs").end(); ++it) {
        const fs::path p = dir_ / it.key();
        if (!fs::exists(p) || hash_file(p) != it.value().get<std::string>()) return false;
        outs.push_back(it.key());
      }
      cached_outputs_ = outs;
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  std::string command_;
  fs::path root_;
  fs::path dir_;
  const RunOptions& options_;
  std::vector<std::pair<std::string, fs::path>> inputs_;
  std::vector<std::string> input_hashes_;
  std::vector<std::string> outputs_;
  std::vector<std::string> cached_outputs_;
  std::string key_;
  std::mutex mutex_;
};

void write_labels_pair(Stage& stage, const std::string& name, const LabelImage& labels) {
  write_label_image(stage.output(name + ".tif"), labels);
  write_label_png(stage.output(name + ".png"), labels);
}

CameraIntrinsics require_camera(const PipelineConfig& c, const std::string& command) {
  if (!c.camera_set) throw ConfigError("camera intrinsics are required for " + command);
  return c.camera;
}

// ---------------------------------------------------------------- synth

CommandResult cmd_synth(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("synth", c, options);
  const ojson cj = config_json(c);
  stage.params = {{"seed", c.seed}, {"synth", cj["synth"]}, {"clahe", cj["refine"]["clahe"]}};
  if (c.camera_set) stage.params["camera"] = cj["camera"];
  if (stage.prepare(options.force)) return stage.finish(true);

  const auto t0 = Clock::now();
  const SynthScene scene = generate_scene(c.synth.scene, c.seed);
  TrajectoryConfig traj = c.synth.trajectory;
  if (c.camera_set) traj.camera = c.camera;
  const std::vector<CameraPose> poses = make_trajectory(scene, traj, c.seed);
  FrameOptions fo = c.synth.frames;
  fo.clahe = c.clahe;
  const std::vector<SynthFrame> frames = synthesize_frames(scene, poses, traj.camera, fo, c.seed, c.workers);
  stage.timing["generate_s"] = seconds_since(t0);

  const auto t1 = Clock::now();
  write_geotiff(scene.dem, stage.output("dem.tif"));
  write_geotiff(scene.truth, stage.output("truth.tif"));
  write_geotiff(scene.lulc, stage.output("lulc.tif"));
  write_geotiff(scene.logits, stage.output("logits.tif"));
  write_geotiff(scene.imagery, stage.output("imagery.tif"));
  write_geotiff(scene.thermal, stage.output("thermal.tif"));

  std::string pose_csv = "timestamp,easting,northing,altitude,qw,qx,qy,qz\n";
  std::string frame_csv = "timestamp,file,trajectory\n";
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& p = poses[i];
    pose_csv += fmt(p.timestamp) + "," + fmt(p.position[0]) + "," + fmt(p.position[1]) + "," + fmt(p.position[2]) +
                "," + fmt(p.attitude.w) + "," + fmt(p.attitude.x) + "," + fmt(p.attitude.y) + "," +
                fmt(p.attitude.z) + "\n";
    frame_csv += fmt(p.timestamp) + ",frames/" + frame_name(i) + ".tif,synth\n";
  }
  write_text(stage.output("poses.csv"), pose_csv);
  write_text(stage.output("frames.csv"), frame_csv);

  std::vector<fs::path> frame_paths(frames.size()), truth_paths(frames.size()), mask_paths(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frame_paths[i] = stage.output("frames/" + frame_name(i) + ".tif");
    truth_paths[i] = stage.output("ground_truth/" + frame_name(i) + ".tif");
    mask_paths[i] = stage.output("masks/" + frame_name(i) + ".json");
  }
  parallel_for(frames.size(), c.workers, [&](std::size_t i) {
    const auto& f = frames[i];
    Raster raw = Raster::zeros(1, f.thermal_raw.height, f.thermal_raw.width, SampleType::UInt16, GeoTransform{},
                               Crs::local());
    for (std::size_t j = 0; j < raw.data.size(); ++j) raw.data[j] = f.thermal_raw.data[j];
    write_geotiff(raw, frame_paths[i]);
    write_label_image(truth_paths[i], f.truth);
    save_masks(mask_paths[i], truth_component_masks(f.truth, derive_seed(c.seed, kMaskFixtureStream, i),
                                                     c.synth.mask_jitter));
  });

  PipelineConfig next = c;
  next.output_dir = c.output_dir;
  next.crs = scene.config.crs;
  next.camera = traj.camera;
  next.camera_set = true;
  next.data = DataPaths{};
  next.data.lulc = stage.dir() / "lulc.tif";
  next.data.logits = stage.dir() / "logits.tif";
  next.data.dem = stage.dir() / "dem.tif";
  next.data.imagery = stage.dir() / "imagery.tif";
  next.data.truth = stage.dir() / "truth.tif";
  next.data.pose_log = stage.dir() / "poses.csv";
  next.data.frames = stage.dir() / "frames.csv";
  next.data.masks = stage.dir() / "masks";
  next.data.ground_truth = stage.dir() / "ground_truth";
  // Later stages write next to synth/, not inside it. The worker count
  // belongs to the invocation and stays out of the file.
  ojson next_json = ojson::parse(config_to_json(next, stage.dir()));
  next_json["output_dir"] = "..";
  next_json.erase("workers");
  write_text(stage.output("config.json"), next_json.dump(2) + "\n");
  stage.timing["write_s"] = seconds_since(t1);

  stage.summary = {{"frames", frames.size()},
                   {"size", scene.config.size},
                   {"num_classes", scene.config.num_classes},
                   {"crs", "EPSG:" + std::to_string(scene.config.crs.epsg())}};
  return stage.finish(false);
}

// ---------------------------------------------------------------- refine-lulc

CrfParams resolved_crf(const PipelineConfig& c, int bands) {
  CrfParams p = c.crf.params;
  if (p.theta_beta.empty()) p.theta_beta.assign(static_cast<std::size_t>(bands), 1.0);
  p.validate(bands);
  return p;
}

ojson crf_json(const PipelineConfig& c, const CrfParams& p) {
  PipelineConfig tmp = c;
  tmp.crf.params = p;
  return config_json(tmp)["crf"];
}

double label_miou(const LabelImage& pred, const LabelImage& gt, int num_classes) {
  ConfusionMatrix cm(num_classes);
  cm.accumulate(pred, gt);
  return miou(cm).miou;
}

int class_count(const LabelImage& a, int at_least) {
  int n = at_least;
  for (auto v : a.data)
    if (v != kUnlabeled) n = std::max(n, static_cast<int>(v) + 1);
  return n;
}

CommandResult cmd_refine_lulc(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("refine-lulc", c, options);
  require(c.data.logits, "logits", "refine-lulc");
  if (c.crf.enabled || !c.data.imagery.empty()) require(c.data.imagery, "imagery", "refine-lulc");
  if (!c.data.truth.empty()) require(c.data.truth, "truth", "refine-lulc");
  const ojson cj = config_json(c);
  stage.params = {{"crf", cj["crf"]}, {"theta0", c.tune.boundary.theta0}, {"theta", c.tune.boundary.theta}};
  stage.input("logits", c.data.logits);
  if (!c.data.imagery.empty()) stage.input("imagery", c.data.imagery);
  if (!c.data.truth.empty()) stage.input("truth", c.data.truth);
  if (stage.prepare(options.force)) return stage.finish(true);

  const Raster logits = read_raster(c.data.logits);
  validate(logits);
  const std::optional<Raster> imagery =
      c.data.imagery.empty() ? std::nullopt : std::optional<Raster>(read_raster(c.data.imagery));

  const auto t0 = Clock::now();
  const Raster passthrough = imagery ? upsample_argmax(logits, *imagery, c.workers) : argmax_bands(logits);
  Raster labels = passthrough;
  if (c.crf.enabled) {
    const CrfParams p = resolved_crf(c, imagery->bands);
    RefineLulcOptions ro;
    ro.inference.mode = c.crf.mode;
    ro.inference.workers = c.workers;
    ro.standardize = c.crf.standardize;
    LulcRefinement refined = refine_lulc_marginals(logits, *imagery, p, ro);
    labels = std::move(refined.labels);
    write_geotiff(refined.log_marginals, stage.output("log_marginals.tif"));
    stage.summary["crf"] = crf_json(c, p);
  }
  stage.timing["refine_s"] = seconds_since(t0);
  write_geotiff(labels, stage.output("labels.tif"));
  const LabelImage label_img = label_image_of(labels, "refined labels");
  write_label_png(stage.output("labels.png"), label_img);
  stage.summary["mode"] = c.crf.enabled ? "crf" : "passthrough";
  stage.summary["width"] = labels.width;
  stage.summary["height"] = labels.height;

  if (!c.data.truth.empty()) {
    const LabelImage truth = label_image_of(read_raster(c.data.truth), "data.truth");
    if (!truth.same_shape(label_img)) throw DataError("data.truth does not match the refined label grid");
    const LabelImage pass = label_image_of(passthrough, "passthrough labels");
    const int n = class_count(truth, logits.bands);
    ojson metrics;
    metrics["passthrough"] = {{"boundary_loss", boundary_loss(pass, truth, c.tune.boundary)},
                              {"miou", label_miou(pass, truth, n)}};
    metrics["refined"] = {{"boundary_loss", boundary_loss(label_img, truth, c.tune.boundary)},
                          {"miou", label_miou(label_img, truth, n)}};
    write_text(stage.output("metrics.json"), metrics.dump(2) + "\n");
    stage.summary["metrics"] = metrics;
  }
  return stage.finish(false);
}

// ---------------------------------------------------------------- render

CommandResult cmd_render(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("render", c, options);
  const CameraIntrinsics k = require_camera(c, "render");
  require(c.data.lulc, "lulc", "render");
  require(c.data.dem, "dem", "render");
  require(c.data.pose_log, "pose_log", "render");
  require(c.data.frames, "frames", "render");
  const ojson cj = config_json(c);
  stage.params = {{"camera", cj["camera"]}, {"render", cj["render"]}};
  if (c.crs) stage.params["crs"] = cj["crs"];
  stage.input("lulc", c.data.lulc);
  stage.input("dem", c.data.dem);
  stage.input("pose_log", c.data.pose_log);
  stage.input("frames", c.data.frames);
  if (stage.prepare(options.force)) return stage.finish(true);

  const Raster lulc = read_raster(c.data.lulc);
  const Raster dem = read_raster(c.data.dem);
  validate(lulc);
  validate(dem);
  if (!(lulc.crs == dem.crs)) throw DataError("data.lulc and data.dem use different CRSs");
  const Crs crs = c.crs.value_or(dem.crs);
  const std::vector<CameraPose> poses = read_pose_log(c.data.pose_log, crs, c.mount);
  if (poses.empty()) throw DataError("pose log holds no poses");
  const std::vector<FrameEntry> frames = read_frame_list(c.data.frames);

  std::vector<std::size_t> todo;
  ojson skipped = ojson::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const double t = frames[i].timestamp;
    if (t >= poses.front().timestamp && t <= poses.back().timestamp) {
      todo.push_back(i);
    } else {
      skipped.push_back(frames[i].name);
      stage.warn("frame " + frames[i].name + " at t=" + fmt(t) + " is outside the pose log span; skipped");
    }
  }
  if (todo.empty()) throw DataError("no frame timestamp falls inside the pose log span");

  RasterRenderOptions ro = c.render;
  ro.render.workers = 1;
  std::vector<double> coverage(todo.size());
  parallel_for(todo.size(), c.workers, [&](std::size_t j) {
    const FrameEntry& f = frames[todo[j]];
    const auto t0 = Clock::now();
    const CameraPose pose = interpolate_pose(poses, f.timestamp);
    const RenderResult r = render_raster(lulc, dem, pose, k, ro);
    const double render_s = seconds_since(t0);
    std::size_t covered = 0;
    for (auto v : r.labels.data) covered += v != kUnlabeled;
    coverage[j] = static_cast<double>(covered) / static_cast<double>(r.labels.size());
    const auto t1 = Clock::now();
    write_labels_pair(stage, f.name, r.labels);
    stage.log({{"frame", f.name}, {"render_s", render_s}, {"write_s", seconds_since(t1)}});
  });

  ojson rendered = ojson::array();
  for (std::size_t j = 0; j < todo.size(); ++j)
    rendered.push_back({{"frame", frames[todo[j]].name}, {"coverage", coverage[j]}});
  stage.summary = {{"rendered", rendered}, {"skipped", skipped}};
  return stage.finish(false);
}

// ---------------------------------------------------------------- refine-labels

CommandResult cmd_refine_labels(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("refine-labels", c, options);
  require(c.data.frames, "frames", "refine-labels");
  const fs::path projected = c.data.projected.empty() ? c.output_dir / "render" : c.data.projected;
  if (!fs::is_directory(projected)) throw DataError("projected label directory not found: " + projected.string());
  const MaskProvider provider = c.refine.provider;
  if (provider == MaskProvider::External) require(c.data.masks, "masks", "refine-labels with external masks");
  const ojson cj = config_json(c);
  ojson refine = cj["refine"];
  if (provider != MaskProvider::Slic) refine.erase("slic");
  if (provider != MaskProvider::Felzenszwalb) refine.erase("felzenszwalb");
  if (provider != MaskProvider::Slic && provider != MaskProvider::Felzenszwalb) refine.erase("clahe");
  stage.params = {{"refine", refine}};
  stage.input("frames", c.data.frames);

  const std::vector<FrameEntry> frames = read_frame_list(c.data.frames);
  std::vector<std::size_t> todo;
  std::vector<fs::path> label_files, mask_files;
  ojson skipped = ojson::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const fs::path lf = find_frame_file(projected, frames[i].name);
    if (lf.empty()) {
      skipped.push_back(frames[i].name);
      continue;
    }
    fs::path mf;
    if (provider == MaskProvider::External) {
      mf = c.data.masks / (frames[i].name + ".json");
      if (!fs::exists(mf)) throw DataError("no mask file for frame " + frames[i].name + ": " + mf.string());
      stage.input("masks:" + frames[i].name, mf);
    }
    if (provider == MaskProvider::Slic || provider == MaskProvider::Felzenszwalb)
      stage.input("frame:" + frames[i].name, frames[i].file);
    stage.input("projected:" + frames[i].name, lf);
    todo.push_back(i);
    label_files.push_back(lf);
    mask_files.push_back(mf);
  }
  if (stage.prepare(options.force)) return stage.finish(true);
  for (const auto& s : skipped) stage.warn("frame " + s.get<std::string>() + " has no projected labels; skipped");
  if (todo.empty()) throw DataError("no frame has projected labels in " + projected.string());

  std::vector<std::size_t> mask_counts(todo.size());
  parallel_for(todo.size(), c.workers, [&](std::size_t j) {
    const FrameEntry& f = frames[todo[j]];
    const auto t0 = Clock::now();
    const LabelImage proj = read_label_image(label_files[j]);
    MaskSet masks;
    switch (provider) {
      case MaskProvider::None: break;
      case MaskProvider::External: masks = load_masks(mask_files[j]); break;
      case MaskProvider::Slic:
      case MaskProvider::Felzenszwalb: {
        const ImageU8 img = preprocess_thermal(read_thermal_frame(f.file), c.clahe);
        if (!img.same_shape(proj)) throw DataError("frame " + f.name + " does not match its projected labels");
        masks = provider == MaskProvider::Slic ? slic(img, c.refine.slic) : felzenszwalb(img, c.refine.felzenszwalb);
        break;
      }
    }
    const double masks_s = seconds_since(t0);
    const auto t1 = Clock::now();
    LabelImage out = proj;
    if (provider != MaskProvider::None) {
      if (masks.width != proj.width || masks.height != proj.height)
        throw DataError("masks for frame " + f.name + " do not match its projected labels");
      out = aerolabel::refine(proj, masks, c.refine.fallback);
    }
    mask_counts[j] = masks.masks.size();
    const double refine_s = seconds_since(t1);
    write_labels_pair(stage, f.name, out);
    stage.log({{"frame", f.name}, {"masks_s", masks_s}, {"refine_s", refine_s}, {"masks", masks.masks.size()}});
  });

  ojson refined = ojson::array();
  for (std::size_t j = 0; j < todo.size(); ++j)
    refined.push_back({{"frame", frames[todo[j]].name}, {"masks", mask_counts[j]}});
  stage.summary = {{"provider", to_string(provider)}, {"refined", refined}, {"skipped", skipped}};
  return stage.finish(false);
}

// ---------------------------------------------------------------- evaluate

CommandResult cmd_evaluate(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("evaluate", c, options);
  require(c.data.frames, "frames", "evaluate");
  require(c.data.ground_truth, "ground_truth", "evaluate");
  if (!c.evaluate.class_map.empty() && !fs::exists(c.evaluate.class_map))
    throw ConfigError("evaluate.class_map does not exist: " + c.evaluate.class_map.string());
  const fs::path predictions = c.data.predictions.empty() ? c.output_dir / "refine-labels" : c.data.predictions;
  if (!fs::is_directory(predictions)) throw DataError("prediction directory not found: " + predictions.string());
  stage.params = {{"mode", to_string(c.evaluate.mode)}};
  stage.input("frames", c.data.frames);
  if (!c.evaluate.class_map.empty()) stage.input("class_map", c.evaluate.class_map);

  const std::vector<FrameEntry> frames = read_frame_list(c.data.frames);
  std::vector<std::size_t> todo;
  std::vector<fs::path> pred_files, gt_files;
  ojson skipped = ojson::array();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const fs::path pf = find_frame_file(predictions, frames[i].name);
    const fs::path gf = find_frame_file(c.data.ground_truth, frames[i].name);
    if (pf.empty() || gf.empty()) {
      skipped.push_back(frames[i].name);
      continue;
    }
    stage.input("prediction:" + frames[i].name, pf);
    stage.input("ground_truth:" + frames[i].name, gf);
    todo.push_back(i);
    pred_files.push_back(pf);
    gt_files.push_back(gf);
  }
  if (stage.prepare(options.force)) return stage.finish(true);
  for (const auto& s : skipped)
    stage.warn("frame " + s.get<std::string>() + " lacks a prediction or ground truth; skipped");
  if (todo.empty()) throw DataError("no frame has both a prediction and ground truth");

  std::vector<LabelImage> preds(todo.size()), gts(todo.size());
  parallel_for(todo.size(), c.workers, [&](std::size_t j) {
    preds[j] = read_label_image(pred_files[j]);
    gts[j] = read_label_image(gt_files[j]);
    if (!preds[j].same_shape(gts[j]))
      throw DataError("prediction and ground truth differ in size for frame " + frames[todo[j]].name);
  });

  ClassMap map;
  if (c.evaluate.class_map.empty()) {
    int n = 0;
    for (std::size_t j = 0; j < todo.size(); ++j) n = std::max({n, class_count(preds[j], 0), class_count(gts[j], 0)});
    if (n == 0) throw DataError("predictions and ground truth hold no labels");
    map = ClassMap::identity(n);
  } else {
    map = load_class_map(c.evaluate.class_map);
  }

  std::vector<ConfusionMatrix> cms(todo.size());
  parallel_for(todo.size(), c.workers, [&](std::size_t j) {
    cms[j] = ConfusionMatrix(map.num_targets());
    cms[j].accumulate(apply_class_map(preds[j], map), apply_class_map(gts[j], map));
  });

  std::vector<Trajectory> trajs;
  std::map<std::string, std::size_t> index;
  std::string per_frame = "frame,trajectory,miou\n";
  for (std::size_t j = 0; j < todo.size(); ++j) {
    const FrameEntry& f = frames[todo[j]];
    const std::string t = f.trajectory.empty() ? "default" : f.trajectory;
    auto [it, added] = index.emplace(t, trajs.size());
    if (added) trajs.push_back({t, {}});
    trajs[it->second].images.push_back(cms[j]);
    per_frame += f.name + "," + t + ",";
    if (!cms[j].empty()) per_frame += fmt(miou(cms[j]).miou);
    per_frame += "\n";
  }
  const TrajectoryMetrics m = trajectory_average(trajs, c.evaluate.mode);
  write_text(stage.output("metrics.csv"), metrics_csv(m, map.targets));
  write_text(stage.output("summary.csv"), summary_csv(m));
  write_text(stage.output("per_frame.csv"), per_frame);
  stage.summary = {{"class_map", map.name},
                   {"frames", todo.size()},
                   {"skipped", skipped},
                   {"dataset_miou", m.dataset_miou},
                   {"traj_avg_miou", m.traj_avg_miou}};
  return stage.finish(false);
}

// ---------------------------------------------------------------- tune

CommandResult cmd_tune(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("tune", c, options);
  require(c.data.logits, "logits", "tune");
  require(c.data.imagery, "imagery", "tune");
  require(c.data.truth, "truth", "tune");
  const ojson cj = config_json(c);
  stage.params = {{"seed", c.seed}, {"crf", cj["crf"]}, {"tune", cj["tune"]}};
  stage.input("logits", c.data.logits);
  stage.input("imagery", c.data.imagery);
  stage.input("truth", c.data.truth);
  if (stage.prepare(options.force)) return stage.finish(true);

  const Raster logits = read_raster(c.data.logits);
  const Raster imagery = read_raster(c.data.imagery);
  validate(logits);
  validate(imagery);
  const LabelImage truth = label_image_of(read_raster(c.data.truth), "data.truth");
  if (truth.width != imagery.width || truth.height != imagery.height)
    throw DataError("data.truth must lie on the imagery grid");
  const int L = logits.bands;
  std::vector<double> weights = c.tune.class_weights;
  if (weights.empty()) weights.assign(static_cast<std::size_t>(L), 1.0);
  if (static_cast<int>(weights.size()) != L) throw ConfigError("tune.class_weights needs one weight per class");

  const SearchSpace space = crf_search_space(imagery.bands, c.tune.budget, c.seed);
  CrfParams base = c.crf.params;
  base.theta_beta.assign(static_cast<std::size_t>(imagery.bands), 1.0);
  RefineLulcOptions ro;
  ro.inference.mode = c.crf.mode;
  ro.inference.workers = std::max(1, c.workers / c.tune.width);
  ro.standardize = c.crf.standardize;

  auto run = [&](const CrfParams& p) { return refine_lulc_marginals(logits, imagery, p, ro); };
  const Objective objective = [&](const std::vector<double>& x, std::uint64_t) {
    const CrfParams p = crf_params_from(x, space, base);
    const LulcRefinement r = run(p);
    if (c.tune.objective == TuneObjective::BoundaryLoss)
      return boundary_loss(label_image_of(r.labels, "refined labels"), truth, c.tune.boundary);
    MarginalField q{imagery.width, imagery.height, L, {}};
    q.q.resize(static_cast<std::size_t>(imagery.width) * imagery.height * L);
    const std::size_t plane = r.log_marginals.plane_size();
    for (std::size_t i = 0; i < plane; ++i)
      for (int l = 0; l < L; ++l) q.q[i * L + l] = std::exp(r.log_marginals.data[l * plane + i]);
    return weighted_cross_entropy(q, truth, weights);
  };

  const auto t0 = Clock::now();
  const TuneResult result = tune(space, objective, c.tune.strategy, c.tune.width);
  stage.timing["tune_s"] = seconds_since(t0);
  ojson durations = ojson::array();
  for (const auto& t : result.trials) durations.push_back(t.duration_s);
  stage.timing["trial_s"] = durations;

  write_trial_log(result, space, stage.output("trials.jsonl"), false);
  const CrfParams best = crf_params_from(result.best_params, space, base);
  ojson best_cfg;
  best_cfg["crf"] = crf_json(c, best);
  best_cfg["crf"]["enabled"] = true;
  write_text(stage.output("best.json"), best_cfg.dump(2) + "\n");

  const int n = class_count(truth, L);
  const LabelImage pass = label_image_of(upsample_argmax(logits, imagery, c.workers), "passthrough labels");
  const LabelImage tuned = label_image_of(run(best).labels, "refined labels");
  ojson report;
  report["objective"] = to_string(c.tune.objective);
  report["best_trial"] = result.best_trial;
  report["best_score"] = result.best_score;
  report["trials"] = result.trials.size();
  std::size_t failed = 0;
  for (const auto& t : result.trials) failed += t.status == TrialStatus::Failed;
  report["failed_trials"] = failed;
  report["passthrough"] = {{"boundary_loss", boundary_loss(pass, truth, c.tune.boundary)},
                           {"miou", label_miou(pass, truth, n)}};
  report["tuned"] = {{"boundary_loss", boundary_loss(tuned, truth, c.tune.boundary)},
                     {"miou", label_miou(tuned, truth, n)}};
  write_text(stage.output("report.json"), report.dump(2) + "\n");
  stage.summary = report;
  return stage.finish(false);
}

// ---------------------------------------------------------------- ablate

CommandResult cmd_ablate(const PipelineConfig& c, const RunOptions& options) {
  Stage stage("ablate", c, options);
  const ojson cj = config_json(c);
  stage.params = {{"seed", c.seed},     {"synth", cj["synth"]},   {"render", cj["render"]},
                  {"refine", cj["refine"]}, {"ablate", cj["ablate"]}};
  if (c.camera_set) stage.params["camera"] = cj["camera"];
  for (std::size_t i = 0; i < c.ablate.class_maps.size(); ++i) {
    if (!fs::exists(c.ablate.class_maps[i]))
      throw ConfigError("ablate.class_maps entry does not exist: " + c.ablate.class_maps[i].string());
    stage.input("class_map:" + std::to_string(i), c.ablate.class_maps[i]);
  }
  if (!c.ablate.pose && !c.ablate.resolution) throw ConfigError("ablate has neither pose nor resolution enabled");
  if (stage.prepare(options.force)) return stage.finish(true);

  const auto t0 = Clock::now();
  const SynthScene scene = generate_scene(c.synth.scene, c.seed);
  TrajectoryConfig traj = c.synth.trajectory;
  if (c.camera_set) traj.camera = c.camera;
  const auto poses = make_trajectory(scene, traj, c.seed);
  FrameOptions fo = c.synth.frames;
  fo.clahe = c.clahe;
  const auto frames = synthesize_frames(scene, poses, traj.camera, fo, c.seed, c.workers);

  SynthPipelineConfig pc = c.refine;
  pc.render = c.render;
  pc.workers = c.workers;
  std::vector<MaskSet> external;
  if (pc.provider == MaskProvider::External)
    for (std::size_t i = 0; i < frames.size(); ++i)
      external.push_back(
          truth_component_masks(frames[i].truth, derive_seed(c.seed, kMaskFixtureStream, i), c.synth.mask_jitter));
  const std::vector<MaskSet> masks = frame_masks(frames, pc, external.empty() ? nullptr : &external);
  stage.timing["setup_s"] = seconds_since(t0);

  const ClassMap identity = ClassMap::identity(scene.config.num_classes);
  if (c.ablate.pose) {
    const auto t1 = Clock::now();
    const auto grid = pose_noise_grid(c.ablate.meters, c.ablate.degrees, c.ablate.trials, c.seed);
    const PoseAblation a = run_pose_ablation(scene, frames, traj.camera, masks, grid, pc, identity);
    write_text(stage.output("pose.csv"), pose_ablation_csv(a));
    if (c.ablate.plots) {
      std::vector<PlotSeries> series;
      for (const auto& row : a.rows) {
        auto it = std::find_if(series.begin(), series.end(), [&](const PlotSeries& s) { return s.name == row.axis; });
        if (it == series.end()) {
          series.push_back({row.axis, {}, {}});
          it = series.end() - 1;
        }
        it->x.push_back(row.sigma);
        it->y.push_back(row.mean);
      }
      write_line_plot_png(stage.output("pose.png"), series);
    }
    stage.summary["baseline_miou"] = a.baseline;
    stage.summary["pose_levels"] = a.rows.size();
    stage.timing["pose_s"] = seconds_since(t1);
  }
  if (c.ablate.resolution) {
    const auto t1 = Clock::now();
    std::vector<ClassMap> sets{identity};
    for (const auto& p : c.ablate.class_maps) sets.push_back(load_class_map(p));
    const auto rows = run_resolution_ablation(scene, frames, traj.camera, masks, c.ablate.resolutions, sets, pc);
    write_text(stage.output("resolution.csv"), resolution_ablation_csv(rows));
    if (c.ablate.plots) {
      std::vector<PlotSeries> series;
      for (const auto& cs : sets) {
        PlotSeries s{cs.name, {}, {}};
        for (const auto& r : rows)
          if (r.class_set == cs.name) {
            s.x.push_back(r.resolution);
            s.y.push_back(r.miou);
          }
        series.push_back(std::move(s));
      }
      write_line_plot_png(stage.output("resolution.png"), series);
    }
    stage.summary["resolution_rows"] = rows.size();
    stage.timing["resolution_s"] = seconds_since(t1);
  }
  stage.summary["frames"] = frames.size();
  stage.summary["provider"] = to_string(pc.provider);
  return stage.finish(false);
}

}  // namespace

// ---------------------------------------------------------------- files

std::vector<FrameEntry> parse_frame_list(const std::string& text, const fs::path& base_dir) {
  std::stringstream in(text);
  std::string line;
  std::vector<std::string> header;
  int col_t = -1, col_f = -1, col_traj = -1;
  std::vector<FrameEntry> out;
  std::set<std::string> names;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto cells = split(t);
    if (header.empty()) {
      header = cells;
      for (int i = 0; i < static_cast<int>(cells.size()); ++i) {
        if (cells[i] == "timestamp") col_t = i;
        else if (cells[i] == "file") col_f = i;
        else if (cells[i] == "trajectory") col_traj = i;
        else throw DataError("frame list: unknown column '" + cells[i] + "'");
      }
      if (col_t < 0 || col_f < 0) throw DataError("frame list header needs 'timestamp' and 'file' columns");
      continue;
    }
    if (cells.size() != header.size())
      throw DataError("frame list line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " fields");
    FrameEntry e;
    const std::string& ts = cells[col_t];
    const auto r = std::from_chars(ts.data(), ts.data() + ts.size(), e.timestamp);
    if (r.ec != std::errc() || r.ptr != ts.data() + ts.size() || !std::isfinite(e.timestamp))
      throw DataError("frame list line " + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
    if (cells[col_f].empty()) throw DataError("frame list line " + std::to_string(line_no) + ": empty file");
    const fs::path f = cells[col_f];
    e.file = (f.is_absolute() || base_dir.empty()) ? f : (base_dir / f).lexically_normal();
    e.trajectory = col_traj >= 0 ? cells[col_traj] : "";
    e.name = f.stem().string();
    if (!names.insert(e.name).second) throw DataError("frame list: duplicate frame name '" + e.name + "'");
    out.push_back(std::move(e));
  }
  if (header.empty()) throw DataError("frame list is empty");
  return out;
}

std::vector<FrameEntry> read_frame_list(const fs::path& path) {
  return parse_frame_list(read_text(path), fs::absolute(path).parent_path());
}

LabelImage read_label_image(const fs::path& path) {
  if (path.extension() == ".png") {
    const ImageU8 g = read_png_gray(path);
    LabelImage out(g.width, g.height);
    for (std::size_t i = 0; i < g.size(); ++i) out.data[i] = g.data[i];
    return out;
  }
  return label_image_of(read_raster(path), path.string());
}

void write_label_image(const fs::path& path, const LabelImage& labels) { write_raster(label_raster(labels), path); }

ImageU16 read_thermal_frame(const fs::path& path) {
  if (path.extension() == ".png") {
    const ImageU8 g = read_png_gray(path);
    ImageU16 out(g.width, g.height);
    for (std::size_t i = 0; i < g.size(); ++i) out.data[i] = g.data[i];
    return out;
  }
  const Raster r = read_raster(path);
  if (r.bands < 1) throw DataError(path.string() + " has no bands");
  ImageU16 out(r.width, r.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = r.data[i];
    if (r.is_nodata(v) || !(v >= 0.0 && v <= 65535.0))
      throw DataError(path.string() + ": thermal values must be finite and within 0..65535");
    out.data[i] = static_cast<std::uint16_t>(std::lround(v));
  }
  return out;
}

fs::path find_frame_file(const fs::path& dir, const std::string& name) {
  for (const char* ext : {".tif", ".tiff", ".hdr", ".png"}) {
    const fs::path p = dir / (name + ext);
    if (fs::exists(p)) return p;
  }
  return {};
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"synth",    "refine-lulc", "render", "refine-labels",
                                                 "evaluate", "tune",        "ablate"};
  return names;
}

CommandResult run_command(const std::string& command, const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  if (command == "synth") return cmd_synth(config, options);
  if (command == "refine-lulc") return cmd_refine_lulc(config, options);
  if (command == "render") return cmd_render(config, options);
  if (command == "refine-labels") return cmd_refine_labels(config, options);
  if (command == "evaluate") return cmd_evaluate(config, options);
  if (command == "tune") return cmd_tune(config, options);
  if (command == "ablate") return cmd_ablate(config, options);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace aerolabel
