#include <gtest/gtest.h>

#include <unistd.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aerolabel/config.hpp"
#include "aerolabel/geotiff.hpp"
#include "aerolabel/hash.hpp"
#include "aerolabel/pipeline.hpp"

using namespace aerolabel;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aerolabel_pipeline_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

json manifest(const CommandResult& r) { return json::parse(read_file(r.directory / "manifest.json")); }

const char* kSmallWorld = R"({
  "seed": 11,
  "camera": {"fx": 112, "fy": 112, "cx": 80, "cy": 64, "width": 160, "height": 128},
  "refine": {"slic": {"n_segments": 40}},
  "synth": {
    "scene": {"size": 128, "coarse_res": 8, "feature_scale": 40, "terrain_scale": 60, "terrain_amplitude": 3},
    "trajectory": {"frames": 4, "altitude_min": 25, "altitude_max": 35, "radius": 20},
    "frame_spacing": 0.5
  }
})";

// Synthetic inputs shared by the command tests; every test writes its stage
// outputs under its own directory.
const fs::path& synth_dir() {
  static const fs::path dir = [] {
    const fs::path root = scratch("world");
    write_file(root / "base.json", kSmallWorld);
    PipelineConfig c = load_config(root / "base.json");
    c.output_dir = root;
    return run_command("synth", c).directory;
  }();
  return dir;
}

PipelineConfig world_config(const std::string& test, const std::vector<std::string>& overrides = {}) {
  PipelineConfig c = load_config(synth_dir() / "config.json", overrides);
  c.output_dir = scratch(test);
  return c;
}

}  // namespace

TEST(Config, DefaultsFromEmptyObject) {
  const PipelineConfig c = parse_config("{}");
  EXPECT_EQ(c.workers, 1);
  EXPECT_EQ(c.refine.provider, MaskProvider::Slic);
  EXPECT_EQ(c.refine.slic.n_segments, 100);
  EXPECT_DOUBLE_EQ(c.refine.slic.compactness, 10.0);
  EXPECT_DOUBLE_EQ(c.refine.felzenszwalb.scale, 1e4);
  EXPECT_DOUBLE_EQ(c.render.spacing, 0.5);
  EXPECT_EQ(c.tune.budget, 50);
  EXPECT_EQ(c.tune.boundary.theta0, 3);
  EXPECT_EQ(c.tune.boundary.theta, 5);
  EXPECT_FALSE(c.camera_set);
}

TEST(Config, RejectsUnknownKeysAtEveryLevel) {
  for (const char* text : {R"({"sed": 1})", R"({"crf": {"w3": 1}})", R"({"refine": {"slic": {"segments": 5}}})",
                           R"({"synth": {"scene": {"colour": 1}}})",
                           R"({"camera": {"fx": 1, "mount": {"roll": 0}}})", R"({"data": {"lulc_path": "a"}})",
                           R"({"render": {"horizon": {"far": 3}}})"}) {
    try {
      parse_config(text);
      ADD_FAILURE() << "accepted " << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("unknown config key"), std::string::npos) << e.what();
    }
  }
}

TEST(Config, RejectsWrongTypesAndRanges) {
  EXPECT_THROW(parse_config(R"({"workers": "2"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"workers": 0})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"crf": {"enabled": 1}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"crf": {"theta_beta": [1, "x"]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"refine": {"provider": "sam"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"tune": {"strategy": "grid"}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"crs": "EPSG:3857"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"ablate": {"meters": [-1]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"synth": {"mask_jitter": 2}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"camera": {"fx": -1, "fy": 1, "cx": 0, "cy": 0, "width": 4, "height": 4}})"),
               ConfigError);
  EXPECT_THROW(parse_config("[1, 2]"), ConfigError);
  EXPECT_THROW(parse_config("{"), ConfigError);
}

TEST(Config, CanonicalJsonIsAFixedPoint) {
  const PipelineConfig c = parse_config(R"({
    "seed": 9, "workers": 3, "crs": 32618,
    "camera": {"fx": 500, "fy": 501, "cx": 320, "cy": 256, "width": 640, "height": 512, "k1": -0.1,
               "mount": {"rotation": [0, 1, 0, 0], "lever_arm": [0.1, 0, -0.2]}},
    "crf": {"w1": 47.4, "theta_beta": [1, 2, 3], "mode": "exact", "normalization": "none"},
    "refine": {"provider": "felzenszwalb", "fallback": "unlabeled", "felzenszwalb": {"sigma": 0}},
    "evaluate": {"mode": "mean_image_miou"},
    "tune": {"budget": 7, "strategy": "random", "objective": "weighted_cross_entropy", "class_weights": [1, 2]},
    "ablate": {"pose": false, "resolutions": [1, 10]},
    "synth": {"scene": {"priors": [0.4, 0.3, 0.2, 0.1]}, "trajectory": {"frames": 3}}
  })");
  const std::string once = config_to_json(c);
  EXPECT_EQ(config_to_json(parse_config(once)), once);
  const json j = json::parse(once);
  EXPECT_EQ(j["crs"], "EPSG:32618");
  EXPECT_EQ(j["refine"]["provider"], "felzenszwalb");
  EXPECT_EQ(j["tune"]["objective"], "weighted_cross_entropy");
  EXPECT_DOUBLE_EQ(j["camera"]["k1"].get<double>(), -0.1);
}

TEST(Config, RelativePathsFollowTheConfigFile) {
  const fs::path dir = scratch("relative");
  write_file(dir / "sub" / "cfg.json", R"({"output_dir": "../out", "data": {"lulc": "a.tif", "dem": "/abs/dem.tif"},
                                           "ablate": {"class_maps": ["maps/x.json"]}})");
  const PipelineConfig c = load_config(dir / "sub" / "cfg.json");
  EXPECT_EQ(c.data.lulc, dir / "sub" / "a.tif");
  EXPECT_EQ(c.data.dem, fs::path("/abs/dem.tif"));
  EXPECT_EQ(c.output_dir, dir / "out");
  ASSERT_EQ(c.ablate.class_maps.size(), 1u);
  EXPECT_EQ(c.ablate.class_maps[0], dir / "sub" / "maps" / "x.json");
  const json j = json::parse(config_to_json(c, dir / "sub"));
  EXPECT_EQ(j["data"]["lulc"], "a.tif");
  EXPECT_EQ(j["data"]["dem"], "/abs/dem.tif");
}

TEST(Config, OverridesApplyBeforeValidation) {
  const fs::path dir = scratch("overrides");
  write_file(dir / "cfg.json", R"({"refine": {"provider": "slic"}})");
  const PipelineConfig c =
      load_config(dir / "cfg.json", {"refine.provider=external", "crf.theta_beta=[1,2]", "tune.budget=3",
                                     "refine.slic.n_segments=12", "data.masks=m"});
  EXPECT_EQ(c.refine.provider, MaskProvider::External);
  EXPECT_EQ(c.crf.params.theta_beta, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(c.tune.budget, 3);
  EXPECT_EQ(c.refine.slic.n_segments, 12);
  EXPECT_EQ(c.data.masks, dir / "m");
  EXPECT_THROW(load_config(dir / "cfg.json", {"tune.budgte=3"}), ConfigError);
  EXPECT_THROW(load_config(dir / "cfg.json", {"novalue"}), ConfigError);
  EXPECT_THROW(load_config(dir / "cfg.json", {"refine.provider.x=1"}), ConfigError);
}

TEST(Config, EnvironmentOverridesPathsOnly) {
  const fs::path dir = scratch("env");
  write_file(dir / "cfg.json", R"({"data": {"dem": "dem.tif"}})");
  const PipelineConfig c = load_config(dir / "cfg.json", {},
                                       {{"AEROLABEL_DATA_DEM", "/data/other.tif"},
                                        {"AEROLABEL_OUTPUT_DIR", "/tmp/elsewhere"},
                                        {"PATH", "/usr/bin"}});
  EXPECT_EQ(c.data.dem, fs::path("/data/other.tif"));
  EXPECT_EQ(c.output_dir, fs::path("/tmp/elsewhere"));
  EXPECT_THROW(load_config(dir / "cfg.json", {}, {{"AEROLABEL_SEED", "3"}}), ConfigError);
  EXPECT_THROW(load_config(dir / "cfg.json", {}, {{"AEROLABEL_DATA_NOPE", "/x"}}), ConfigError);
  EXPECT_THROW(load_config(dir / "cfg.json", {}, {{"AEROLABEL_DATA_DEM", ""}}), ConfigError);
}

TEST(FrameList, ParsesResolvesAndNamesFrames) {
  const auto frames = parse_frame_list("# flight 3\ntimestamp,file,trajectory\n\n1.5,img/a.tif,t1\n2,/abs/b.png,t2\n",
                                       "/data");
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_DOUBLE_EQ(frames[0].timestamp, 1.5);
  EXPECT_EQ(frames[0].file, fs::path("/data/img/a.tif"));
  EXPECT_EQ(frames[0].name, "a");
  EXPECT_EQ(frames[0].trajectory, "t1");
  EXPECT_EQ(frames[1].file, fs::path("/abs/b.png"));
  EXPECT_EQ(parse_frame_list("file,timestamp\nx.tif,3\n")[0].trajectory, "");
}

TEST(FrameList, RejectsMalformedLists) {
  EXPECT_THROW(parse_frame_list(""), DataError);
  EXPECT_THROW(parse_frame_list("timestamp\n1\n"), DataError);
  EXPECT_THROW(parse_frame_list("timestamp,file,when\n1,a.tif,x\n"), DataError);
  EXPECT_THROW(parse_frame_list("timestamp,file\n1,a.tif\n2,dir/a.png\n"), DataError);
  EXPECT_THROW(parse_frame_list("timestamp,file\nsoon,a.tif\n"), DataError);
  EXPECT_THROW(parse_frame_list("timestamp,file\n1\n"), DataError);
  EXPECT_THROW(parse_frame_list("timestamp,file\nnan,a.tif\n"), DataError);
}

TEST(LabelFiles, TiffAndPngRoundTrip) {
  const fs::path dir = scratch("labels");
  LabelImage small(5, 3);
  for (std::size_t i = 0; i < small.size(); ++i) small.data[i] = static_cast<std::uint16_t>(i % 4);
  small.data[7] = kUnlabeled;
  write_label_image(dir / "a.tif", small);
  EXPECT_EQ(read_label_image(dir / "a.tif"), small);
  EXPECT_EQ(read_raster(dir / "a.tif").sample_type, SampleType::UInt8);

  LabelImage wide = small;
  wide.data[2] = 300;
  write_label_image(dir / "b.tif", wide);
  EXPECT_EQ(read_label_image(dir / "b.tif"), wide);
  EXPECT_EQ(read_raster(dir / "b.tif").sample_type, SampleType::UInt16);

  EXPECT_EQ(find_frame_file(dir, "a"), dir / "a.tif");
  EXPECT_TRUE(find_frame_file(dir, "c").empty());
}

TEST(PipelineCommands, SynthWritesAReadyConfig) {
  const PipelineConfig c = load_config(synth_dir() / "config.json");
  EXPECT_TRUE(c.camera_set);
  EXPECT_EQ(c.output_dir, synth_dir().parent_path());
  EXPECT_FALSE(json::parse(read_file(synth_dir() / "config.json")).contains("workers"));
  EXPECT_EQ(c.camera.width, 160);
  ASSERT_TRUE(c.crs.has_value());
  EXPECT_EQ(c.crs->epsg(), 32633);
  EXPECT_EQ(read_frame_list(c.data.frames).size(), 4u);
  for (const char* f : {"dem.tif", "lulc.tif", "logits.tif", "imagery.tif", "truth.tif", "poses.csv",
                        "frames/0003.tif", "ground_truth/0003.tif", "masks/0003.json"})
    EXPECT_TRUE(fs::exists(synth_dir() / f)) << f;
  EXPECT_EQ(read_raster(c.data.logits).bands, 4);
}

TEST(PipelineCommands, CliRunMatchesTheInProcessPipeline) {
  const PipelineConfig c = world_config("inprocess");
  run_command("render", c);
  run_command("refine-labels", c);
  const json m = manifest(run_command("evaluate", c));

  SynthConfig sc = c.synth.scene;
  const SynthScene scene = generate_scene(sc, c.seed);
  TrajectoryConfig t = c.synth.trajectory;
  t.camera = c.camera;
  FrameOptions fo = c.synth.frames;
  const auto frames = synthesize_frames(scene, make_trajectory(scene, t, c.seed), c.camera, fo, c.seed);
  SynthPipelineConfig pc = c.refine;
  pc.render = c.render;
  const auto run = run_pipeline(scene.lulc, scene.dem, frames, c.camera, frame_masks(frames, pc), pc);
  const double expected = miou(score_frames(run.refined, frames, ClassMap::identity(4))).miou;
  EXPECT_DOUBLE_EQ(m["summary"]["dataset_miou"].get<double>(), expected);
}

TEST(PipelineCommands, ProviderNoneCopiesProjectedLabels) {
  const PipelineConfig c = world_config("none", {"refine.provider=none"});
  run_command("render", c);
  const CommandResult r = run_command("refine-labels", c);
  EXPECT_EQ(manifest(r)["summary"]["provider"], "none");
  for (const auto& f : read_frame_list(c.data.frames))
    EXPECT_EQ(read_label_image(r.directory / (f.name + ".tif")),
              read_label_image(c.output_dir / "render" / (f.name + ".tif")));
}

TEST(PipelineCommands, RenderSkipsFramesOutsideThePoseLog) {
  PipelineConfig c = world_config("span");
  const auto frames = read_frame_list(c.data.frames);
  std::string csv = "timestamp,file\n-5,early.tif\n";
  for (const auto& f : frames) csv += std::to_string(f.timestamp) + "," + f.file.string() + "\n";
  csv += "1000,late.tif\n";
  write_file(c.output_dir / "frames.csv", csv);
  c.data.frames = c.output_dir / "frames.csv";
  const CommandResult r = run_command("render", c);
  const json m = manifest(r);
  EXPECT_EQ(m["summary"]["rendered"].size(), frames.size());
  EXPECT_EQ(m["summary"]["skipped"], json::array({"early", "late"}));
  EXPECT_FALSE(fs::exists(r.directory / "early.tif"));

  write_file(c.output_dir / "frames.csv", "timestamp,file\n-5,early.tif\n1000,late.tif\n");
  EXPECT_THROW(run_command("render", c), DataError);
}

TEST(PipelineCommands, RefineLulcPassthroughIsTheLogitArgmax) {
  const PipelineConfig c = world_config("passthrough", {"crf.enabled=false"});
  const CommandResult r = run_command("refine-lulc", c);
  const Raster expected = upsample_argmax(read_raster(c.data.logits), read_raster(c.data.imagery));
  const Raster got = read_raster(r.directory / "labels.tif");
  EXPECT_EQ(got.data, expected.data);
  EXPECT_FALSE(fs::exists(r.directory / "log_marginals.tif"));
  const json m = manifest(r);
  EXPECT_EQ(m["summary"]["metrics"]["passthrough"], m["summary"]["metrics"]["refined"]);
}

TEST(PipelineCommands, RefineLulcCrfImprovesTheSyntheticScene) {
  const PipelineConfig c = world_config("crf", {"crf.theta_beta=[1,1,1]"});
  const json m = manifest(run_command("refine-lulc", c));
  EXPECT_GT(m["summary"]["metrics"]["refined"]["miou"].get<double>(),
            m["summary"]["metrics"]["passthrough"]["miou"].get<double>());
}

TEST(PipelineCommands, StageKeyChangesExactlyWhenInputsChange) {
  PipelineConfig c = world_config("key", {"crf.enabled=false"});
  fs::copy_file(c.data.logits, c.output_dir / "logits.tif");
  c.data.logits = c.output_dir / "logits.tif";
  const CommandResult first = run_command("refine-lulc", c);
  EXPECT_FALSE(first.cached);
  const CommandResult again = run_command("refine-lulc", c);
  EXPECT_TRUE(again.cached);
  EXPECT_EQ(again.stage_key, first.stage_key);
  EXPECT_EQ(again.outputs, first.outputs);

  Raster logits = read_raster(c.data.logits);
  logits.data[0] += 1.0;
  write_geotiff(logits, c.data.logits);
  const CommandResult changed = run_command("refine-lulc", c);
  EXPECT_FALSE(changed.cached);
  EXPECT_NE(changed.stage_key, first.stage_key);

  RunOptions force;
  force.force = true;
  const CommandResult forced = run_command("refine-lulc", c, force);
  EXPECT_FALSE(forced.cached);
  EXPECT_EQ(forced.stage_key, changed.stage_key);
}

TEST(PipelineCommands, ExternalAndSlicProvidersDiffer) {
  const PipelineConfig slic_cfg = world_config("providers");
  run_command("render", slic_cfg);
  const CommandResult s = run_command("refine-labels", slic_cfg);
  const std::string slic_hash = manifest(s)["outputs"]["0000.tif"];
  PipelineConfig ext_cfg = slic_cfg;
  ext_cfg.refine.provider = MaskProvider::External;
  const CommandResult e = run_command("refine-labels", ext_cfg);
  const json m = manifest(e);
  EXPECT_EQ(m["summary"]["provider"], "external");
  EXPECT_NE(m["outputs"]["0000.tif"].get<std::string>(), slic_hash);
  EXPECT_NE(e.stage_key, s.stage_key);
}

TEST(PipelineCommands, SelfEvaluationIsPerfect) {
  PipelineConfig c = world_config("self");
  c.data.predictions = c.data.ground_truth;
  const CommandResult r = run_command("evaluate", c);
  const json m = manifest(r);
  EXPECT_DOUBLE_EQ(m["summary"]["dataset_miou"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(m["summary"]["traj_avg_miou"].get<double>(), 1.0);
  EXPECT_EQ(read_file(r.directory / "summary.csv").substr(0, 28), "dataset_miou,traj_avg_miou\n1");
}

TEST(PipelineCommands, EvaluateUsesTheClassMap) {
  PipelineConfig c = world_config("classmap");
  c.data.predictions = c.data.ground_truth;
  write_file(c.output_dir / "two.json",
             R"({"name": "two", "targets": ["a", "b"], "map": {"0": 0, "1": 0, "2": 1, "3": 1}})");
  c.evaluate.class_map = c.output_dir / "two.json";
  const CommandResult r = run_command("evaluate", c);
  const std::string csv = read_file(r.directory / "metrics.csv");
  EXPECT_NE(csv.find(",a,"), std::string::npos);
  EXPECT_EQ(csv.find("class_2"), std::string::npos);
  EXPECT_EQ(manifest(r)["summary"]["class_map"], "two");
}

TEST(PipelineCommands, TuneBudgetOneReturnsTheSampledPoint) {
  const PipelineConfig c = world_config("tune1", {"tune.budget=1"});
  const CommandResult r = run_command("tune", c);
  std::stringstream lines(read_file(r.directory / "trials.jsonl"));
  std::vector<json> trials;
  for (std::string l; std::getline(lines, l);) trials.push_back(json::parse(l));
  ASSERT_EQ(trials.size(), 1u);
  EXPECT_FALSE(trials[0].contains("duration_s"));
  const json best = json::parse(read_file(r.directory / "best.json"));
  EXPECT_DOUBLE_EQ(best["crf"]["w1"].get<double>(), trials[0]["params"]["w1"].get<double>());
  EXPECT_DOUBLE_EQ(best["crf"]["theta_beta"][2].get<double>(), trials[0]["params"]["theta_beta_2"].get<double>());
  const json m = manifest(r);
  EXPECT_EQ(m["timing"]["trial_s"].size(), 1u);
  EXPECT_DOUBLE_EQ(m["summary"]["best_score"].get<double>(), trials[0]["score"].get<double>());
}

TEST(PipelineCommands, TrialLogRowsEqualBudget) {
  const PipelineConfig c = world_config("tune4", {"tune.budget=4", "tune.width=2", "tune.strategy=random"});
  const CommandResult r = run_command("tune", c);
  std::stringstream lines(read_file(r.directory / "trials.jsonl"));
  int n = 0;
  for (std::string l; std::getline(lines, l);) ++n;
  EXPECT_EQ(n, 4);
}

TEST(PipelineCommands, ZeroNoiseAblationEqualsBaseline) {
  const PipelineConfig c = world_config(
      "ablate", {"ablate.meters=[0]", "ablate.degrees=[0]", "ablate.trials=2", "ablate.resolutions=[8]"});
  const CommandResult r = run_command("ablate", c);
  const json m = manifest(r);
  const double baseline = m["summary"]["baseline_miou"];
  std::stringstream rows(read_file(r.directory / "pose.csv"));
  std::string line;
  std::getline(rows, line);
  int n = 0;
  while (std::getline(rows, line)) {
    const auto cells = [&] {
      std::vector<std::string> out;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
      return out;
    }();
    EXPECT_NEAR(std::stod(cells[6]), baseline, 1e-9) << line;
    ++n;
  }
  EXPECT_EQ(n, 4);
  EXPECT_TRUE(fs::exists(r.directory / "pose.png"));
  EXPECT_TRUE(fs::exists(r.directory / "resolution.csv"));
}

TEST(PipelineCommands, OutputsIndependentOfWorkerCount) {
  std::map<std::string, json> outputs[2];
  for (int pass = 0; pass < 2; ++pass) {
    PipelineConfig c = world_config("workers" + std::to_string(pass));
    c.workers = pass == 0 ? 1 : 3;
    for (const char* cmd : {"render", "refine-labels", "evaluate"}) {
      const json m = manifest(run_command(cmd, c));
      outputs[pass][cmd] = m["outputs"];
      outputs[pass][std::string(cmd) + ":summary"] = m["summary"];
    }
  }
  EXPECT_EQ(outputs[0], outputs[1]);
}

TEST(PipelineCommands, MissingInputsAreReported) {
  PipelineConfig c = world_config("missing");
  c.data.dem.clear();
  EXPECT_THROW(run_command("render", c), ConfigError);
  c = world_config("missing2");
  c.data.dem = c.output_dir / "nope.tif";
  EXPECT_THROW(run_command("render", c), DataError);
  c = world_config("missing3");
  c.camera_set = false;
  EXPECT_THROW(run_command("render", c), ConfigError);
  EXPECT_THROW(run_command("refine-labels", world_config("missing4")), DataError);
  EXPECT_THROW(run_command("paint", world_config("missing5")), ConfigError);
}
