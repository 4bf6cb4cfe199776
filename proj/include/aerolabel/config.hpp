#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aerolabel/camera.hpp"
#include "aerolabel/densecrf.hpp"
#include "aerolabel/eval.hpp"
#include "aerolabel/refine.hpp"
#include "aerolabel/render.hpp"
#include "aerolabel/superpixel.hpp"
#include "aerolabel/synth.hpp"
#include "aerolabel/thermal.hpp"
#include "aerolabel/tuning.hpp"

namespace aerolabel {

/// Input locations. Relative paths in a config file resolve against the
/// file's directory; empty means not given.
struct DataPaths {
  std::filesystem::path lulc;  // label raster rendered onto frames
  std::filesystem::path logits;  // one band per class
  std::filesystem::path dem;
  std::filesystem::path imagery;  // conditioning image for refine-lulc and tune
  std::filesystem::path truth;  // fine label raster on the imagery grid (tune, refine-lulc scoring)
  std::filesystem::path pose_log;
  std::filesystem::path frames;  // CSV: timestamp,file[,trajectory]
  std::filesystem::path masks;  // directory of <frame>.json mask files
  std::filesystem::path ground_truth;  // directory of <frame>.tif / <frame>.png labels
  std::filesystem::path projected;  // refine-labels input; default <output_dir>/render
  std::filesystem::path predictions;  // evaluate input; default <output_dir>/refine-labels
};

struct CrfSection {
  bool enabled = true;
  CrfParams params{};
  InferenceMode mode = InferenceMode::Lattice;
  bool standardize = true;
};

struct EvaluateSection {
  /// Applied to both predictions and ground truth; empty means identity over
  /// the ids present.
  std::filesystem::path class_map;
  TrajectoryMode mode = TrajectoryMode::SummedConfusion;
};

enum class TuneObjective { BoundaryLoss, WeightedCrossEntropy };

struct TuneSection {
  int budget = 50;
  SearchStrategy strategy = SearchStrategy::Tpe;
  int width = 1;
  TuneObjective objective = TuneObjective::BoundaryLoss;
  BoundaryLossConfig boundary{};
  /// Per-class weights for the cross-entropy objective; empty means all 1.
  std::vector<double> class_weights;
};

struct AblateSection {
  bool pose = true;
  bool resolution = true;
  std::vector<double> meters{0.0, 1.0, 2.0, 4.0, 8.0};
  std::vector<double> degrees{0.0, 1.0, 2.0, 3.5, 7.0};
  int trials = 10;
  std::vector<double> resolutions{1.0, 2.0, 5.0, 10.0, 20.0};
  /// Class maps scored in the resolution sweep; empty means identity only.
  std::vector<std::filesystem::path> class_maps;
  bool plots = true;
};

struct SynthSection {
  SynthConfig scene{};
  TrajectoryConfig trajectory{};
  FrameOptions frames{};
  double mask_jitter = 0.5;
};

struct PipelineConfig {
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int workers = 1;
  /// Frame of the pose log; defaults to the DEM's CRS.
  std::optional<Crs> crs;
  DataPaths data;
  CameraIntrinsics camera{};
  BodyToCamera mount{};
  bool camera_set = false;
  CrfSection crf;
  RasterRenderOptions render{.spacing = 0.5};
  SynthPipelineConfig refine{};
  ClaheOptions clahe{};
  EvaluateSection evaluate;
  TuneSection tune;
  AblateSection ablate;
  SynthSection synth;

  void validate() const;
};

/// Strict JSON: every object rejects keys it does not know. Relative paths
/// are resolved against `base_dir`.
PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});

/// `section.key=value` with a JSON value (bare words are taken as strings).
using ConfigOverride = std::string;

/// Reads `path`, applies `overrides` in order, then path-only environment
/// variables: AEROLABEL_OUTPUT_DIR and AEROLABEL_DATA_<KEY> for every key of
/// `data`. Any other AEROLABEL_ variable is a ConfigError.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<ConfigOverride>& overrides = {},
                           const std::map<std::string, std::string>& env = {});

/// AEROLABEL_* entries of the process environment.
std::map<std::string, std::string> aerolabel_environment();

/// Canonical JSON of every setting. Paths are written relative to
/// `relative_to` when given and below it, absolute otherwise.
std::string config_to_json(const PipelineConfig& config, const std::filesystem::path& relative_to = {});

std::string to_string(InferenceMode m);
std::string to_string(TuneObjective o);
std::string to_string(SearchStrategy s);
std::string to_string(Fallback f);
std::string to_string(TrajectoryMode m);

}  // namespace aerolabel
