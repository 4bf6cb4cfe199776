#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "aerolabel/camera.hpp"
#include "aerolabel/eval.hpp"
#include "aerolabel/masks.hpp"
#include "aerolabel/raster.hpp"
#include "aerolabel/refine.hpp"
#include "aerolabel/render.hpp"
#include "aerolabel/superpixel.hpp"
#include "aerolabel/thermal.hpp"

namespace aerolabel {

/// Normal and uniform draws built only on the raw mt19937_64 stream, so
/// synthetic data does not depend on the standard library's distributions.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct SynthConfig {
  int size = 512;  // fine pixels per side
  double fine_res = 1.0;
  double coarse_res = 10.0;
  int num_classes = 4;
  /// Target class fractions; empty means uniform.
  std::vector<double> priors;
  double feature_scale = 80.0;  // meters, coarsest noise octave
  int octaves = 2;
  double base_elevation = 100.0;
  double terrain_amplitude = 15.0;
  double terrain_scale = 200.0;
  int imagery_bands = 3;
  double imagery_noise = 6.0;
  /// Relative amplitude of the multiplicative illumination field.
  double illumination = 0.15;
  double thermal_blur = 0.5;  // Gaussian sigma, meters
  double thermal_noise = 10.0;  // raw counts
  Crs crs = Crs::utm(33, Hemisphere::North);
  double origin_x = 500000.0;
  double origin_y = 5100000.0;

  /// Pooling factor coarse_res / fine_res; ConfigError unless integral.
  int coarse_factor() const;
  std::vector<double> class_priors() const;
  void validate() const;
};

/// Small world with fine structure and two rare classes, much of which the
/// coarse product misses; used for CRF tuning checks.
SynthConfig refinement_scene_config();

/// Co-registered synthetic world. `truth` is the fine label raster and
/// `lulc` its majority pool at coarse_res; `logits` holds one band per class
/// on the coarse grid.
struct SynthScene {
  std::uint64_t seed = 0;
  SynthConfig config;
  Raster dem;
  Raster truth;
  Raster lulc;
  Raster logits;
  Raster imagery;
  Raster thermal;
};

SynthScene generate_scene(const SynthConfig& config, std::uint64_t seed);

/// Sum of value-noise octaves sampled at `size` x `size` pixel centres of
/// spacing `res`; zero mean and roughly unit variance.
std::vector<double> value_noise(int size, double res, double scale, int octaves, std::uint64_t seed);

/// Mode of each factor x factor block (partial blocks at the right and bottom
/// edges), ties to the smallest id, nodata ignored; all-nodata blocks stay
/// nodata.
Raster majority_pool(const Raster& labels, int factor);

/// log((count_l + 0.5) / (n + 0.5 L)) per block, where count_l is the number
/// of fine pixels of class l among the n valid ones.
Raster pooled_logits(const Raster& labels, int factor, int num_classes);

struct TrajectoryConfig {
  int frames = 20;
  double altitude_min = 60.0;  // above the terrain under the camera
  double altitude_max = 100.0;
  double tilt_max_deg = 15.0;  // off nadir, toward the direction of travel
  double radius = 130.0;  // semi-major axis of the flight ellipse
  double dt = 1.0;
  CameraIntrinsics camera{450.0, 450.0, 320.0, 256.0, 640, 512, 0.0, 0.0};  // about 71 deg across
  void validate() const;
};

/// Attitude looking `tilt` radians off nadir toward the horizontal heading
/// `heading` (radians counter-clockwise from east), image-up along the heading.
Quaternion heading_tilt_attitude(double heading, double tilt);

/// Closed elliptical loop around the scene centre with altitude and tilt
/// varying smoothly along it; the phase is drawn from `seed`.
std::vector<CameraPose> make_trajectory(const SynthScene& scene, const TrajectoryConfig& config,
                                        std::uint64_t seed);

/// One camera frame: the observed thermal image and the fine labels rendered
/// at the true pose.
struct SynthFrame {
  CameraPose pose;
  ImageU16 thermal_raw;
  ImageU8 thermal;
  LabelImage truth;
};

struct FrameOptions {
  RasterRenderOptions render{.spacing = 0.25};
  /// Per-frame sensor noise, raw counts.
  double sensor_noise = 10.0;
  ClaheOptions clahe{};
};

std::vector<SynthFrame> synthesize_frames(const SynthScene& scene, const std::vector<CameraPose>& poses,
                                          const CameraIntrinsics& k, const FrameOptions& options,
                                          std::uint64_t seed, int workers = 1);

enum class MaskProvider { None, External, Slic, Felzenszwalb };

MaskProvider parse_mask_provider(const std::string& name);
std::string to_string(MaskProvider p);

struct SynthPipelineConfig {
  MaskProvider provider = MaskProvider::Slic;
  SlicOptions slic{};
  FelzenszwalbOptions felzenszwalb{};
  Fallback fallback = Fallback::KeepProjected;
  RasterRenderOptions render{.spacing = 0.5};
  int workers = 1;
};

/// Masks for every frame from the configured provider. External masks must
/// be supplied one per frame; None yields empty sets.
std::vector<MaskSet> frame_masks(const std::vector<SynthFrame>& frames, const SynthPipelineConfig& config,
                                 const std::vector<MaskSet>* external = nullptr);

/// Stand-in for a high quality class-agnostic segmenter: 4-connected
/// components of the true labels, with boundary pixels reassigned to a random
/// neighbouring component with probability `jitter`.
MaskSet truth_component_masks(const LabelImage& truth, std::uint64_t seed, double jitter = 0.5);

/// Rendered then refined labels for one frame seen from `pose`.
LabelImage run_frame(const Raster& lulc, const Raster& dem, const CameraPose& pose, const CameraIntrinsics& k,
                     const MaskSet& masks, const SynthPipelineConfig& config);

struct PipelineRun {
  std::vector<LabelImage> projected;
  std::vector<LabelImage> refined;
};

/// Renders `lulc` at every frame pose and refines with `masks` (one set per frame).
PipelineRun run_pipeline(const Raster& lulc, const Raster& dem, const std::vector<SynthFrame>& frames,
                         const CameraIntrinsics& k, const std::vector<MaskSet>& masks,
                         const SynthPipelineConfig& config);

/// Confusion summed over frames after mapping both sides through `map`.
ConfusionMatrix score_frames(const std::vector<LabelImage>& predicted, const std::vector<SynthFrame>& frames,
                             const ClassMap& map);

}  // namespace aerolabel
