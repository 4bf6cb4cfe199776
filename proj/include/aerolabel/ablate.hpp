#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aerolabel/eval.hpp"
#include "aerolabel/synth.hpp"

namespace aerolabel {

/// Pose noise for one ablation level. Position noise is horizontal (x and y
/// independently), altitude noise vertical; attitude noise is three
/// independent small rotations about the body axes.
struct NoiseSpec {
  double sigma_pos_xy = 0.0;  // meters
  double sigma_alt = 0.0;  // meters
  double sigma_att_deg = 0.0;
  int trials = 1;
  std::uint64_t seed = 0;

  bool is_zero() const { return sigma_pos_xy == 0.0 && sigma_alt == 0.0 && sigma_att_deg == 0.0; }
  void validate() const;
};

/// Standard normal draws behind one perturbation; scaled by the sigmas.
struct PoseDraw {
  double dx = 0, dy = 0, dz = 0;
  double rx = 0, ry = 0, rz = 0;
};

/// Draws for (trial, frame). They do not depend on the sigmas, so every level
/// of a sweep sees the same underlying noise and only its scale changes.
PoseDraw pose_draw(std::uint64_t seed, int trial, std::size_t frame);

/// Components whose sigma is zero are left untouched, so a zero spec returns
/// the pose bit for bit.
CameraPose perturb_pose(const CameraPose& pose, const NoiseSpec& spec, const PoseDraw& draw);

struct NoiseLevel {
  std::string axis;  // position, altitude, attitude or joint
  double sigma = 0.0;  // meters, or degrees on the attitude axis
  NoiseSpec spec;
};

/// Separate sweeps of position, altitude (both over `meters`) and attitude
/// (over `degrees`), plus a joint sweep pairing meters[i] with degrees[i].
std::vector<NoiseLevel> pose_noise_grid(const std::vector<double>& meters, const std::vector<double>& degrees,
                                        int trials, std::uint64_t seed);

struct AblationRow {
  std::string axis;
  double sigma = 0.0;
  NoiseSpec spec;
  double mean = 0.0;
  double p025 = 0.0;
  double p975 = 0.0;
  std::vector<double> trial_miou;
};

struct PoseAblation {
  double baseline = 0.0;
  std::vector<AblationRow> rows;
};

/// Linear-interpolated percentile of unsorted values, q in [0, 100].
double percentile(std::vector<double> values, double q);

/// Dataset mIoU of every trial at every level. Labels are rendered at the
/// perturbed poses and refined with the frame's masks; scoring is against
/// the fine truth rendered at the true pose. Trials run in parallel.
PoseAblation run_pose_ablation(const SynthScene& scene, const std::vector<SynthFrame>& frames,
                               const CameraIntrinsics& k, const std::vector<MaskSet>& masks,
                               const std::vector<NoiseLevel>& grid, const SynthPipelineConfig& config,
                               const ClassMap& class_map);

std::string pose_ablation_csv(const PoseAblation& a);

struct ResolutionRow {
  double resolution = 0.0;
  std::string class_set;
  double miou = 0.0;
};

/// Majority-pools the fine truth to each resolution (integer multiples of the
/// fine resolution), runs the pipeline and scores each class set.
std::vector<ResolutionRow> run_resolution_ablation(const SynthScene& scene, const std::vector<SynthFrame>& frames,
                                                   const CameraIntrinsics& k, const std::vector<MaskSet>& masks,
                                                   const std::vector<double>& resolutions,
                                                   const std::vector<ClassMap>& class_sets,
                                                   const SynthPipelineConfig& config);

std::string resolution_ablation_csv(const std::vector<ResolutionRow>& rows);

}  // namespace aerolabel
