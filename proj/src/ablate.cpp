#include "aerolabel/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "aerolabel/hash.hpp"
#include "aerolabel/parallel.hpp"

namespace aerolabel {

namespace {

constexpr std::uint64_t kPoseNoiseStream = 0x706f7365;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double dataset_miou(const ConfusionMatrix& cm) { return miou(cm).miou; }

}  // namespace

void NoiseSpec::validate() const {
  if (!(sigma_pos_xy >= 0.0) || !(sigma_alt >= 0.0) || !(sigma_att_deg >= 0.0))
    throw ConfigError("noise sigmas must be non-negative");
  if (trials < 1) throw ConfigError("noise level needs at least one trial");
}

PoseDraw pose_draw(std::uint64_t seed, int trial, std::size_t frame) {
  SynthRng rng(derive_seed(derive_seed(seed, kPoseNoiseStream, static_cast<std::uint64_t>(trial)), frame));
  PoseDraw d;
  d.dx = rng.normal();
  d.dy = rng.normal();
  d.dz = rng.normal();
  d.rx = rng.normal();
  d.ry = rng.normal();
  d.rz = rng.normal();
  return d;
}

CameraPose perturb_pose(const CameraPose& pose, const NoiseSpec& spec, const PoseDraw& draw) {
  CameraPose p = pose;
  if (spec.sigma_pos_xy > 0.0) {
    p.position[0] += spec.sigma_pos_xy * draw.dx;
    p.position[1] += spec.sigma_pos_xy * draw.dy;
  }
  if (spec.sigma_alt > 0.0) p.position[2] += spec.sigma_alt * draw.dz;
  if (spec.sigma_att_deg > 0.0) {
    const double s = spec.sigma_att_deg * std::numbers::pi / 180.0;
    const Quaternion noise = Quaternion::from_axis_angle({1, 0, 0}, s * draw.rx) *
                             Quaternion::from_axis_angle({0, 1, 0}, s * draw.ry) *
                             Quaternion::from_axis_angle({0, 0, 1}, s * draw.rz);
    p.attitude = (p.attitude * noise).normalized();
  }
  return p;
}

std::vector<NoiseLevel> pose_noise_grid(const std::vector<double>& meters, const std::vector<double>& degrees,
                                        int trials, std::uint64_t seed) {
  std::vector<NoiseLevel> grid;
  auto add = [&](const std::string& axis, double sigma, double pos, double alt, double att) {
    NoiseLevel l{axis, sigma, NoiseSpec{pos, alt, att, trials, seed}};
    l.spec.validate();
    grid.push_back(l);
  };
  for (double m : meters) add("position", m, m, 0.0, 0.0);
  for (double m : meters) add("altitude", m, 0.0, m, 0.0);
  for (double d : degrees) add("attitude", d, 0.0, 0.0, d);
  if (meters.size() == degrees.size())
    for (std::size_t i = 0; i < meters.size(); ++i) add("joint", meters[i], meters[i], meters[i], degrees[i]);
  return grid;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must be in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PoseAblation run_pose_ablation(const SynthScene& scene, const std::vector<SynthFrame>& frames,
                               const CameraIntrinsics& k, const std::vector<MaskSet>& masks,
                               const std::vector<NoiseLevel>& grid, const SynthPipelineConfig& config,
                               const ClassMap& class_map) {
  if (masks.size() != frames.size()) throw ConfigError("need one mask set per frame");
  if (frames.empty()) throw DataError("pose ablation needs at least one frame");
  for (const auto& level : grid) level.spec.validate();

  SynthPipelineConfig frame_config = config;
  frame_config.workers = 1;
  frame_config.render.render.workers = 1;
  auto score = [&](const NoiseSpec* spec, int trial) {
    ConfusionMatrix cm(class_map.num_targets());
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const CameraPose pose =
          spec ? perturb_pose(frames[f].pose, *spec, pose_draw(spec->seed, trial, f)) : frames[f].pose;
      const LabelImage pred = run_frame(scene.lulc, scene.dem, pose, k, masks[f], frame_config);
      cm.accumulate(apply_class_map(pred, class_map), apply_class_map(frames[f].truth, class_map));
    }
    return dataset_miou(cm);
  };

  struct Job {
    std::size_t level;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t l = 0; l < grid.size(); ++l)
    for (int t = 0; t < grid[l].spec.trials; ++t) jobs.push_back({l, t});
  std::vector<double> results(jobs.size() + 1);
  parallel_for(jobs.size() + 1, config.workers, [&](std::size_t i) {
    results[i] = i == jobs.size() ? score(nullptr, 0) : score(&grid[jobs[i].level].spec, jobs[i].trial);
  });

  PoseAblation out;
  out.baseline = results.back();
  std::size_t next = 0;
  for (const auto& level : grid) {
    AblationRow row{level.axis, level.sigma, level.spec, 0.0, 0.0, 0.0, {}};
    for (int t = 0; t < level.spec.trials; ++t) row.trial_miou.push_back(results[next++]);
    double sum = 0.0;
    for (double v : row.trial_miou) sum += v;
    row.mean = sum / static_cast<double>(row.trial_miou.size());
    row.p025 = percentile(row.trial_miou, 2.5);
    row.p975 = percentile(row.trial_miou, 97.5);
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string pose_ablation_csv(const PoseAblation& a) {
  std::string s = "axis,sigma,sigma_pos_xy,sigma_alt,sigma_att_deg,trials,mean_miou,p2_5,p97_5,baseline_miou\n";
  for (const auto& r : a.rows) {
    s += r.axis + "," + fmt(r.sigma) + "," + fmt(r.spec.sigma_pos_xy) + "," + fmt(r.spec.sigma_alt) + "," +
         fmt(r.spec.sigma_att_deg) + "," + std::to_string(r.spec.trials) + "," + fmt(r.mean) + "," + fmt(r.p025) +
         "," + fmt(r.p975) + "," + fmt(a.baseline) + "\n";
  }
  return s;
}

std::vector<ResolutionRow> run_resolution_ablation(const SynthScene& scene, const std::vector<SynthFrame>& frames,
                                                   const CameraIntrinsics& k, const std::vector<MaskSet>& masks,
                                                   const std::vector<double>& resolutions,
                                                   const std::vector<ClassMap>& class_sets,
                                                   const SynthPipelineConfig& config) {
  if (class_sets.empty()) throw ConfigError("resolution ablation needs at least one class set");
  std::vector<ResolutionRow> rows;
  for (double res : resolutions) {
    SynthConfig probe = scene.config;
    probe.coarse_res = res;
    const int factor = probe.coarse_factor();
    const Raster lulc = majority_pool(scene.truth, factor);
    const PipelineRun run = run_pipeline(lulc, scene.dem, frames, k, masks, config);
    for (const auto& cs : class_sets) rows.push_back({res, cs.name, dataset_miou(score_frames(run.refined, frames, cs))});
  }
  return rows;
}

std::string resolution_ablation_csv(const std::vector<ResolutionRow>& rows) {
  std::string s = "resolution_m,class_set,miou\n";
  for (const auto& r : rows) s += fmt(r.resolution) + "," + r.class_set + "," + fmt(r.miou) + "\n";
  return s;
}

}  // namespace aerolabel
