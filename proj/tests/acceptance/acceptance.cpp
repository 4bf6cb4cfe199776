// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--cli PATH] [--only N[,N...]] [--workdir DIR]

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aerolabel/ablate.hpp"
#include "aerolabel/camera.hpp"
#include "aerolabel/config.hpp"
#include "aerolabel/densecrf.hpp"
#include "aerolabel/eval.hpp"
#include "aerolabel/geotiff.hpp"
#include "aerolabel/hash.hpp"
#include "aerolabel/masks.hpp"
#include "aerolabel/pipeline.hpp"
#include "aerolabel/render.hpp"
#include "aerolabel/synth.hpp"
#include "aerolabel/tuning.hpp"

using namespace aerolabel;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "" : "!") + what);
  }
};

int hardware_workers() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

// ------------------------------------------------------------ criterion 1

// Voronoi regions of random colour (even seeds) or a smooth colour field
// (odd seeds), three channels in [0, 1].
std::vector<double> test_image(std::uint64_t seed, int W, int H) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> U(0, 1);
  std::normal_distribution<double> N(0, 1);
  std::vector<double> img(static_cast<std::size_t>(W) * H * 3);
  if (seed % 2 == 0) {
    const int K = 7;
    std::vector<double> cx(K), cy(K), col(K * 3);
    for (int k = 0; k < K; ++k) {
      cx[k] = U(g) * W;
      cy[k] = U(g) * H;
      for (int c = 0; c < 3; ++c) col[k * 3 + c] = U(g);
    }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        int best = 0;
        double bd = 1e300;
        for (int k = 0; k < K; ++k) {
          const double d = (x - cx[k]) * (x - cx[k]) + (y - cy[k]) * (y - cy[k]);
          if (d < bd) {
            bd = d;
            best = k;
          }
        }
        for (int c = 0; c < 3; ++c) img[(y * W + x) * 3 + c] = col[best * 3 + c] + 0.01 * N(g);
      }
  } else {
    double fx[3], fy[3], ph[3];
    for (int c = 0; c < 3; ++c) {
      fx[c] = 0.05 + 0.2 * U(g);
      fy[c] = 0.05 + 0.2 * U(g);
      ph[c] = 6.28 * U(g);
    }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c)
          img[(y * W + x) * 3 + c] = 0.5 + 0.5 * std::sin(fx[c] * x + ph[c]) * std::cos(fy[c] * y);
  }
  return img;
}

Outcome criterion_1() {
  Outcome o;
  const int W = 32, H = 32, n = W * H, D = 5, L = 4;
  const double theta_spatial[] = {3.0, 10.0, 30.0};
  const double theta_intensity[] = {0.1, 0.25};
  double worst = 0.0, lattice_s = 0.0;
  for (int seed = 0; seed < 10; ++seed) {
    const auto img = test_image(1000 + seed, W, H);
    const double ts = theta_spatial[seed % 3], ti = theta_intensity[seed % 2];
    std::vector<double> f(static_cast<std::size_t>(n) * D), v(static_cast<std::size_t>(n) * L);
    std::mt19937_64 g(2000 + seed);
    std::uniform_real_distribution<double> U(0, 1);
    for (int i = 0; i < n; ++i) {
      f[i * D] = (i % W) / ts;
      f[i * D + 1] = (i / W) / ts;
      for (int c = 0; c < 3; ++c) f[i * D + 2 + c] = img[i * 3 + c] / ti;
      for (int l = 0; l < L; ++l) v[i * L + l] = U(g);
    }
    const auto exact = gaussian_filter_bruteforce(v, L, f, D);
    const auto t0 = Clock::now();
    const PermutohedralLattice lattice(f, D);
    std::vector<double> approx(v.size());
    lattice.filter(v, approx, L);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < L; ++l) approx[i * L + l] -= lattice.self_weight(i) * v[i * L + l];
    lattice_s += seconds_since(t0);
    double num = 0, den = 0;
    for (std::size_t k = 0; k < exact.size(); ++k) {
      num += (approx[k] - exact[k]) * (approx[k] - exact[k]);
      den += exact[k] * exact[k];
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  o.check(worst <= 0.05, "worst rel L2 " + fmt(worst) + " <= 0.05");
  o.check(lattice_s < 1.0, "lattice time " + fmt(lattice_s, 3) + " s < 1 s");
  return o;
}

// ------------------------------------------------------------ criterion 2

// Mean field written out from the model: per-pair kernels from pixel
// coordinates and intensities, Potts penalty, softmax per pixel.
std::vector<double> reference_mean_field(int W, int H, const std::vector<double>& logits, int L,
                                         const std::vector<double>& img, int C, const CrfParams& p, bool symmetric) {
  const int n = W * H;
  auto k_app = [&](int i, int j) {
    const double dx = (i % W - j % W) / p.theta_alpha, dy = (i / W - j / W) / p.theta_alpha;
    double e = dx * dx + dy * dy;
    for (int c = 0; c < C; ++c) {
      const double d = (img[i * C + c] - img[j * C + c]) / p.theta_beta[c];
      e += d * d;
    }
    return std::exp(-0.5 * e);
  };
  auto k_smooth = [&](int i, int j) {
    const double dx = (i % W - j % W) / p.theta_gamma, dy = (i / W - j / W) / p.theta_gamma;
    return std::exp(-0.5 * (dx * dx + dy * dy));
  };
  std::vector<double> na(n, 1.0), ns(n, 1.0);
  if (symmetric)
    for (int i = 0; i < n; ++i) {
      double sa = 0, ss = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          sa += k_app(i, j);
          ss += k_smooth(i, j);
        }
      na[i] = 1.0 / std::sqrt(sa);
      ns[i] = 1.0 / std::sqrt(ss);
    }
  std::vector<double> q(static_cast<std::size_t>(n) * L);
  auto softmax_into_q = [&](const std::vector<double>& e) {
    for (int i = 0; i < n; ++i) {
      double mx = -1e300, s = 0;
      for (int l = 0; l < L; ++l) mx = std::max(mx, e[i * L + l]);
      for (int l = 0; l < L; ++l) s += std::exp(e[i * L + l] - mx);
      for (int l = 0; l < L; ++l) q[i * L + l] = std::exp(e[i * L + l] - mx) / s;
    }
  };
  softmax_into_q(logits);
  for (int it = 0; it < p.num_iterations; ++it) {
    std::vector<double> energy(q.size());
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < L; ++l) {
        double pen = 0;
        for (int lp = 0; lp < L; ++lp) {
          if (lp == l) continue;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            pen += (p.w1 * na[i] * k_app(i, j) * na[j] + p.w2 * ns[i] * k_smooth(i, j) * ns[j]) * q[j * L + lp];
          }
        }
        energy[i * L + l] = logits[i * L + l] - pen;
      }
    softmax_into_q(energy);
  }
  return q;
}

Outcome criterion_2() {
  Outcome o;
  std::mt19937_64 g(33);
  std::normal_distribution<double> N(0, 1);
  double worst = 0.0;
  for (int instance = 0; instance < 5; ++instance) {
    std::vector<double> logits(18), img(18);
    for (auto& x : logits) x = N(g);
    for (auto& x : img) x = N(g);
    CrfParams p;
    p.w1 = 2.5 + instance;
    p.w2 = 1.25;
    p.theta_alpha = 2.0;
    p.theta_gamma = 1.5;
    p.theta_beta = {0.8, 1.7};
    p.num_iterations = 5;
    for (auto norm : {KernelNormalization::None, KernelNormalization::Symmetric}) {
      p.normalization = norm;
      const auto ref = reference_mean_field(3, 3, logits, 2, img, 2, p, norm == KernelNormalization::Symmetric);
      const MarginalField q =
          mean_field_infer(3, 3, logits, 2, img, 2, p, CompatibilityMatrix::potts(2), {InferenceMode::Exact});
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(q.q[i] - ref[i]));
    }
  }
  o.check(worst <= 1e-9, "3x3 max |dq| " + sci(worst) + " <= 1e-9");

  int mismatched = 0;
  std::uniform_int_distribution<int> dim(1, 12), classes(2, 6), iters(1, 10);
  for (int instance = 0; instance < 100; ++instance) {
    const int W = dim(g), H = dim(g), L = classes(g), C = 1 + instance % 3;
    std::vector<double> logits(static_cast<std::size_t>(W) * H * L), img(static_cast<std::size_t>(W) * H * C);
    for (auto& x : logits) x = 3.0 * N(g);
    for (auto& x : img) x = N(g);
    CrfParams p;
    p.w1 = p.w2 = 0.0;
    p.theta_beta.assign(C, 0.5);
    p.num_iterations = iters(g);
    for (auto mode : {InferenceMode::Exact, InferenceMode::Lattice}) {
      const LabelImage a =
          mean_field_infer(W, H, logits, L, img, C, p, CompatibilityMatrix::potts(L), {mode}).argmax();
      for (int i = 0; i < W * H; ++i) {
        const double* row = &logits[static_cast<std::size_t>(i) * L];
        mismatched += a.data[i] != std::max_element(row, row + L) - row;
      }
    }
  }
  o.check(mismatched == 0, "w1=w2=0 argmax mismatches " + std::to_string(mismatched) + " / 100 instances");
  return o;
}

// ------------------------------------------------------------ criterion 3

LabelImage labels_of(const Raster& r) {
  LabelImage out(r.width, r.height);
  for (std::size_t i = 0; i < r.data.size(); ++i) out.data[i] = static_cast<std::uint16_t>(r.data[i]);
  return out;
}

LabelImage split_image(int W, int H, int col) {
  LabelImage im(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) im.at(x, y) = x < col ? 0 : 1;
  return im;
}

double label_miou(const LabelImage& pred, const LabelImage& truth, int n) {
  ConfusionMatrix cm(n);
  cm.accumulate(pred, truth);
  return miou(cm).miou;
}

Outcome criterion_3() {
  Outcome o;
  LabelImage a(24, 24);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) a.at(x, y) = static_cast<std::uint16_t>((x / 5 + y / 7) % 3);
  o.check(boundary_loss(a, a) == 0.0, "identical 0");
  o.check(boundary_loss(split_image(64, 8, 50), split_image(64, 8, 8), {3, 5}) == 1.0, "separated 1");
  // Edge 7|8 against 14|15: the prediction band (cols 12..15) lies within 5
  // px of the truth band (cols 5..10), P = 1; truth cols 7..10 are matched,
  // 5 and 6 are not, R = 4/6; BF1 = 0.8 for both classes.
  const double shifted = boundary_loss(split_image(16, 16, 15), split_image(16, 16, 8), {3, 5});
  o.check(std::abs(shifted - 0.2) <= 1e-12, "shifted edge " + fmt(shifted, 12));

  const auto t0 = Clock::now();
  const SynthConfig sc = refinement_scene_config();
  const SynthScene train = generate_scene(sc, 7);
  const SynthScene test = generate_scene(sc, 42);
  const int L = sc.num_classes;
  const SearchSpace space = crf_search_space(train.imagery.bands, 50, 7);
  CrfParams base;
  base.theta_beta.assign(static_cast<std::size_t>(train.imagery.bands), 1.0);
  const LabelImage train_truth = labels_of(train.truth);
  const Objective objective = [&](const std::vector<double>& x, std::uint64_t) {
    return boundary_loss(labels_of(refine_lulc(train.logits, train.imagery, crf_params_from(x, space, base))),
                         train_truth);
  };
  const TuneResult result = tune(space, objective, SearchStrategy::Tpe);
  const CrfParams best = crf_params_from(result.best_params, space, base);

  const LabelImage truth = labels_of(test.truth);
  const LabelImage before = labels_of(upsample_argmax(test.logits, test.imagery));
  const LabelImage after = labels_of(refine_lulc(test.logits, test.imagery, best));
  const double bl0 = boundary_loss(before, truth), bl1 = boundary_loss(after, truth);
  const double m0 = label_miou(before, truth, L), m1 = label_miou(after, truth, L);
  o.check(static_cast<int>(result.trials.size()) == 50, "50 trials");
  o.check(bl0 - bl1 >= 0.1, "held-out BL " + fmt(bl0) + " -> " + fmt(bl1) + " (drop >= 0.1)");
  o.check(m1 > m0, "mIoU " + fmt(m0) + " -> " + fmt(m1));
  o.notes.push_back(fmt(seconds_since(t0), 1) + " s");
  return o;
}

// ------------------------------------------------------------ criterion 4

CameraIntrinsics intrinsics(int w, int h, double f) {
  CameraIntrinsics k;
  k.fx = k.fy = f;
  k.cx = w / 2.0;
  k.cy = h / 2.0;
  k.width = w;
  k.height = h;
  return k;
}

CameraPose nadir_at(double x, double y, double z) {
  CameraPose p;
  p.position = {x, y, z};
  p.attitude = nadir_attitude();
  return p;
}

Outcome criterion_4() {
  Outcome o;
  std::mt19937_64 g(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double round_trip = 0.0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto k = intrinsics(640, 512, 400 + 800 * U(g));
    if (trial % 2) {
      k.k1 = -0.2 + 0.4 * U(g);
      k.k2 = -0.05 + 0.1 * U(g);
    }
    CameraPose pose;
    pose.position = {2000 * (U(g) - 0.5), 2000 * (U(g) - 0.5), 1000 * U(g)};
    pose.attitude = Quaternion::from_yaw_pitch_roll(6.28 * U(g), 3.0 * U(g) - 1.5, 3.0 * U(g) - 1.5);
    pose.mount.lever_arm = {U(g), U(g), U(g)};
    const double u = k.width * U(g), v = k.height * U(g), d = 1 + 5000 * U(g);
    const auto p = world_to_image(image_to_world(u, v, d, pose, k), pose, k);
    round_trip = std::max(round_trip, p ? std::max(std::abs(p->u - u), std::abs(p->v - v)) : 1e9);
  }
  o.check(round_trip <= 1e-9, "round trip " + sci(round_trip) + " px");

  const auto k = intrinsics(160, 120, 200.0);
  double nadir = 0.0;
  for (double h : {20.0, 100.0, 333.0})
    for (double off : {-30.0, -7.5, 0.0, 12.25, 40.0}) {
      const auto pose = nadir_at(5.0, -3.0, h);
      const auto pe = world_to_image({5.0 + off, -3.0, 0}, pose, k);
      const auto pn = world_to_image({5.0, -3.0 + off, 0}, pose, k);
      if (!pe || !pn) {
        nadir = 1e9;
        continue;
      }
      nadir = std::max({nadir, std::abs(pe->u - (k.cx + k.fx * off / h)), std::abs(pe->v - k.cy),
                        std::abs(pe->depth - h), std::abs(pn->u - k.cx), std::abs(pn->v - (k.cy - k.fy * off / h))});
    }
  o.check(nadir <= 1e-9, "nadir " + sci(nadir));

  // Half-plane x < xb is class 1; the label edge sits on a raster pixel edge.
  const double xb = 3.75, res = 0.25;
  const int n = 560;
  GeoTransform gt{-n * res / 2, n * res / 2, res, -res, 0, 0};
  Raster lulc = Raster::zeros(1, n, n, SampleType::UInt8, gt, Crs::local(), RasterKind::Categorical);
  const Raster dem = Raster::zeros(1, n, n, SampleType::Float32, gt, Crs::local());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) lulc.at(0, r, c) = gt.world_x(c + 0.5, r + 0.5) < xb ? 1 : 2;
  const auto scene = grid_scene(lulc, dem, {-60, -60, 60, 60}, 481, 481);
  const auto kr = intrinsics(320, 240, 300.0);
  double edge = 0.0;
  for (const auto& pose : {nadir_at(1.3, -2.1, 100.0), nadir_at(-4.9, 7.0, 77.7)}) {
    const auto r = render_labels(scene, pose, kr);
    const double u_line = kr.cx + kr.fx * (xb - pose.position[0]) / pose.position[2];
    for (int y = 0; y < kr.height; ++y) {
      int first = -1;
      for (int x = 0; x < kr.width && first < 0; ++x)
        if (r.labels.at(x, y) == 2) first = x;
      edge = std::max(edge, first < 0 ? 1e9 : std::abs(first - u_line));
    }
  }
  o.check(edge <= 1.0, "half-plane edge " + fmt(edge, 3) + " px <= 1");
  return o;
}

// ------------------------------------------------------- criteria 5 and 6

struct World {
  SynthScene scene;
  TrajectoryConfig traj;
  std::vector<SynthFrame> frames;
  ClassMap classes;
  double build_s = 0.0;
};

const World& world() {
  static const World w = [] {
    const auto t0 = Clock::now();
    World out;
    out.scene = generate_scene(SynthConfig{}, 42);
    FrameOptions fo;
    out.frames = synthesize_frames(out.scene, make_trajectory(out.scene, out.traj, 42), out.traj.camera, fo, 42,
                                   hardware_workers());
    out.classes = ClassMap::identity(4);
    out.classes.ignore.insert(kUnlabeled);
    out.build_s = seconds_since(t0);
    return out;
  }();
  return w;
}

SynthPipelineConfig slic_config() {
  SynthPipelineConfig c;
  c.provider = MaskProvider::Slic;
  c.slic = {100, 10.0, 10};
  c.workers = hardware_workers();
  return c;
}

double run_miou(const std::vector<LabelImage>& labels) {
  return miou(score_frames(labels, world().frames, world().classes)).miou;
}

Outcome criterion_5() {
  Outcome o;
  const World& w = world();
  const auto t0 = Clock::now();
  const SynthPipelineConfig c = slic_config();
  const auto run = run_pipeline(w.scene.lulc, w.scene.dem, w.frames, w.traj.camera, frame_masks(w.frames, c), c);
  const double elapsed = w.build_s + seconds_since(t0);
  const double refined = run_miou(run.refined), projected = run_miou(run.projected);
  o.check(w.frames.size() == 20, std::to_string(w.frames.size()) + " frames");
  o.check(refined >= 0.90, "SLIC mIoU " + fmt(refined) + " >= 0.90");
  o.check(refined - projected >= 0.03, "gain over projected " + fmt(refined - projected) + " >= 0.03");
  o.check(elapsed < 60.0, fmt(elapsed, 1) + " s < 60 s");
  return o;
}

Outcome criterion_6(const fs::path& workdir) {
  Outcome o;
  const World& w = world();
  // Mask fixture produced outside the pipeline, written as RLE JSON and read back.
  const fs::path dir = workdir / "mask_fixture";
  fs::create_directories(dir);
  std::vector<MaskSet> external;
  for (std::size_t i = 0; i < w.frames.size(); ++i) {
    const fs::path p = dir / ("frame_" + std::to_string(i) + ".json");
    save_masks(p, truth_component_masks(w.frames[i].truth, derive_seed(42, 0x6d61736b, i)));
    external.push_back(load_masks(p));
  }
  auto score = [&](MaskProvider provider) {
    SynthPipelineConfig c = slic_config();
    c.provider = provider;
    const auto masks = frame_masks(w.frames, c, &external);
    return run_miou(run_pipeline(w.scene.lulc, w.scene.dem, w.frames, w.traj.camera, masks, c).refined);
  };
  const double ext = score(MaskProvider::External), slic = score(MaskProvider::Slic),
               felz = score(MaskProvider::Felzenszwalb);
  o.check(ext >= slic, "external " + fmt(ext) + " >= SLIC " + fmt(slic));
  o.check(slic >= felz, "SLIC >= Felzenszwalb " + fmt(felz));
  return o;
}

// ------------------------------------------------------------ criterion 7

Outcome criterion_7() {
  Outcome o;
  const auto t0 = Clock::now();
  const World& w = world();
  std::vector<SynthFrame> frames;
  for (std::size_t i = 0; i < w.frames.size(); i += 2) frames.push_back(w.frames[i]);
  const SynthPipelineConfig c = slic_config();
  const auto masks = frame_masks(frames, c);
  const auto grid = pose_noise_grid({0, 1, 2, 4, 8}, {0, 1, 2, 3.5, 7}, 5, 42);
  const PoseAblation a = run_pose_ablation(w.scene, frames, w.traj.camera, masks, grid, c, w.classes);

  std::map<std::string, std::vector<const AblationRow*>> sweeps;
  for (const auto& r : a.rows) sweeps[r.axis].push_back(&r);
  bool zero_equal = true;
  for (const auto& [axis, rows] : sweeps) {
    int inversions = 0;
    double largest = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double rise = rows[i]->mean - rows[i - 1]->mean;
      if (rise > 0) {
        ++inversions;
        largest = std::max(largest, rise);
      }
    }
    std::string means;
    for (const auto* r : rows) means += (means.empty() ? "" : "/") + fmt(r->mean, 3);
    o.check(inversions == 0 || (inversions == 1 && largest <= 0.005),
            axis + " " + means + (inversions ? " (" + std::to_string(inversions) + " inv " + fmt(largest) + ")" : ""));
    for (const auto* r : rows)
      if (r->spec.is_zero())
        for (double v : r->trial_miou) zero_equal = zero_equal && v == a.baseline;
  }
  o.check(zero_equal, "zero-noise rows == baseline " + fmt(a.baseline));
  o.notes.push_back(std::to_string(frames.size()) + " frames x 5 trials, " + fmt(seconds_since(t0), 1) + " s");
  return o;
}

// ------------------------------------------------------------ criterion 8

Raster random_raster(std::mt19937_64& g, SampleType t, int bands, int h, int w) {
  GeoTransform gt{300000.0 + static_cast<double>(g() % 1000), 4000000.0, 0.5 + static_cast<double>(g() % 8),
                  -(0.5 + static_cast<double>(g() % 8)), 0, 0};
  Raster r = Raster::zeros(bands, h, w, t, gt,
                           Crs::utm(1 + static_cast<int>(g() % 60), g() % 2 ? Hemisphere::North : Hemisphere::South));
  for (auto& v : r.data) {
    switch (t) {
      case SampleType::UInt8: v = static_cast<double>(g() % 256); break;
      case SampleType::UInt16: v = static_cast<double>(g() % 65536); break;
      case SampleType::Int16: v = static_cast<double>(static_cast<int>(g() % 65536) - 32768); break;
      case SampleType::Float32:
        v = static_cast<float>(std::ldexp(static_cast<double>(static_cast<std::int64_t>(g() % 2000001) - 1000000), -7));
        break;
    }
  }
  if (g() % 3 == 0) r.nodata = r.data[g() % r.data.size()];
  return r;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<double> read_f64(const fs::path& p) {
  const auto bytes = read_bytes(p);
  std::vector<double> out(bytes.size() / 8);
  std::memcpy(out.data(), bytes.data(), out.size() * 8);
  return out;
}

Outcome criterion_8() {
  Outcome o;
  std::mt19937_64 g(8);
  const SampleType types[] = {SampleType::UInt8, SampleType::UInt16, SampleType::Int16, SampleType::Float32};
  int identical = 0;
  std::vector<std::vector<std::uint8_t>> seeds;
  for (int i = 0; i < 100; ++i) {
    const Raster r = random_raster(g, types[i % 4], 1 + static_cast<int>(g() % 4), 1 + static_cast<int>(g() % 90),
                                   1 + static_cast<int>(g() % 90));
    GeoTiffWriteOptions opt;
    opt.interleave = (i / 4) % 2 ? TiffInterleave::Planar : TiffInterleave::Pixel;
    opt.compression = (i / 8) % 2 ? TiffCompression::Deflate : TiffCompression::None;
    opt.rows_per_strip = static_cast<int>(g() % 6);
    const auto bytes = encode_geotiff(r, opt);
    identical += decode_geotiff(bytes) == r;
    if (i % 10 == 0) seeds.push_back(bytes);
  }
  o.check(identical == 100, std::to_string(identical) + "/100 round trips identical");

  const fs::path fixtures(AEROLABEL_FIXTURES);
  double worst = 0.0;
  int fixture_count = 0;
  for (const char* name : {"float32_tiled_deflate", "uint8_strip_rgb_pixel", "uint16_planar_none",
                           "int16_tiled_planar", "float32_bigendian", "wgs84_small"}) {
    const fs::path tif = fixtures / (std::string(name) + ".tif");
    const Raster r = read_geotiff(tif);
    const auto expected = read_f64(fixtures / (std::string(name) + ".expected.f64"));
    if (expected.size() != r.data.size()) {
      worst = INFINITY;
      continue;
    }
    for (std::size_t i = 0; i < expected.size(); ++i) worst = std::max(worst, std::abs(r.data[i] - expected[i]));
    seeds.push_back(read_bytes(tif));
    ++fixture_count;
  }
  o.check(fixture_count == 6 && worst == 0.0, std::to_string(fixture_count) + " fixtures, max diff " + sci(worst));

  // Mutations concentrate on the header and IFD, where the parser makes its decisions.
  const auto t0 = Clock::now();
  int rejected = 0, accepted = 0, unexpected = 0;
  double slowest = 0.0;
  for (int i = 0; i < 100000; ++i) {
    std::vector<std::uint8_t> b = seeds[g() % seeds.size()];
    std::uint32_t ifd = 8;
    if (b.size() >= 8) {
      const bool le = b[0] == 'I';
      ifd = le ? (b[4] | b[5] << 8 | b[6] << 16 | static_cast<std::uint32_t>(b[7]) << 24)
               : (static_cast<std::uint32_t>(b[4]) << 24 | b[5] << 16 | b[6] << 8 | b[7]);
    }
    const std::size_t ifd_end = std::min<std::size_t>(b.size(), static_cast<std::size_t>(ifd) + 2 + 12 * 24 + 4);
    const int edits = 1 + static_cast<int>(g() % 6);
    for (int e = 0; e < edits; ++e) {
      std::size_t pos;
      const auto where = g() % 10;
      if (where < 2 || ifd >= b.size()) pos = g() % std::min<std::size_t>(8, b.size());
      else if (where < 9) pos = ifd + g() % (ifd_end - ifd);
      else pos = g() % b.size();
      switch (g() % 4) {
        case 0: b[pos] = static_cast<std::uint8_t>(g()); break;
        case 1: b[pos] ^= static_cast<std::uint8_t>(1u << (g() % 8)); break;
        case 2: b[pos] = (g() % 2) ? 0xff : 0x00; break;
        default: b[pos] = static_cast<std::uint8_t>(b[pos] + (g() % 2 ? 1 : -1)); break;
      }
    }
    if (g() % 20 == 0) b.resize(g() % (b.size() + 1));
    const auto s0 = Clock::now();
    try {
      decode_geotiff(b);
      ++accepted;
    } catch (const DataError&) {
      ++rejected;
    } catch (const std::exception&) {
      ++unexpected;
    }
    slowest = std::max(slowest, seconds_since(s0));
  }
  o.check(unexpected == 0 && slowest < 1.0,
          "fuzz 1e5: " + std::to_string(rejected) + " rejected, " + std::to_string(accepted) + " parsed, " +
              std::to_string(unexpected) + " other errors, slowest " + fmt(slowest * 1e3, 2) + " ms, total " +
              fmt(seconds_since(t0), 1) + " s");
  return o;
}

// ------------------------------------------------------------ criterion 9

ConfusionMatrix cm_of(std::initializer_list<std::initializer_list<std::uint64_t>> rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  int gt = 0;
  for (const auto& r : rows) {
    int p = 0;
    for (auto v : r) cm.at(gt, p++) = v;
    ++gt;
  }
  return cm;
}

Outcome criterion_9() {
  Outcome o;
  const double m = miou(cm_of({{3, 1}, {2, 4}})).miou;
  o.check(std::abs(m - 0.53571428571428571) <= 1e-12, "miou " + fmt(m, 12));

  // A = [[8,2],[0,0]] -> 0.4, B = [[0,0],[1,9]] -> 0.45, summed [[8,2],[1,9]].
  const auto t = trajectory_average({{"a", {cm_of({{8, 2}, {0, 0}})}}, {"b", {cm_of({{0, 0}, {1, 9}})}}});
  const bool agg = std::abs(t.traj_avg_miou - 0.425) <= 1e-12 &&
                   std::abs(t.dataset_miou - (8.0 / 11 + 9.0 / 12) / 2) <= 1e-12;
  const auto one = trajectory_average({{"t", {cm_of({{3, 1}, {2, 4}}), cm_of({{1, 0}, {0, 1}})}}});
  o.check(agg && one.dataset_miou == one.traj_avg_miou && std::abs(one.dataset_miou - (4.0 / 7 + 5.0 / 8) / 2) <= 1e-12,
          "aggregation " + fmt(t.dataset_miou, 6) + " / " + fmt(t.traj_avg_miou, 6));

  LabelImage img(4, 3);
  img.data = {0, 1, 1, 2, 2, 2, 3, 3, 0, 1, 2, 3};
  const auto map = parse_class_map(R"({"name":"veg","targets":["water","vegetation","built"],
                                       "map":{"0":0,"1":1,"2":1,"3":2}})");
  const auto out = apply_class_map(img, map);
  auto count = [](const LabelImage& im, int v) { return std::count(im.data.begin(), im.data.end(), v); };
  bool unmapped = false;
  try {
    LabelImage bad = img;
    bad.data[0] = 9;
    apply_class_map(bad, map);
  } catch (const DataError&) {
    unmapped = true;
  }
  o.check(count(out, 0) == 2 && count(out, 1) == 7 && count(out, 2) == 3 && unmapped, "class map counts 2/7/3");
  return o;
}

// ----------------------------------------------------------- criterion 10

int run_process(const std::vector<std::string>& argv) {
  std::string cmd;
  for (const auto& a : argv) cmd += "'" + a + "' ";
  cmd += ">/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    std::ifstream in(e.path(), std::ios::binary);
    std::string bytes{std::istreambuf_iterator<char>(in), {}};
    if (e.path().filename() == "manifest.json") {
      auto j = nlohmann::ordered_json::parse(bytes);
      j.erase("created");
      j.erase("timing");
      bytes = j.dump();
    }
    out[rel] = std::move(bytes);
  }
  return out;
}

const char* kDeterminismWorld = R"({
  "output_dir": ".",
  "seed": 5,
  "camera": {"fx": 112, "fy": 112, "cx": 80, "cy": 64, "width": 160, "height": 128},
  "refine": {"slic": {"n_segments": 40}},
  "tune": {"budget": 4},
  "ablate": {"meters": [0, 2], "degrees": [0, 2], "trials": 2, "resolutions": [1, 8]},
  "synth": {
    "scene": {"size": 128, "coarse_res": 8, "feature_scale": 40, "terrain_scale": 60, "terrain_amplitude": 3},
    "trajectory": {"frames": 4, "altitude_min": 25, "altitude_max": 35, "radius": 20},
    "frame_spacing": 0.5
  }
})";

Outcome criterion_10(const fs::path& workdir, const std::string& cli) {
  Outcome o;
  const auto t0 = Clock::now();
  const std::vector<int> workers{1, 8, 1, 8};
  std::vector<std::map<std::string, std::string>> trees;
  bool ran = true;
  for (std::size_t run = 0; run < workers.size(); ++run) {
    const fs::path root = workdir / ("determinism_" + std::to_string(run));
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "world.json") << kDeterminismWorld;
    const std::string j = std::to_string(workers[run]);
    for (const auto& command : command_names()) {
      const fs::path config = command == "synth" ? root / "world.json" : root / "synth" / "config.json";
      if (!cli.empty()) {
        ran = ran && run_process({cli, command, "-c", config.string(), "-j", j, "-q"}) == 0;
      } else {
        PipelineConfig c = load_config(config);
        c.workers = workers[run];
        run_command(command, c);
      }
    }
    fs::remove(root / "world.json");
    trees.push_back(tree_contents(root));
  }
  o.check(ran, cli.empty() ? "in-process" : "all CLI runs exited 0");
  std::set<std::string> differing;
  for (std::size_t run = 1; run < trees.size(); ++run) {
    for (const auto& [rel, bytes] : trees[0]) {
      auto it = trees[run].find(rel);
      if (it == trees[run].end() || it->second != bytes) differing.insert(rel);
    }
    for (const auto& [rel, bytes] : trees[run])
      if (!trees[0].count(rel)) differing.insert(rel);
  }
  std::string shown;
  for (const auto& d : differing) shown += (shown.empty() ? " " : ",") + d;
  o.check(differing.empty(), std::to_string(trees[0].size()) + " files from " + std::to_string(command_names().size()) +
                                 " commands, runs at -j 1,8,1,8 identical" + (differing.empty() ? "" : ":" + shown));
  o.notes.push_back(fmt(seconds_since(t0), 1) + " s");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string cli;
  std::vector<int> only;
  std::string workdir;
  app.add_option("--cli", cli, "aerolabel executable for the determinism runs");
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--workdir", workdir, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path scratch = workdir.empty()
                               ? fs::temp_directory_path() / ("aerolabel_acceptance_" + std::to_string(::getpid()))
                               : fs::path(workdir);
  fs::create_directories(scratch);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion_1},
      {2, criterion_2},
      {3, criterion_3},
      {4, criterion_4},
      {5, criterion_5},
      {6, [&] { return criterion_6(scratch); }},
      {7, criterion_7},
      {8, criterion_8},
      {9, criterion_9},
      {10, [&] { return criterion_10(scratch, cli); }},
  };
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome out;
    try {
      out = fn();
    } catch (const std::exception& e) {
      out.check(false, std::string("threw: ") + e.what());
    }
    std::string detail;
    for (const auto& n : out.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << "criterion " << id << ": " << (out.pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
    failed += !out.pass;
  }
  if (workdir.empty()) fs::remove_all(scratch);
  return failed == 0 ? 0 : 1;
}
