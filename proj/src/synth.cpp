#include "aerolabel/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>

#include "aerolabel/hash.hpp"
#include "aerolabel/parallel.hpp"

namespace aerolabel {

namespace {

enum Stream : std::uint64_t {
  kTerrain = 1,
  kClassField = 2,
  kPalette = 3,
  kImageryNoise = 4,
  kIllumination = 5,
  kThermalNoise = 6,
  kTrajectory = 7,
  kSensor = 8,
};

constexpr double kPi = std::numbers::pi;

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

std::vector<double> gaussian_blur(const std::vector<double>& src, int w, int h, double sigma) {
  if (!(sigma > 0.0)) return src;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& k : kernel) k /= sum;
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * src[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  return out;
}

GeoTransform grid_transform(const SynthConfig& c, double res) {
  return {c.origin_x, c.origin_y, res, -res, 0.0, 0.0};
}

double sample_bilinear(const Raster& r, double x, double y) {
  double col = 0, row = 0;
  r.transform.to_pixel(x, y, col, row);
  const double cc = std::clamp(col - 0.5, 0.0, r.width - 1.0);
  const double rr = std::clamp(row - 0.5, 0.0, r.height - 1.0);
  const int x0 = static_cast<int>(cc), y0 = static_cast<int>(rr);
  const int x1 = std::min(x0 + 1, r.width - 1), y1 = std::min(y0 + 1, r.height - 1);
  const double tx = cc - x0, ty = rr - y0;
  return (1 - ty) * ((1 - tx) * r.at(0, y0, x0) + tx * r.at(0, y0, x1)) +
         ty * ((1 - tx) * r.at(0, y1, x0) + tx * r.at(0, y1, x1));
}

}  // namespace

double SynthRng::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = 0.0;
  do u1 = uniform();
  while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * kPi * u2);
  return r * std::cos(2.0 * kPi * u2);
}

int SynthConfig::coarse_factor() const {
  const double f = coarse_res / fine_res;
  const double rounded = std::round(f);
  if (!(rounded >= 1.0) || std::abs(f - rounded) > 1e-9)
    throw ConfigError("coarse_res must be an integer multiple of fine_res");
  return static_cast<int>(rounded);
}

std::vector<double> SynthConfig::class_priors() const {
  if (priors.empty()) return std::vector<double>(num_classes, 1.0 / num_classes);
  const double sum = std::accumulate(priors.begin(), priors.end(), 0.0);
  std::vector<double> p(priors);
  for (double& v : p) v /= sum;
  return p;
}

void SynthConfig::validate() const {
  if (size < 8) throw ConfigError("synthetic scene size must be at least 8");
  if (!(fine_res > 0.0)) throw ConfigError("fine_res must be positive");
  coarse_factor();
  if (num_classes < 2 || num_classes > 254) throw ConfigError("num_classes must be in [2, 254]");
  if (!priors.empty()) {
    if (static_cast<int>(priors.size()) != num_classes) throw ConfigError("priors must have num_classes entries");
    for (double p : priors)
      if (!(p > 0.0)) throw ConfigError("priors must be positive");
  }
  if (!(feature_scale > 0.0) || !(terrain_scale > 0.0)) throw ConfigError("noise scales must be positive");
  if (octaves < 1) throw ConfigError("octaves must be at least 1");
  if (!(terrain_amplitude >= 0.0)) throw ConfigError("terrain_amplitude must be non-negative");
  if (imagery_bands < 1) throw ConfigError("imagery_bands must be at least 1");
  if (!(imagery_noise >= 0.0) || !(thermal_noise >= 0.0) || !(thermal_blur >= 0.0) || !(illumination >= 0.0))
    throw ConfigError("noise levels must be non-negative");
  if (crs.kind == Crs::Kind::Wgs84Geographic) throw ConfigError("synthetic scenes need a projected CRS");
}

SynthConfig refinement_scene_config() {
  SynthConfig c;
  c.size = 256;
  c.num_classes = 6;
  c.priors = {0.35, 0.3, 0.15, 0.1, 0.05, 0.05};
  c.feature_scale = 12.0;
  c.octaves = 2;
  return c;
}

std::vector<double> value_noise(int size, double res, double scale, int octaves, std::uint64_t seed) {
  const std::size_t n = static_cast<std::size_t>(size) * size;
  std::vector<double> out(n, 0.0);
  for (int o = 0; o < octaves; ++o) {
    const double spacing = scale / std::ldexp(1.0, o);
    const double amplitude = std::ldexp(1.0, -o);
    const int lattice = static_cast<int>(std::ceil(size * res / spacing)) + 2;
    SynthRng rng(derive_seed(seed, static_cast<std::uint64_t>(o)));
    std::vector<double> node(static_cast<std::size_t>(lattice) * lattice);
    for (double& v : node) v = rng.normal();
    for (int r = 0; r < size; ++r) {
      const double gy = (r + 0.5) * res / spacing;
      const int y0 = static_cast<int>(gy);
      const double ty = smooth(gy - y0);
      for (int c = 0; c < size; ++c) {
        const double gx = (c + 0.5) * res / spacing;
        const int x0 = static_cast<int>(gx);
        const double tx = smooth(gx - x0);
        const double* row0 = &node[static_cast<std::size_t>(y0) * lattice];
        const double* row1 = row0 + lattice;
        const double v = (1 - ty) * ((1 - tx) * row0[x0] + tx * row0[x0 + 1]) +
                         ty * ((1 - tx) * row1[x0] + tx * row1[x0 + 1]);
        out[static_cast<std::size_t>(r) * size + c] += amplitude * v;
      }
    }
  }
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : out) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& v : out) v = sd > 0.0 ? (v - mean) / sd : 0.0;
  return out;
}

Raster majority_pool(const Raster& labels, int factor) {
  if (factor < 1) throw ConfigError("pooling factor must be at least 1");
  if (labels.bands != 1) throw DataError("majority_pool expects a single-band label raster");
  if (!labels.transform.is_north_up()) throw DataError("majority_pool expects a north-up raster");
  const int w = (labels.width + factor - 1) / factor, h = (labels.height + factor - 1) / factor;
  GeoTransform gt = labels.transform;
  gt.pixel_width *= factor;
  gt.pixel_height *= factor;
  Raster out = Raster::zeros(1, h, w, labels.sample_type, gt, labels.crs, RasterKind::Categorical);
  out.nodata = labels.nodata;
  std::vector<std::uint64_t> counts;
  for (int by = 0; by < h; ++by) {
    for (int bx = 0; bx < w; ++bx) {
      counts.assign(counts.size(), 0);
      for (int y = by * factor; y < std::min((by + 1) * factor, labels.height); ++y)
        for (int x = bx * factor; x < std::min((bx + 1) * factor, labels.width); ++x) {
          const double v = labels.at(0, y, x);
          if (labels.is_nodata(v)) continue;
          const auto id = static_cast<std::size_t>(v);
          if (id >= counts.size()) counts.resize(id + 1, 0);
          ++counts[id];
        }
      std::size_t best = 0;
      for (std::size_t id = 1; id < counts.size(); ++id)
        if (counts[id] > counts[best]) best = id;
      if (counts.empty() || counts[best] == 0) {
        if (!labels.nodata) throw DataError("block without valid labels in a raster without nodata");
        out.at(0, by, bx) = *labels.nodata;
      } else {
        out.at(0, by, bx) = static_cast<double>(best);
      }
    }
  }
  return out;
}

Raster pooled_logits(const Raster& labels, int factor, int num_classes) {
  if (factor < 1) throw ConfigError("pooling factor must be at least 1");
  if (labels.bands != 1) throw DataError("pooled_logits expects a single-band label raster");
  const int w = (labels.width + factor - 1) / factor, h = (labels.height + factor - 1) / factor;
  GeoTransform gt = labels.transform;
  gt.pixel_width *= factor;
  gt.pixel_height *= factor;
  Raster out = Raster::zeros(num_classes, h, w, SampleType::Float32, gt, labels.crs);
  std::vector<double> counts(num_classes);
  for (int by = 0; by < h; ++by) {
    for (int bx = 0; bx < w; ++bx) {
      std::fill(counts.begin(), counts.end(), 0.0);
      double n = 0.0;
      for (int y = by * factor; y < std::min((by + 1) * factor, labels.height); ++y)
        for (int x = bx * factor; x < std::min((bx + 1) * factor, labels.width); ++x) {
          const double v = labels.at(0, y, x);
          if (labels.is_nodata(v)) continue;
          if (v < 0 || v >= num_classes) throw DataError("label " + std::to_string(v) + " is outside the class set");
          counts[static_cast<std::size_t>(v)] += 1.0;
          n += 1.0;
        }
      for (int l = 0; l < num_classes; ++l)
        out.at(l, by, bx) = static_cast<float>(std::log((counts[l] + 0.5) / (n + 0.5 * num_classes)));
    }
  }
  return out;
}

SynthScene generate_scene(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const int n = config.size;
  const std::size_t np = static_cast<std::size_t>(n) * n;
  const int L = config.num_classes;
  const GeoTransform fine = grid_transform(config, config.fine_res);

  SynthScene s;
  s.seed = seed;
  s.config = config;

  s.dem = Raster::zeros(1, n, n, SampleType::Float32, fine, config.crs);
  const auto terrain = value_noise(n, config.fine_res, config.terrain_scale, 2, derive_seed(seed, kTerrain));
  for (std::size_t i = 0; i < np; ++i)
    s.dem.data[i] = static_cast<float>(config.base_elevation + config.terrain_amplitude * terrain[i]);

  // labels: argmax of per-class fields plus biases fitted to the priors
  std::vector<std::vector<double>> fields(L);
  for (int l = 0; l < L; ++l)
    fields[l] = value_noise(n, config.fine_res, config.feature_scale, config.octaves, derive_seed(seed, kClassField, l));
  const auto priors = config.class_priors();
  std::vector<double> bias(L, 0.0);
  std::vector<std::uint8_t> labels(np);
  auto assign = [&] {
    std::vector<double> frac(L, 0.0);
    for (std::size_t i = 0; i < np; ++i) {
      int best = 0;
      double bv = fields[0][i] + bias[0];
      for (int l = 1; l < L; ++l) {
        const double v = fields[l][i] + bias[l];
        if (v > bv) {
          bv = v;
          best = l;
        }
      }
      labels[i] = static_cast<std::uint8_t>(best);
      frac[best] += 1.0;
    }
    for (double& f : frac) f /= static_cast<double>(np);
    return frac;
  };
  for (int iter = 0; iter < 200; ++iter) {
    const auto frac = assign();
    double worst = 0.0;
    for (int l = 0; l < L; ++l) worst = std::max(worst, std::abs(frac[l] - priors[l]) / priors[l]);
    if (worst < 0.01) break;
    for (int l = 0; l < L; ++l) bias[l] += 0.5 * (std::log(priors[l]) - std::log(std::max(frac[l], 1e-4)));
  }
  assign();

  s.truth = Raster::zeros(1, n, n, SampleType::UInt8, fine, config.crs, RasterKind::Categorical);
  s.truth.nodata = kUnlabeled;
  for (std::size_t i = 0; i < np; ++i) s.truth.data[i] = labels[i];
  const int factor = config.coarse_factor();
  s.lulc = majority_pool(s.truth, factor);
  s.logits = pooled_logits(s.truth, factor, L);

  // per-class appearance; band 0 and the thermal means are evenly spaced in a
  // random order so every class is separable there
  SynthRng palette(derive_seed(seed, kPalette));
  auto shuffled_ranks = [&] {
    std::vector<int> rank(L);
    std::iota(rank.begin(), rank.end(), 0);
    for (int i = L - 1; i > 0; --i) std::swap(rank[i], rank[static_cast<int>(palette.uniform() * (i + 1))]);
    return rank;
  };
  const auto band0_rank = shuffled_ranks();
  std::vector<double> means(static_cast<std::size_t>(L) * config.imagery_bands);
  for (int l = 0; l < L; ++l)
    for (int b = 0; b < config.imagery_bands; ++b)
      means[l * config.imagery_bands + b] =
          b == 0 ? 50.0 + 150.0 * band0_rank[l] / (L - 1) : 40.0 + 170.0 * palette.uniform();
  const auto thermal_rank = shuffled_ranks();

  const auto illum = value_noise(n, config.fine_res, 2.0 * config.feature_scale, 1, derive_seed(seed, kIllumination));
  s.imagery = Raster::zeros(config.imagery_bands, n, n, SampleType::UInt8, fine, config.crs);
  SynthRng img_noise(derive_seed(seed, kImageryNoise));
  for (int b = 0; b < config.imagery_bands; ++b)
    for (std::size_t i = 0; i < np; ++i) {
      const double mean = means[labels[i] * config.imagery_bands + b];
      const double v = mean * (1.0 + config.illumination * illum[i]) + config.imagery_noise * img_noise.normal();
      s.imagery.data[b * np + i] = std::clamp(std::round(v), 0.0, 255.0);
    }

  std::vector<double> heat(np);
  for (std::size_t i = 0; i < np; ++i) heat[i] = 7000.0 + 600.0 * thermal_rank[labels[i]];
  heat = gaussian_blur(heat, n, n, config.thermal_blur / config.fine_res);
  s.thermal = Raster::zeros(1, n, n, SampleType::UInt16, fine, config.crs);
  SynthRng th_noise(derive_seed(seed, kThermalNoise));
  for (std::size_t i = 0; i < np; ++i)
    s.thermal.data[i] = std::clamp(std::round(heat[i] + config.thermal_noise * th_noise.normal()), 0.0, 65535.0);
  return s;
}

void TrajectoryConfig::validate() const {
  if (frames < 1) throw ConfigError("trajectory needs at least one frame");
  if (!(altitude_min > 0.0) || !(altitude_max >= altitude_min)) throw ConfigError("invalid altitude range");
  if (!(tilt_max_deg >= 0.0) || !(tilt_max_deg < 60.0)) throw ConfigError("tilt_max_deg must be in [0, 60)");
  if (!(radius >= 0.0)) throw ConfigError("radius must be non-negative");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  camera.validate();
}

Quaternion heading_tilt_attitude(double heading, double tilt) {
  // nadir looks down with image-up north; yaw turns image-up onto the heading,
  // then a body-x rotation pitches the optical axis toward image-up
  const Quaternion yaw = Quaternion::from_axis_angle({0.0, 0.0, 1.0}, heading - kPi / 2.0);
  const Quaternion pitch = Quaternion::from_axis_angle({1.0, 0.0, 0.0}, tilt);
  return (yaw * nadir_attitude() * pitch).normalized();
}

std::vector<CameraPose> make_trajectory(const SynthScene& scene, const TrajectoryConfig& config,
                                        std::uint64_t seed) {
  config.validate();
  const Extent e = extent_of(scene.dem);
  const double cx = 0.5 * (e.min_x + e.max_x), cy = 0.5 * (e.min_y + e.max_y);
  const double a = config.radius, b = 0.7 * config.radius;
  SynthRng rng(derive_seed(seed, kTrajectory));
  const double phase = 2.0 * kPi * rng.uniform();
  const double alt_phase = 2.0 * kPi * rng.uniform();
  const double tilt_phase = 2.0 * kPi * rng.uniform();
  const double tilt_max = config.tilt_max_deg * kPi / 180.0;
  std::vector<CameraPose> poses;
  poses.reserve(config.frames);
  for (int i = 0; i < config.frames; ++i) {
    const double t = 2.0 * kPi * i / config.frames;
    const double th = phase + t;
    const double x = cx + a * std::cos(th), y = cy + b * std::sin(th);
    const double heading = std::atan2(b * std::cos(th), -a * std::sin(th));
    const double alt = config.altitude_min +
                       (config.altitude_max - config.altitude_min) * (0.5 + 0.5 * std::sin(2.0 * t + alt_phase));
    const double tilt = tilt_max * (0.5 + 0.5 * std::cos(3.0 * t + tilt_phase));
    CameraPose p;
    p.position = {x, y, sample_bilinear(scene.dem, x, y) + alt};
    p.attitude = heading_tilt_attitude(heading, tilt);
    p.timestamp = i * config.dt;
    poses.push_back(p);
  }
  return poses;
}

std::vector<SynthFrame> synthesize_frames(const SynthScene& scene, const std::vector<CameraPose>& poses,
                                          const CameraIntrinsics& k, const FrameOptions& options,
                                          std::uint64_t seed, int workers) {
  k.validate();
  if (!(options.sensor_noise >= 0.0)) throw ConfigError("sensor_noise must be non-negative");
  const double fill = std::accumulate(scene.thermal.data.begin(), scene.thermal.data.end(), 0.0) /
                      static_cast<double>(scene.thermal.data.size());
  std::vector<SynthFrame> frames(poses.size());
  parallel_for(poses.size(), workers, [&](std::size_t i) {
    SynthFrame& f = frames[i];
    f.pose = poses[i];
    const RenderResult rr = render_raster(scene.truth, scene.dem, f.pose, k, options.render);
    f.truth = rr.labels;
    const DepthImage heat = drape(scene.thermal, 0, rr, f.pose, k);
    SynthRng rng(derive_seed(seed, kSensor, i));
    f.thermal_raw = ImageU16(k.width, k.height);
    for (std::size_t p = 0; p < heat.size(); ++p) {
      const double v = std::isfinite(heat.data[p]) ? heat.data[p] : fill;
      f.thermal_raw.data[p] =
          static_cast<std::uint16_t>(std::clamp(std::round(v + options.sensor_noise * rng.normal()), 0.0, 65535.0));
    }
    f.thermal = preprocess_thermal(f.thermal_raw, options.clahe);
  });
  return frames;
}

MaskProvider parse_mask_provider(const std::string& name) {
  if (name == "none") return MaskProvider::None;
  if (name == "external") return MaskProvider::External;
  if (name == "slic") return MaskProvider::Slic;
  if (name == "felzenszwalb") return MaskProvider::Felzenszwalb;
  throw ConfigError("unknown mask provider '" + name + "' (expected none, external, slic, felzenszwalb)");
}

std::string to_string(MaskProvider p) {
  switch (p) {
    case MaskProvider::None: return "none";
    case MaskProvider::External: return "external";
    case MaskProvider::Slic: return "slic";
    case MaskProvider::Felzenszwalb: return "felzenszwalb";
  }
  return "unknown";
}

std::vector<MaskSet> frame_masks(const std::vector<SynthFrame>& frames, const SynthPipelineConfig& config,
                                 const std::vector<MaskSet>* external) {
  std::vector<MaskSet> out(frames.size());
  if (config.provider == MaskProvider::External) {
    if (!external || external->size() != frames.size())
      throw ConfigError("external mask provider needs one mask set per frame");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const MaskSet& m = (*external)[i];
      if (m.width != frames[i].thermal.width || m.height != frames[i].thermal.height)
        throw DataError("mask set " + std::to_string(i) + " does not match the frame size");
    }
    return *external;
  }
  parallel_for(frames.size(), config.workers, [&](std::size_t i) {
    const ImageU8& img = frames[i].thermal;
    switch (config.provider) {
      case MaskProvider::None: out[i] = MaskSet{img.width, img.height, {}, false}; break;
      case MaskProvider::Slic: out[i] = slic(img, config.slic); break;
      case MaskProvider::Felzenszwalb: out[i] = felzenszwalb(img, config.felzenszwalb); break;
      case MaskProvider::External: break;
    }
  });
  return out;
}

MaskSet truth_component_masks(const LabelImage& truth, std::uint64_t seed, double jitter) {
  if (!(jitter >= 0.0 && jitter <= 1.0)) throw ConfigError("jitter must be in [0, 1]");
  const int w = truth.width, h = truth.height;
  Image<std::int32_t> comp(w, h, -1);
  std::int32_t next = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (comp.at(x, y) >= 0) continue;
      const auto label = truth.at(x, y);
      comp.at(x, y) = next;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const auto [px, py] = queue.front();
        queue.pop_front();
        constexpr int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          const int nx = px + dx[d], ny = py + dy[d];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || comp.at(nx, ny) >= 0 || truth.at(nx, ny) != label) continue;
          comp.at(nx, ny) = next;
          queue.emplace_back(nx, ny);
        }
      }
      ++next;
    }
  Image<std::int32_t> out = comp;
  SynthRng rng(seed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int32_t other[4];
      int n = 0;
      constexpr int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
      for (int d = 0; d < 4; ++d) {
        const int nx = x + dx[d], ny = y + dy[d];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h || comp.at(nx, ny) == comp.at(x, y)) continue;
        other[n++] = comp.at(nx, ny);
      }
      if (n == 0) continue;
      if (rng.uniform() < jitter) out.at(x, y) = other[std::min(n - 1, static_cast<int>(rng.uniform() * n))];
    }
  compact_segment_ids(out);
  return masks_from_segments(out);
}

LabelImage run_frame(const Raster& lulc, const Raster& dem, const CameraPose& pose, const CameraIntrinsics& k,
                     const MaskSet& masks, const SynthPipelineConfig& config) {
  LabelImage projected = render_raster(lulc, dem, pose, k, config.render).labels;
  if (config.provider == MaskProvider::None) return projected;
  return refine(projected, masks, config.fallback);
}

PipelineRun run_pipeline(const Raster& lulc, const Raster& dem, const std::vector<SynthFrame>& frames,
                         const CameraIntrinsics& k, const std::vector<MaskSet>& masks,
                         const SynthPipelineConfig& config) {
  if (masks.size() != frames.size()) throw ConfigError("need one mask set per frame");
  PipelineRun run;
  run.projected.resize(frames.size());
  run.refined.resize(frames.size());
  parallel_for(frames.size(), config.workers, [&](std::size_t i) {
    run.projected[i] = render_raster(lulc, dem, frames[i].pose, k, config.render).labels;
    run.refined[i] = config.provider == MaskProvider::None ? run.projected[i]
                                                           : refine(run.projected[i], masks[i], config.fallback);
  });
  return run;
}

ConfusionMatrix score_frames(const std::vector<LabelImage>& predicted, const std::vector<SynthFrame>& frames,
                             const ClassMap& map) {
  if (predicted.size() != frames.size()) throw DataError("prediction count does not match frame count");
  ConfusionMatrix cm(map.num_targets());
  for (std::size_t i = 0; i < frames.size(); ++i)
    cm.accumulate(apply_class_map(predicted[i], map), apply_class_map(frames[i].truth, map));
  return cm;
}

}  // namespace aerolabel
