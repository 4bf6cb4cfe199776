#include "aerolabel/render.hpp"

#include <algorithm>
#include <cmath>

#include "aerolabel/error.hpp"
#include "aerolabel/parallel.hpp"

namespace aerolabel {

std::size_t SemanticScene::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

void SemanticScene::validate() const {
  if (rows < 2 || cols < 2) throw DataError("scene grid must be at least 2x2");
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (vertices.size() != n || labels.size() != n || valid.size() != n)
    throw DataError("scene arrays do not match rows x cols");
}

void SceneSampling::validate() const {
  if (!(forward_m > 0.0) || !(lateral_m > 0.0)) throw ConfigError("scene extent must be positive");
  if (rows < 2 || cols < 2) throw ConfigError("scene grid must be at least 2x2");
  if (!(d_min > 0.0) || !(d_min < forward_m)) throw ConfigError("d_min must lie in (0, forward_m)");
}

std::vector<double> geometric_schedule(double d_min, double d_max, int rows) {
  if (rows < 2 || !(d_min > 0.0) || !(d_max > d_min)) throw ConfigError("invalid geometric schedule");
  std::vector<double> d(rows);
  const double ratio = d_max / d_min;
  for (int k = 0; k < rows; ++k) d[k] = d_min * std::pow(ratio, static_cast<double>(k) / (rows - 1));
  d.back() = d_max;
  return d;
}

namespace {

struct Sampler {
  const Raster& lulc;
  const Raster& dem;

  Sampler(const Raster& l, const Raster& d) : lulc(l), dem(d) {
    if (l.bands != 1 || d.bands < 1) throw DataError("scene sampling needs single-band label and elevation rasters");
    if (!(l.crs == d.crs)) throw DataError("label and elevation rasters must share a CRS");
  }

  bool sample(double x, double y, double& z, std::uint16_t& label) const {
    double col = 0, row = 0;
    lulc.transform.to_pixel(x, y, col, row);
    const double fc = std::floor(col), fr = std::floor(row);
    if (fc < 0 || fr < 0 || fc >= lulc.width || fr >= lulc.height) return false;
    const double lv = lulc.at(0, static_cast<int>(fr), static_cast<int>(fc));
    if (lulc.is_nodata(lv) || lv < 0 || lv >= kUnlabeled) return false;
    label = static_cast<std::uint16_t>(lv);

    dem.transform.to_pixel(x, y, col, row);
    if (col < 0 || row < 0 || col > dem.width || row > dem.height) return false;
    const double cc = std::clamp(col - 0.5, 0.0, dem.width - 1.0);
    const double rr = std::clamp(row - 0.5, 0.0, dem.height - 1.0);
    const int c0 = static_cast<int>(std::floor(cc)), r0 = static_cast<int>(std::floor(rr));
    const int c1 = std::min(c0 + 1, dem.width - 1), r1 = std::min(r0 + 1, dem.height - 1);
    const double tx = cc - c0, ty = rr - r0;
    const double v00 = dem.at(0, r0, c0), v01 = dem.at(0, r0, c1);
    const double v10 = dem.at(0, r1, c0), v11 = dem.at(0, r1, c1);
    for (double v : {v00, v01, v10, v11})
      if (dem.is_nodata(v) || !std::isfinite(v)) return false;
    z = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
    return true;
  }
};

SemanticScene fill_scene(const Sampler& s, int rows, int cols, auto&& xy_of) {
  SemanticScene scene;
  scene.rows = rows;
  scene.cols = cols;
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  scene.vertices.resize(n);
  scene.labels.assign(n, 0);
  scene.valid.assign(n, 0);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = scene.index(r, c);
      double x = 0, y = 0, z = 0;
      xy_of(r, c, x, y);
      std::uint16_t label = 0;
      if (s.sample(x, y, z, label)) {
        scene.vertices[i] = {x, y, z};
        scene.labels[i] = label;
        scene.valid[i] = 1;
      } else {
        scene.vertices[i] = {x, y, 0.0};
      }
    }
  }
  if (scene.valid_count() == 0) throw DataError("camera footprint lies entirely outside the raster extent");
  return scene;
}

}  // namespace

SemanticScene sample_scene(const Raster& lulc, const Raster& dem, const CameraPose& pose,
                           const SceneSampling& sampling) {
  sampling.validate();
  pose.validate();
  const Sampler s(lulc, dem);
  const Mat3 r = pose.world_from_camera();
  double hx = r[2], hy = r[5];  // camera +Z in world
  if (std::hypot(hx, hy) < 1e-6) {
    hx = -r[1];  // image up
    hy = -r[4];
  }
  const double hn = std::hypot(hx, hy);
  if (!(hn > 1e-12)) throw DataError("camera heading is undefined");
  hx /= hn;
  hy /= hn;
  const double lx = hy, ly = -hx;
  const Vec3 c = pose.camera_center();
  const auto d = geometric_schedule(sampling.d_min, sampling.forward_m, sampling.rows);
  return fill_scene(s, sampling.rows, sampling.cols, [&](int row, int col, double& x, double& y) {
    const double lat = -sampling.lateral_m / 2 + sampling.lateral_m * col / (sampling.cols - 1);
    x = c[0] + d[row] * hx + lat * lx;
    y = c[1] + d[row] * hy + lat * ly;
  });
}

SemanticScene grid_scene(const Raster& lulc, const Raster& dem, const Extent& extent, int rows, int cols) {
  if (extent.empty()) throw ConfigError("scene extent must be non-empty");
  if (rows < 2 || cols < 2) throw ConfigError("scene grid must be at least 2x2");
  const Sampler s(lulc, dem);
  const double dx = (extent.max_x - extent.min_x) / (cols - 1);
  const double dy = (extent.max_y - extent.min_y) / (rows - 1);
  return fill_scene(s, rows, cols, [&](int r, int c, double& x, double& y) {
    x = extent.min_x + c * dx;
    y = extent.max_y - r * dy;
  });
}

std::vector<Triangle> triangulate(const SemanticScene& scene) {
  scene.validate();
  std::vector<Triangle> out;
  out.reserve(static_cast<std::size_t>(scene.rows - 1) * (scene.cols - 1) * 2);
  for (int r = 0; r + 1 < scene.rows; ++r) {
    for (int c = 0; c + 1 < scene.cols; ++c) {
      const std::size_t v00 = scene.index(r, c), v01 = scene.index(r, c + 1);
      const std::size_t v10 = scene.index(r + 1, c), v11 = scene.index(r + 1, c + 1);
      const auto base = static_cast<std::uint32_t>(2 * (static_cast<std::size_t>(r) * (scene.cols - 1) + c));
      const std::uint16_t label = scene.labels[v00];
      if (scene.valid[v00] && scene.valid[v01] && scene.valid[v11])
        out.push_back({{scene.vertices[v00], scene.vertices[v01], scene.vertices[v11]}, label, base});
      if (scene.valid[v00] && scene.valid[v11] && scene.valid[v10])
        out.push_back({{scene.vertices[v00], scene.vertices[v11], scene.vertices[v10]}, label, base + 1});
    }
  }
  return out;
}

namespace {

constexpr int kSubpixelBits = 8;
constexpr double kSubpixel = 1 << kSubpixelBits;

struct Plane {
  double a, b, c, d;  // a*x + b*y + c*z + d >= 0 is inside
  double eval(const Vec3& p) const { return a * p[0] + b * p[1] + c * p[2] + d; }
};

// Intersection computed from a canonical endpoint order so shared edges clip
// identically in both neighbours.
Vec3 intersect(const Plane& pl, const Vec3& p, const Vec3& q) {
  const bool swap = q < p;
  const Vec3& a = swap ? q : p;
  const Vec3& b = swap ? p : q;
  const double fa = pl.eval(a), fb = pl.eval(b);
  const double t = fa / (fa - fb);
  return a + t * (b - a);
}

int clip(const Plane& pl, const Vec3* in, int n, Vec3* out) {
  int m = 0;
  for (int i = 0; i < n; ++i) {
    const Vec3& p = in[i];
    const Vec3& q = in[(i + 1) % n];
    const bool pin = pl.eval(p) >= 0, qin = pl.eval(q) >= 0;
    if (pin) out[m++] = p;
    if (pin != qin) out[m++] = intersect(pl, p, q);
  }
  return m;
}

struct Fragment {
  std::int64_t x[3], y[3];
  double iz[3];
  Vec3 normal;  // camera-frame plane: dot(normal, X) = offset
  double offset;
  std::int64_t min_x, max_x, min_y, max_y;  // pixel bounds, inclusive
  std::uint32_t id;
  std::uint16_t label;
};

bool top_left(std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by) {
  const std::int64_t nx = ay - by, ny = bx - ax;
  return nx > 0 || (nx == 0 && ny > 0);
}

}  // namespace

RenderResult render_triangles(std::span<const Triangle> triangles, const CameraPose& pose, const CameraIntrinsics& k,
                              const RenderOptions& options) {
  if (!(options.near_plane > 0.0)) throw ConfigError("near plane must be > 0");
  if (!(options.guard_px >= 0.0)) throw ConfigError("guard band must be >= 0");
  if (options.tile < 1) throw ConfigError("tile size must be >= 1");
  const CameraModel cam(pose, k);
  const int W = k.width, H = k.height;

  const double xl = (-k.cx - options.guard_px) / k.fx, xr = (W - k.cx + options.guard_px) / k.fx;
  const double yt = (-k.cy - options.guard_px) / k.fy, yb = (H - k.cy + options.guard_px) / k.fy;
  const Plane planes[5] = {{0, 0, 1, -options.near_plane},
                           {1, 0, -xl, 0},
                           {-1, 0, xr, 0},
                           {0, 1, -yt, 0},
                           {0, -1, yb, 0}};

  std::vector<Fragment> frags;
  frags.reserve(triangles.size());
  for (const Triangle& t : triangles) {
    Vec3 buf_a[12], buf_b[12];
    int n = 3;
    for (int i = 0; i < 3; ++i) {
      buf_a[i] = cam.to_camera(t.p[i]);
      for (double v : buf_a[i])
        if (!std::isfinite(v)) throw DataError("scene contains a non-finite vertex");
    }
    const Vec3 normal = cross(buf_a[1] - buf_a[0], buf_a[2] - buf_a[0]);
    if (!(norm(normal) > 0.0)) continue;
    const double offset = dot(normal, buf_a[0]);
    Vec3* cur = buf_a;
    Vec3* nxt = buf_b;
    for (const Plane& pl : planes) {
      n = clip(pl, cur, n, nxt);
      std::swap(cur, nxt);
      if (n < 3) break;
    }
    if (n < 3) continue;
    std::int64_t px[12], py[12];
    double iz[12];
    for (int i = 0; i < n; ++i) {
      double u = 0, v = 0;
      cam.project_normalized(cur[i][0] / cur[i][2], cur[i][1] / cur[i][2], u, v);
      px[i] = std::llround(u * kSubpixel);
      py[i] = std::llround(v * kSubpixel);
      iz[i] = 1.0 / cur[i][2];
    }
    for (int i = 1; i + 1 < n; ++i) {
      Fragment f;
      const int idx[3] = {0, i, i + 1};
      for (int j = 0; j < 3; ++j) {
        f.x[j] = px[idx[j]];
        f.y[j] = py[idx[j]];
        f.iz[j] = iz[idx[j]];
      }
      const std::int64_t area = (f.x[1] - f.x[0]) * (f.y[2] - f.y[0]) - (f.y[1] - f.y[0]) * (f.x[2] - f.x[0]);
      if (area == 0) continue;
      if (area < 0) {
        std::swap(f.x[1], f.x[2]);
        std::swap(f.y[1], f.y[2]);
        std::swap(f.iz[1], f.iz[2]);
      }
      const std::int64_t half = 1 << (kSubpixelBits - 1);
      auto lo = [&](std::int64_t a) { return (a - half + (1 << kSubpixelBits) - 1) >> kSubpixelBits; };
      auto hi = [&](std::int64_t a) { return (a - half) >> kSubpixelBits; };
      f.min_x = std::max<std::int64_t>(0, lo(std::min({f.x[0], f.x[1], f.x[2]})));
      f.max_x = std::min<std::int64_t>(W - 1, hi(std::max({f.x[0], f.x[1], f.x[2]})));
      f.min_y = std::max<std::int64_t>(0, lo(std::min({f.y[0], f.y[1], f.y[2]})));
      f.max_y = std::min<std::int64_t>(H - 1, hi(std::max({f.y[0], f.y[1], f.y[2]})));
      if (f.min_x > f.max_x || f.min_y > f.max_y) continue;
      f.normal = normal;
      f.offset = offset;
      f.id = t.id;
      f.label = t.label;
      frags.push_back(f);
    }
  }

  const int T = options.tile;
  const int tiles_x = (W + T - 1) / T, tiles_y = (H + T - 1) / T;
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t i = 0; i < frags.size(); ++i) {
    const Fragment& f = frags[i];
    for (std::int64_t ty = f.min_y / T; ty <= f.max_y / T; ++ty)
      for (std::int64_t tx = f.min_x / T; tx <= f.max_x / T; ++tx)
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
  }

  RenderResult out;
  out.labels = LabelImage(W, H, kUnlabeled);
  out.depth = DepthImage(W, H, std::numeric_limits<double>::quiet_NaN());
  out.triangle = Image<std::uint32_t>(W, H, kNoTriangle);
  std::vector<double> zbuf(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());

  std::vector<double> ray_x(static_cast<std::size_t>(W) * H), ray_y(ray_x.size());
  parallel_for(static_cast<std::size_t>(H), options.workers, [&](std::size_t y) {
    for (int x = 0; x < W; ++x)
      cam.unproject(x + 0.5, static_cast<double>(y) + 0.5, ray_x[y * W + x], ray_y[y * W + x]);
  });

  parallel_for(bins.size(), options.workers, [&](std::size_t b) {
    const std::int64_t x0 = static_cast<std::int64_t>(b % tiles_x) * T, y0 = static_cast<std::int64_t>(b / tiles_x) * T;
    const std::int64_t x1 = std::min<std::int64_t>(x0 + T, W) - 1, y1 = std::min<std::int64_t>(y0 + T, H) - 1;
    for (std::uint32_t fi : bins[b]) {
      const Fragment& f = frags[fi];
      const std::int64_t area =
          (f.x[1] - f.x[0]) * (f.y[2] - f.y[0]) - (f.y[1] - f.y[0]) * (f.x[2] - f.x[0]);
      bool tl[3];
      for (int e = 0; e < 3; ++e) tl[e] = top_left(f.x[e], f.y[e], f.x[(e + 1) % 3], f.y[(e + 1) % 3]);
      for (std::int64_t py = std::max(y0, f.min_y); py <= std::min(y1, f.max_y); ++py) {
        const std::int64_t sy = (py << kSubpixelBits) + (1 << (kSubpixelBits - 1));
        for (std::int64_t px = std::max(x0, f.min_x); px <= std::min(x1, f.max_x); ++px) {
          const std::int64_t sx = (px << kSubpixelBits) + (1 << (kSubpixelBits - 1));
          std::int64_t w[3];
          bool inside = true;
          for (int e = 0; e < 3 && inside; ++e) {
            const int a = e, c = (e + 1) % 3;
            w[e] = (f.x[c] - f.x[a]) * (sy - f.y[a]) - (f.y[c] - f.y[a]) * (sx - f.x[a]);
            inside = w[e] > 0 || (w[e] == 0 && tl[e]);
          }
          if (!inside) continue;
          const std::size_t pi = static_cast<std::size_t>(py) * W + static_cast<std::size_t>(px);
          // Exact ray/plane depth; snapped barycentrics only as a fallback at grazing incidence.
          double z = f.offset / (f.normal[0] * ray_x[pi] + f.normal[1] * ray_y[pi] + f.normal[2]);
          if (!(z > 0.0) || !std::isfinite(z)) {
            // w[e] is the weight of the vertex opposite edge e.
            const double inv_z = (static_cast<double>(w[1]) * f.iz[0] + static_cast<double>(w[2]) * f.iz[1] +
                                  static_cast<double>(w[0]) * f.iz[2]) /
                                 static_cast<double>(area);
            z = 1.0 / inv_z;
          }
          if (z < zbuf[pi] || (z == zbuf[pi] && f.id < out.triangle.data[pi])) {
            zbuf[pi] = z;
            out.triangle.data[pi] = f.id;
            out.labels.data[pi] = f.label;
            out.depth.data[pi] = z;
          }
        }
      }
    }
  });
  return out;
}

RenderResult render_labels(const SemanticScene& scene, const CameraPose& pose, const CameraIntrinsics& k,
                           const RenderOptions& options) {
  const auto tris = triangulate(scene);
  return render_triangles(tris, pose, k, options);
}

std::optional<Extent> footprint_extent(const CameraPose& pose, const CameraIntrinsics& k, double z_lo, double z_hi,
                                       double margin) {
  const CameraModel cam(pose, k);
  const Vec3 c = cam.center();
  Extent e{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  constexpr int kSteps = 16;
  for (int edge = 0; edge < 4; ++edge) {
    for (int s = 0; s <= kSteps; ++s) {
      const double t = static_cast<double>(s) / kSteps;
      double u = 0, v = 0;
      switch (edge) {
        case 0: u = t * k.width; v = 0; break;
        case 1: u = k.width; v = t * k.height; break;
        case 2: u = t * k.width; v = k.height; break;
        default: u = 0; v = t * k.height; break;
      }
      double xn = 0, yn = 0;
      cam.unproject(u, v, xn, yn);
      const Vec3 d = cam.to_world({xn, yn, 1.0}) - c;
      for (double z : {z_lo, z_hi}) {
        if (!(c[2] > z) || !(d[2] < 0.0)) return std::nullopt;
        const double f = (z - c[2]) / d[2];
        const double x = c[0] + f * d[0], y = c[1] + f * d[1];
        e.min_x = std::min(e.min_x, x);
        e.max_x = std::max(e.max_x, x);
        e.min_y = std::min(e.min_y, y);
        e.max_y = std::max(e.max_y, y);
      }
    }
  }
  e.min_x -= margin;
  e.min_y -= margin;
  e.max_x += margin;
  e.max_y += margin;
  return e;
}

RenderResult render_raster(const Raster& lulc, const Raster& dem, const CameraPose& pose, const CameraIntrinsics& k,
                           const RasterRenderOptions& options) {
  if (!dem.transform.is_north_up()) throw DataError("elevation raster must be north-up");
  double z_lo = std::numeric_limits<double>::infinity(), z_hi = -z_lo;
  for (std::size_t i = 0; i < dem.plane_size(); ++i) {
    const double v = dem.data[i];
    if (dem.is_nodata(v) || !std::isfinite(v)) continue;
    z_lo = std::min(z_lo, v);
    z_hi = std::max(z_hi, v);
  }
  if (!(z_hi >= z_lo)) throw DataError("elevation raster has no valid samples");
  const double step_x = options.spacing > 0.0 ? options.spacing : std::abs(dem.transform.pixel_width);
  const double step_y = options.spacing > 0.0 ? options.spacing : std::abs(dem.transform.pixel_height);
  const auto fp = footprint_extent(pose, k, z_lo, z_hi, 2.0 * std::max(step_x, step_y));
  if (!fp) {
    const auto scene = sample_scene(lulc, dem, pose, options.horizon_sampling);
    return render_labels(scene, pose, k, options.render);
  }
  const Extent de = extent_of(dem);
  const Extent le = extent_of(lulc);
  const Extent area{std::max({fp->min_x, de.min_x, le.min_x}), std::max({fp->min_y, de.min_y, le.min_y}),
                    std::min({fp->max_x, de.max_x, le.max_x}), std::min({fp->max_y, de.max_y, le.max_y})};
  if (area.empty()) throw DataError("camera footprint lies entirely outside the raster extent");
  // grid anchored on the first elevation pixel centre so vertices do not move with the pose
  const double ax = dem.transform.origin_x + 0.5 * dem.transform.pixel_width;
  const double ay = dem.transform.origin_y + 0.5 * dem.transform.pixel_height;
  const double c0 = std::ceil((area.min_x - ax) / step_x), c1 = std::floor((area.max_x - ax) / step_x);
  const double r0 = std::ceil((ay - area.max_y) / step_y), r1 = std::floor((ay - area.min_y) / step_y);
  const double cols = c1 - c0 + 1, rows = r1 - r0 + 1;
  if (cols < 2 || rows < 2) throw DataError("camera footprint is smaller than one grid cell");
  if (cols * rows > static_cast<double>(options.max_vertices))
    throw ConfigError("frame footprint needs " + std::to_string(static_cast<long long>(cols * rows)) +
                      " vertices; raise the grid spacing or max_vertices");
  const Extent grid{ax + c0 * step_x, ay - r1 * step_y, ax + c1 * step_x, ay - r0 * step_y};
  const auto scene = grid_scene(lulc, dem, grid, static_cast<int>(rows), static_cast<int>(cols));
  return render_labels(scene, pose, k, options.render);
}

DepthImage drape(const Raster& r, int band, const RenderResult& rendered, const CameraPose& pose,
                 const CameraIntrinsics& k) {
  if (band < 0 || band >= r.bands) throw DataError("drape band out of range");
  const CameraModel cam(pose, k);
  DepthImage out(k.width, k.height, std::numeric_limits<double>::quiet_NaN());
  if (!rendered.depth.same_shape(k.width, k.height)) throw DataError("render result does not match the intrinsics");
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const double d = rendered.depth.at(x, y);
      if (!std::isfinite(d)) continue;
      double xn = 0, yn = 0;
      cam.unproject(x + 0.5, y + 0.5, xn, yn);
      const Vec3 w = cam.to_world({xn * d, yn * d, d});
      double col = 0, row = 0;
      r.transform.to_pixel(w[0], w[1], col, row);
      if (col < 0 || row < 0 || col > r.width || row > r.height) continue;
      const double cc = std::clamp(col - 0.5, 0.0, r.width - 1.0);
      const double rr = std::clamp(row - 0.5, 0.0, r.height - 1.0);
      const int x0 = static_cast<int>(cc), y0 = static_cast<int>(rr);
      const int x1 = std::min(x0 + 1, r.width - 1), y1 = std::min(y0 + 1, r.height - 1);
      const double tx = cc - x0, ty = rr - y0;
      const double a = r.at(band, y0, x0), b = r.at(band, y0, x1), c = r.at(band, y1, x0), e = r.at(band, y1, x1);
      bool ok = true;
      for (double v : {a, b, c, e}) ok = ok && !r.is_nodata(v) && std::isfinite(v);
      if (!ok) continue;
      out.at(x, y) = (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * e);
    }
  }
  return out;
}

}  // namespace aerolabel
