#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "aerolabel/camera.hpp"
#include "aerolabel/image.hpp"
#include "aerolabel/raster.hpp"

namespace aerolabel {

/// Vertex grid in row-major order; `valid[i] == 0` marks vertices dropped
/// for nodata or lying outside the rasters. Cell (r, c) is split into the
/// triangles (v[r][c], v[r][c+1], v[r+1][c+1]) and (v[r][c], v[r+1][c+1], v[r+1][c]).
struct SemanticScene {
  int rows = 0;
  int cols = 0;
  std::vector<Vec3> vertices;
  std::vector<std::uint16_t> labels;
  std::vector<std::uint8_t> valid;

  std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
  std::size_t valid_count() const;
  void validate() const;
};

struct SceneSampling {
  double forward_m = 10000.0;
  double lateral_m = 8000.0;
  int rows = 250;
  int cols = 200;
  double d_min = 1.0;

  void validate() const;
};

/// Forward distance of row k: d_min * (d_max / d_min)^(k / (rows - 1)).
std::vector<double> geometric_schedule(double d_min, double d_max, int rows);

/// Rows spaced geometrically along the camera's horizontal heading (image up
/// for a camera looking straight down), columns uniform across `lateral_m`
/// centred on the heading. Labels are nearest-pixel, elevations bilinear.
SemanticScene sample_scene(const Raster& lulc, const Raster& dem, const CameraPose& pose,
                           const SceneSampling& sampling = {});

/// Uniform grid over `extent`: row 0 at max_y, column 0 at min_x.
SemanticScene grid_scene(const Raster& lulc, const Raster& dem, const Extent& extent, int rows, int cols);

struct Triangle {
  std::array<Vec3, 3> p;
  std::uint16_t label = 0;
  /// Depth ties resolve to the smallest id.
  std::uint32_t id = 0;
};

std::vector<Triangle> triangulate(const SemanticScene& scene);

inline constexpr std::uint32_t kNoTriangle = std::numeric_limits<std::uint32_t>::max();

struct RenderOptions {
  double near_plane = kNearPlane;
  /// Clip margin around the image, in pixels.
  double guard_px = 256.0;
  int tile = 32;
  int workers = 1;
};

/// Uncovered pixels: label kUnlabeled, depth NaN, triangle kNoTriangle.
struct RenderResult {
  LabelImage labels;
  DepthImage depth;
  Image<std::uint32_t> triangle;
};

RenderResult render_triangles(std::span<const Triangle> triangles, const CameraPose& pose, const CameraIntrinsics& k,
                              const RenderOptions& options = {});
RenderResult render_labels(const SemanticScene& scene, const CameraPose& pose, const CameraIntrinsics& k,
                           const RenderOptions& options = {});

/// Ground rectangle seen by the camera between elevations z_lo and z_hi, or
/// empty when a border ray misses the ground (horizon in view).
std::optional<Extent> footprint_extent(const CameraPose& pose, const CameraIntrinsics& k, double z_lo, double z_hi,
                                       double margin = 0.0);

struct RasterRenderOptions {
  /// Vertex spacing in world units; 0 uses the elevation raster's pixel size.
  double spacing = 0.0;
  /// Hard cap on grid vertices per frame.
  std::size_t max_vertices = 4'000'000;
  /// Used when the horizon is in view: forward/lateral reach for sample_scene.
  SceneSampling horizon_sampling{};
  RenderOptions render{};
};

/// Renders `lulc` draped on `dem` for one frame. Vertices sit at `spacing`
/// steps from the elevation raster's first pixel centre, restricted to the
/// frame footprint; when the horizon is visible the geometric sample_scene
/// schedule is used instead.
RenderResult render_raster(const Raster& lulc, const Raster& dem, const CameraPose& pose, const CameraIntrinsics& k,
                           const RasterRenderOptions& options = {});

/// Bilinear sample of `band` of `r` at the world point behind every covered
/// pixel; NaN where uncovered, outside, or nodata.
DepthImage drape(const Raster& r, int band, const RenderResult& rendered, const CameraPose& pose,
                 const CameraIntrinsics& k);

}  // namespace aerolabel
