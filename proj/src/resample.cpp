#include "aerolabel/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "aerolabel/error.hpp"
#include "aerolabel/parallel.hpp"
#include "aerolabel/utm.hpp"

namespace aerolabel {
namespace {

// Source-pixel stencil for one sample position. Weights of exactly zero are
// skipped so nodata neighbours do not poison integer-aligned samples.
struct Stencil {
  std::array<int, 4> cols{};
  std::array<int, 4> rows{};
  std::array<double, 4> wc{};
  std::array<double, 4> wr{};
  int nc = 0;
  int nr = 0;
};

int clampi(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

void axis_weights(double pos, int size, ResampleMethod m, std::array<int, 4>& idx, std::array<double, 4>& w,
                  int& n) {
  switch (m) {
    case ResampleMethod::Nearest: {
      idx[0] = clampi(static_cast<int>(std::floor(pos + 0.5)), 0, size - 1);
      w[0] = 1.0;
      n = 1;
      return;
    }
    case ResampleMethod::Bilinear: {
      const double f = std::floor(pos);
      const double t = pos - f;
      const int i0 = static_cast<int>(f);
      idx[0] = clampi(i0, 0, size - 1);
      idx[1] = clampi(i0 + 1, 0, size - 1);
      w[0] = 1.0 - t;
      w[1] = t;
      n = 2;
      return;
    }
    case ResampleMethod::Bicubic: {
      const double f = std::floor(pos);
      const double t = pos - f;
      const int i0 = static_cast<int>(f);
      for (int k = 0; k < 4; ++k) {
        idx[k] = clampi(i0 - 1 + k, 0, size - 1);
        w[k] = catmull_rom_weight(t - (k - 1));
      }
      n = 4;
      return;
    }
  }
}

bool sample(const Raster& src, int band, double col, double row, ResampleMethod m, double& out) {
  Stencil s;
  axis_weights(col, src.width, m, s.cols, s.wc, s.nc);
  axis_weights(row, src.height, m, s.rows, s.wr, s.nr);
  double acc = 0.0;
  for (int j = 0; j < s.nr; ++j) {
    if (s.wr[j] == 0.0) continue;
    double row_acc = 0.0;
    for (int i = 0; i < s.nc; ++i) {
      if (s.wc[i] == 0.0) continue;
      const double v = src.at(band, s.rows[j], s.cols[i]);
      if (src.is_nodata(v)) return false;
      row_acc += s.wc[i] * v;
    }
    acc += s.wr[j] * row_acc;
  }
  out = acc;
  return true;
}

double quantize(double v, SampleType t) {
  switch (t) {
    case SampleType::UInt8: return std::clamp(std::nearbyint(v), 0.0, 255.0);
    case SampleType::UInt16: return std::clamp(std::nearbyint(v), 0.0, 65535.0);
    case SampleType::Int16: return std::clamp(std::nearbyint(v), -32768.0, 32767.0);
    case SampleType::Float32: return static_cast<double>(static_cast<float>(v));
  }
  return v;
}

}  // namespace

double catmull_rom_weight(double t) {
  constexpr double a = -0.5;
  const double x = std::abs(t);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

double default_nodata(SampleType t) {
  switch (t) {
    case SampleType::UInt8: return 255.0;
    case SampleType::UInt16: return 65535.0;
    case SampleType::Int16: return -32768.0;
    case SampleType::Float32: return -9999.0;
  }
  return -9999.0;
}

Raster warp(const Raster& src, const GridSpec& grid, ResampleMethod method, int workers) {
  validate(src);
  if (src.kind == RasterKind::Categorical && method != ResampleMethod::Nearest)
    throw DataError("categorical rasters must be resampled with nearest neighbour");
  if (grid.width < 1 || grid.height < 1) throw DataError("warp target grid is empty");

  Raster out = Raster::zeros(src.bands, grid.height, grid.width, src.sample_type, grid.transform, grid.crs, src.kind);
  const double nodata = src.nodata.value_or(default_nodata(src.sample_type));
  bool any_nodata = false;
  std::vector<char> row_has_nodata(grid.height, 0);
  const bool same_crs = src.crs == grid.crs;

  parallel_for(static_cast<std::size_t>(grid.height), workers, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    for (int c = 0; c < grid.width; ++c) {
      double x = grid.transform.world_x(c + 0.5, r + 0.5);
      double y = grid.transform.world_y(c + 0.5, r + 0.5);
      bool covered = true;
      if (!same_crs) {
        try {
          transform_point(grid.crs, src.crs, x, y, x, y);
        } catch (const DataError&) {
          covered = false;
        }
      }
      double scol = 0, srow = 0;
      if (covered) {
        src.transform.to_pixel(x, y, scol, srow);
        covered = scol >= 0.0 && scol < src.width && srow >= 0.0 && srow < src.height;
      }
      for (int b = 0; b < src.bands; ++b) {
        double v = nodata;
        if (!covered || !sample(src, b, scol - 0.5, srow - 0.5, method, v)) {
          v = nodata;
          row_has_nodata[ri] = 1;
        } else {
          v = quantize(v, src.sample_type);
        }
        out.at(b, r, c) = v;
      }
    }
  });
  for (char f : row_has_nodata) any_nodata = any_nodata || f;
  out.nodata = src.nodata;
  if (any_nodata && !out.nodata) out.nodata = nodata;
  return out;
}

Raster resample(const Raster& r, double target_res, ResampleMethod method, int workers) {
  validate(r);
  if (!(target_res > 0.0) || !std::isfinite(target_res)) throw DataError("target resolution must be positive");
  if (r.kind == RasterKind::Categorical && method != ResampleMethod::Nearest)
    throw DataError("bicubic/bilinear resampling requested on a label raster; use nearest");
  if (!r.transform.is_north_up()) throw DataError("rotated geotransforms are not supported for resampling");
  const double pw = std::abs(r.transform.pixel_width);
  const double ph = std::abs(r.transform.pixel_height);
  if (pw == target_res && ph == target_res) return r;

  GridSpec g;
  g.crs = r.crs;
  // Floor keeps every output pixel center inside the source footprint.
  g.width = std::max(1, static_cast<int>(std::floor(r.width * pw / target_res + 1e-9)));
  g.height = std::max(1, static_cast<int>(std::floor(r.height * ph / target_res + 1e-9)));
  g.transform = r.transform;
  g.transform.pixel_width = std::copysign(target_res, r.transform.pixel_width);
  g.transform.pixel_height = std::copysign(target_res, r.transform.pixel_height);
  return warp(r, g, method, workers);
}

Raster reproject(const Raster& r, const Crs& target_crs, double target_res, ResampleMethod method,
                 std::optional<Extent> target_extent, int workers) {
  validate(r);
  if (!(target_res > 0.0)) throw DataError("target resolution must be positive");
  if (target_crs == r.crs && !target_extent) return resample(r, target_res, method, workers);

  // Footprint of the source in the target CRS, traced along the boundary.
  const Extent src_ext = extent_of(r);
  Extent fp{1e300, 1e300, -1e300, -1e300};
  constexpr int kSteps = 32;
  for (int i = 0; i <= kSteps; ++i) {
    const double f = static_cast<double>(i) / kSteps;
    const std::array<std::array<double, 2>, 4> pts{{
        {src_ext.min_x + f * (src_ext.max_x - src_ext.min_x), src_ext.min_y},
        {src_ext.min_x + f * (src_ext.max_x - src_ext.min_x), src_ext.max_y},
        {src_ext.min_x, src_ext.min_y + f * (src_ext.max_y - src_ext.min_y)},
        {src_ext.max_x, src_ext.min_y + f * (src_ext.max_y - src_ext.min_y)},
    }};
    for (const auto& p : pts) {
      double x = 0, y = 0;
      try {
        transform_point(r.crs, target_crs, p[0], p[1], x, y);
      } catch (const DataError&) {
        continue;
      }
      fp.min_x = std::min(fp.min_x, x);
      fp.max_x = std::max(fp.max_x, x);
      fp.min_y = std::min(fp.min_y, y);
      fp.max_y = std::max(fp.max_y, y);
    }
  }
  Extent ext = fp;
  if (target_extent) {
    ext = *target_extent;
    const Extent inter{std::max(ext.min_x, fp.min_x), std::max(ext.min_y, fp.min_y), std::min(ext.max_x, fp.max_x),
                       std::min(ext.max_y, fp.max_y)};
    if (fp.empty() || inter.empty())
      throw DataError("reproject: target extent " + ext.to_string() + " does not overlap source footprint " +
                      fp.to_string() + " (" + target_crs.to_string() + ")");
  }
  if (ext.empty()) throw DataError("reproject: source footprint " + src_ext.to_string() + " is empty in " +
                                   target_crs.to_string());

  GridSpec g;
  g.crs = target_crs;
  g.width = std::max(1, static_cast<int>(std::ceil((ext.max_x - ext.min_x) / target_res - 1e-9)));
  g.height = std::max(1, static_cast<int>(std::ceil((ext.max_y - ext.min_y) / target_res - 1e-9)));
  g.transform = GeoTransform{ext.min_x, ext.max_y, target_res, -target_res, 0.0, 0.0};
  return warp(r, g, method, workers);
}

std::vector<Raster> align_and_crop(const std::vector<Raster>& rasters, ResampleMethod continuous_method) {
  if (rasters.empty()) return {};
  for (const auto& r : rasters) {
    validate(r);
    if (!(r.crs == rasters.front().crs))
      throw DataError("align_and_crop: rasters must share a CRS (" + r.crs.to_string() + " vs " +
                      rasters.front().crs.to_string() + ")");
    if (!r.transform.is_north_up() || r.transform.pixel_height >= 0)
      throw DataError("align_and_crop requires north-up rasters");
  }
  if (rasters.size() == 1) return rasters;

  Extent inter{-1e300, -1e300, 1e300, 1e300};
  double res = std::numeric_limits<double>::infinity();
  for (const auto& r : rasters) {
    const Extent e = extent_of(r);
    inter.min_x = std::max(inter.min_x, e.min_x);
    inter.min_y = std::max(inter.min_y, e.min_y);
    inter.max_x = std::min(inter.max_x, e.max_x);
    inter.max_y = std::min(inter.max_y, e.max_y);
    res = std::min({res, std::abs(r.transform.pixel_width), std::abs(r.transform.pixel_height)});
  }
  if (inter.empty()) throw DataError("align_and_crop: rasters do not intersect");

  GridSpec g;
  g.crs = rasters.front().crs;
  g.width = std::max(1, static_cast<int>(std::floor((inter.max_x - inter.min_x) / res + 1e-9)));
  g.height = std::max(1, static_cast<int>(std::floor((inter.max_y - inter.min_y) / res + 1e-9)));
  g.transform = GeoTransform{inter.min_x, inter.max_y, res, -res, 0.0, 0.0};

  std::vector<Raster> out;
  out.reserve(rasters.size());
  for (const auto& r : rasters) {
    const auto m = r.kind == RasterKind::Categorical ? ResampleMethod::Nearest : continuous_method;
    if (r.width == g.width && r.height == g.height && r.transform == g.transform) {
      out.push_back(r);
    } else {
      out.push_back(warp(r, g, m));
    }
  }
  return out;
}

}  // namespace aerolabel
