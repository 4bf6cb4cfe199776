#pragma once

#include <optional>
#include <vector>

#include "aerolabel/raster.hpp"

namespace aerolabel {

enum class ResampleMethod { Nearest, Bilinear, Bicubic };

/// Output pixel grid of a warp.
struct GridSpec {
  int width = 0;
  int height = 0;
  GeoTransform transform;
  Crs crs;
};

/// Catmull-Rom (a = -0.5) cubic convolution weight.
double catmull_rom_weight(double t);

/// Samples `src` at every pixel center of `grid` (transforming through CRSs
/// when they differ). Uncovered pixels and stencils touching nodata become
/// nodata. Bilinear/Bicubic are rejected on categorical rasters.
Raster warp(const Raster& src, const GridSpec& grid, ResampleMethod method, int workers = 1);

/// Changes resolution to `target_res` (world units per pixel) keeping origin,
/// CRS, and extent (to within one output pixel).
Raster resample(const Raster& r, double target_res, ResampleMethod method, int workers = 1);

/// Inverse-mapping reprojection into `target_crs`. When `target_extent` is
/// given the output covers it; otherwise it covers the transformed footprint.
Raster reproject(const Raster& r, const Crs& target_crs, double target_res, ResampleMethod method,
                 std::optional<Extent> target_extent = std::nullopt, int workers = 1);

/// Crops every raster to the common intersection on the finest input grid.
/// Categorical rasters use nearest neighbour; continuous ones `continuous_method`.
std::vector<Raster> align_and_crop(const std::vector<Raster>& rasters,
                                   ResampleMethod continuous_method = ResampleMethod::Bicubic);

/// Default nodata sentinel used when a warp must introduce nodata.
double default_nodata(SampleType t);

}  // namespace aerolabel
