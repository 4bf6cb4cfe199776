#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aerolabel/error.hpp"

namespace aerolabel {

/// Affine pixel-to-world map, GDAL ordering:
///   x = origin_x + col * pixel_width + row * row_rotation
///   y = origin_y + col * col_rotation + row * pixel_height
/// (col, row) address pixel corners; centers sit at +0.5.
struct GeoTransform {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double pixel_width = 1.0;
  double pixel_height = -1.0;
  double row_rotation = 0.0;
  double col_rotation = 0.0;

  double world_x(double col, double row) const { return origin_x + col * pixel_width + row * row_rotation; }
  double world_y(double col, double row) const { return origin_y + col * col_rotation + row * pixel_height; }

  /// Inverse map; throws DataError when the linear part is singular.
  void to_pixel(double x, double y, double& col, double& row) const;

  bool is_north_up() const { return row_rotation == 0.0 && col_rotation == 0.0; }

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

enum class Hemisphere { North, South };

struct Crs {
  enum class Kind {
    Wgs84Geographic,
    Utm,
    // Pixel space of a camera frame; written with a user-defined model type.
    Local,
  };
  Kind kind = Kind::Local;
  int zone = 0;
  Hemisphere hemisphere = Hemisphere::North;

  static Crs wgs84() { return {Kind::Wgs84Geographic, 0, Hemisphere::North}; }
  static Crs utm(int zone, Hemisphere h);
  static Crs local() { return {}; }

  /// EPSG code (4326, 326zz, 327zz) or 0 for Local.
  int epsg() const;
  static Crs from_epsg(int code);
  std::string to_string() const;

  friend bool operator==(const Crs&, const Crs&) = default;
};

/// On-disk element kind; values are held as double in memory, which represents
/// every supported kind exactly.
enum class SampleType { UInt8, UInt16, Int16, Float32 };

std::size_t sample_bytes(SampleType t);
std::string to_string(SampleType t);

/// Whether values are continuous measurements or categorical class ids.
/// Categorical rasters may only be resampled with nearest neighbour.
enum class RasterKind { Continuous, Categorical };

/// Georeferenced band-major grid.
struct Raster {
  int bands = 0;
  int height = 0;
  int width = 0;
  SampleType sample_type = SampleType::Float32;
  RasterKind kind = RasterKind::Continuous;
  std::vector<double> data;
  std::optional<double> nodata;
  GeoTransform transform;
  Crs crs;

  static Raster zeros(int bands, int height, int width, SampleType type, const GeoTransform& gt, const Crs& crs,
                      RasterKind kind = RasterKind::Continuous);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t index(int band, int row, int col) const {
    return static_cast<std::size_t>(band) * plane_size() + static_cast<std::size_t>(row) * width + col;
  }
  double at(int band, int row, int col) const { return data[index(band, row, col)]; }
  double& at(int band, int row, int col) { return data[index(band, row, col)]; }

  bool is_nodata(double v) const;

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Axis-aligned world rectangle.
struct Extent {
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  bool empty() const { return !(max_x > min_x && max_y > min_y); }
  std::string to_string() const;
};

Extent extent_of(const Raster& r);

/// Throws DataError describing the first violated Raster invariant.
void validate(const Raster& r);

/// Label raster with one band and values in [0, num_classes) or nodata.
void validate_labels(const Raster& r, int num_classes);

}  // namespace aerolabel
