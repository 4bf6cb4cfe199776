#include "aerolabel/raster.hpp"

#include <cmath>
#include <sstream>

namespace aerolabel {

void GeoTransform::to_pixel(double x, double y, double& col, double& row) const {
  const double det = pixel_width * pixel_height - row_rotation * col_rotation;
  if (det == 0.0 || !std::isfinite(det)) throw DataError("geotransform is not invertible");
  const double dx = x - origin_x;
  const double dy = y - origin_y;
  col = (pixel_height * dx - row_rotation * dy) / det;
  row = (-col_rotation * dx + pixel_width * dy) / det;
}

Crs Crs::utm(int zone, Hemisphere h) {
  if (zone < 1 || zone > 60) throw DataError("UTM zone " + std::to_string(zone) + " outside [1, 60]");
  return {Kind::Utm, zone, h};
}

int Crs::epsg() const {
  switch (kind) {
    case Kind::Wgs84Geographic: return 4326;
    case Kind::Utm: return (hemisphere == Hemisphere::North ? 32600 : 32700) + zone;
    case Kind::Local: return 0;
  }
  return 0;
}

Crs Crs::from_epsg(int code) {
  if (code == 4326) return wgs84();
  if (code == 0) return local();
  if (code > 32600 && code <= 32660) return utm(code - 32600, Hemisphere::North);
  if (code > 32700 && code <= 32760) return utm(code - 32700, Hemisphere::South);
  throw DataError("unsupported EPSG code " + std::to_string(code) + " (supported: 4326, 32601-32660, 32701-32760)");
}

std::string Crs::to_string() const {
  switch (kind) {
    case Kind::Wgs84Geographic: return "EPSG:4326";
    case Kind::Utm:
      return "UTM " + std::to_string(zone) + (hemisphere == Hemisphere::North ? "N" : "S") + " (EPSG:" +
             std::to_string(epsg()) + ")";
    case Kind::Local: return "local";
  }
  return "?";
}

std::size_t sample_bytes(SampleType t) {
  switch (t) {
    case SampleType::UInt8: return 1;
    case SampleType::UInt16:
    case SampleType::Int16: return 2;
    case SampleType::Float32: return 4;
  }
  return 0;
}

std::string to_string(SampleType t) {
  switch (t) {
    case SampleType::UInt8: return "uint8";
    case SampleType::UInt16: return "uint16";
    case SampleType::Int16: return "int16";
    case SampleType::Float32: return "float32";
  }
  return "?";
}

Raster Raster::zeros(int bands, int height, int width, SampleType type, const GeoTransform& gt, const Crs& crs,
                     RasterKind kind) {
  if (bands < 1 || height < 1 || width < 1) throw DataError("raster dimensions must be positive");
  Raster r;
  r.bands = bands;
  r.height = height;
  r.width = width;
  r.sample_type = type;
  r.kind = kind;
  r.data.assign(static_cast<std::size_t>(bands) * height * width, 0.0);
  r.transform = gt;
  r.crs = crs;
  return r;
}

bool Raster::is_nodata(double v) const {
  if (!nodata) return false;
  if (std::isnan(*nodata)) return std::isnan(v);
  return v == *nodata;
}

std::string Extent::to_string() const {
  std::ostringstream os;
  os.precision(12);
  os << "[" << min_x << ", " << min_y << "] - [" << max_x << ", " << max_y << "]";
  return os.str();
}

Extent extent_of(const Raster& r) {
  const auto& t = r.transform;
  Extent e{1e300, 1e300, -1e300, -1e300};
  for (double c : {0.0, static_cast<double>(r.width)}) {
    for (double w : {0.0, static_cast<double>(r.height)}) {
      const double x = t.world_x(c, w), y = t.world_y(c, w);
      e.min_x = std::min(e.min_x, x);
      e.max_x = std::max(e.max_x, x);
      e.min_y = std::min(e.min_y, y);
      e.max_y = std::max(e.max_y, y);
    }
  }
  return e;
}

void validate(const Raster& r) {
  if (r.bands < 1 || r.height < 1 || r.width < 1)
    throw DataError("raster dimensions must be positive (bands=" + std::to_string(r.bands) +
                    ", height=" + std::to_string(r.height) + ", width=" + std::to_string(r.width) + ")");
  if (r.data.size() != static_cast<std::size_t>(r.bands) * r.height * r.width)
    throw DataError("raster data length does not equal bands*height*width");
  if (r.transform.pixel_width == 0.0 || r.transform.pixel_height == 0.0)
    throw DataError("raster pixel size must be non-zero");
  const auto& t = r.transform;
  if (t.pixel_width * t.pixel_height - t.row_rotation * t.col_rotation == 0.0)
    throw DataError("raster geotransform is singular");
  if (r.crs.kind == Crs::Kind::Utm && (r.crs.zone < 1 || r.crs.zone > 60)) throw DataError("invalid UTM zone");
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const double v = r.data[i];
    if (!std::isfinite(v) && !r.is_nodata(v))
      throw DataError("raster contains a non-finite value at element " + std::to_string(i));
  }
  if (r.kind == RasterKind::Categorical && r.bands != 1) throw DataError("label rasters must have one band");
}

void validate_labels(const Raster& r, int num_classes) {
  validate(r);
  if (r.bands != 1) throw DataError("label raster must have exactly one band");
  for (double v : r.data) {
    if (r.is_nodata(v)) continue;
    if (v < 0 || v >= num_classes || v != std::floor(v))
      throw DataError("label value " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
  }
}

}  // namespace aerolabel
