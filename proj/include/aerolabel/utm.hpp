#pragma once

#include <optional>

#include "aerolabel/raster.hpp"

namespace aerolabel {

struct UtmCoord {
  double easting = 0.0;
  double northing = 0.0;
  int zone = 0;
  Hemisphere hemisphere = Hemisphere::North;
};

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;
};

/// Standard zone for a longitude, ignoring the Norway/Svalbard exceptions.
int utm_zone_for(double lon);

/// Transverse Mercator forward projection on the WGS84 ellipsoid (Krueger
/// series to fourth order in the third flattening). Latitude must lie in
/// (-80, 84). `zone` forces a zone (extended TM outside its 6 degree strip);
/// the hemisphere follows the latitude sign unless forced.
UtmCoord wgs84_to_utm(double lon, double lat, std::optional<int> zone = std::nullopt,
                      std::optional<Hemisphere> hemisphere = std::nullopt);

/// Inverse of wgs84_to_utm.
LonLat utm_to_wgs84(double easting, double northing, int zone, Hemisphere hemisphere);

/// Transforms a point between any two supported CRSs (Local only to itself).
void transform_point(const Crs& from, const Crs& to, double x, double y, double& out_x, double& out_y);

}  // namespace aerolabel
