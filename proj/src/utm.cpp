#include "aerolabel/utm.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "aerolabel/error.hpp"

namespace aerolabel {
namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kScale = 0.9996;
constexpr double kFalseEasting = 500000.0;
constexpr double kFalseNorthingSouth = 10000000.0;

struct Series {
  double rectifying_radius;  // A
  std::array<double, 4> alpha;
  std::array<double, 4> beta;
  std::array<double, 4> delta;
  double e;  // first eccentricity
};

Series make_series() {
  const double n = kF / (2.0 - kF);
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n;
  Series s{};
  s.rectifying_radius = kA / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0);
  s.alpha = {n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0,
             13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0,
             61.0 * n3 / 240.0 - 103.0 * n4 / 140.0,
             49561.0 * n4 / 161280.0};
  s.beta = {n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0,
            4397.0 * n4 / 161280.0};
  s.delta = {2.0 * n - 2.0 * n2 / 3.0 - 2.0 * n3 + 116.0 * n4 / 45.0,
             7.0 * n2 / 3.0 - 8.0 * n3 / 5.0 - 227.0 * n4 / 45.0,
             56.0 * n3 / 15.0 - 136.0 * n4 / 35.0,
             4279.0 * n4 / 630.0};
  s.e = std::sqrt(kF * (2.0 - kF));
  return s;
}

const Series& series() {
  static const Series s = make_series();
  return s;
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

double central_meridian(int zone) { return -183.0 + 6.0 * zone; }

}  // namespace

int utm_zone_for(double lon) {
  int zone = static_cast<int>(std::floor((lon + 180.0) / 6.0)) + 1;
  if (zone > 60) zone = 60;
  if (zone < 1) zone = 1;
  return zone;
}

UtmCoord wgs84_to_utm(double lon, double lat, std::optional<int> zone, std::optional<Hemisphere> hemisphere) {
  if (!std::isfinite(lat) || !(lat > -80.0 && lat < 84.0))
    throw DataError("latitude " + std::to_string(lat) + " outside the UTM validity band (-80, 84)");
  if (!std::isfinite(lon)) throw DataError("longitude is not finite");
  const int z = zone.value_or(utm_zone_for(lon));
  if (z < 1 || z > 60) throw DataError("UTM zone " + std::to_string(z) + " outside [1, 60]");
  const Hemisphere h = hemisphere.value_or(lat >= 0.0 ? Hemisphere::North : Hemisphere::South);

  const Series& s = series();
  const double phi = deg2rad(lat);
  double dlam = deg2rad(lon - central_meridian(z));
  dlam = std::remainder(dlam, 2.0 * std::numbers::pi);

  // Conformal latitude via tau' = tan(chi).
  const double tau = std::tan(phi);
  const double sigma = std::sinh(s.e * std::atanh(s.e * tau / std::sqrt(1.0 + tau * tau)));
  const double tau_p = tau * std::sqrt(1.0 + sigma * sigma) - sigma * std::sqrt(1.0 + tau * tau);

  const double xi_p = std::atan2(tau_p, std::cos(dlam));
  const double eta_p = std::asinh(std::sin(dlam) / std::sqrt(tau_p * tau_p + std::cos(dlam) * std::cos(dlam)));

  double xi = xi_p, eta = eta_p;
  for (int j = 1; j <= 4; ++j) {
    xi += s.alpha[j - 1] * std::sin(2.0 * j * xi_p) * std::cosh(2.0 * j * eta_p);
    eta += s.alpha[j - 1] * std::cos(2.0 * j * xi_p) * std::sinh(2.0 * j * eta_p);
  }
  UtmCoord out;
  out.easting = kFalseEasting + kScale * s.rectifying_radius * eta;
  out.northing = kScale * s.rectifying_radius * xi + (h == Hemisphere::South ? kFalseNorthingSouth : 0.0);
  out.zone = z;
  out.hemisphere = h;
  return out;
}

LonLat utm_to_wgs84(double easting, double northing, int zone, Hemisphere hemisphere) {
  if (!std::isfinite(easting) || !std::isfinite(northing)) throw DataError("UTM coordinates must be finite");
  if (zone < 1 || zone > 60) throw DataError("UTM zone " + std::to_string(zone) + " outside [1, 60]");
  const Series& s = series();
  const double xi = (northing - (hemisphere == Hemisphere::South ? kFalseNorthingSouth : 0.0)) /
                    (kScale * s.rectifying_radius);
  const double eta = (easting - kFalseEasting) / (kScale * s.rectifying_radius);

  double xi_p = xi, eta_p = eta;
  for (int j = 1; j <= 4; ++j) {
    xi_p -= s.beta[j - 1] * std::sin(2.0 * j * xi) * std::cosh(2.0 * j * eta);
    eta_p -= s.beta[j - 1] * std::cos(2.0 * j * xi) * std::sinh(2.0 * j * eta);
  }
  const double chi = std::asin(std::sin(xi_p) / std::cosh(eta_p));
  double phi = chi;
  for (int j = 1; j <= 4; ++j) phi += s.delta[j - 1] * std::sin(2.0 * j * chi);
  const double lam = std::atan2(std::sinh(eta_p), std::cos(xi_p));
  return {central_meridian(zone) + rad2deg(lam), rad2deg(phi)};
}

void transform_point(const Crs& from, const Crs& to, double x, double y, double& out_x, double& out_y) {
  if (from == to) {
    out_x = x;
    out_y = y;
    return;
  }
  if (from.kind == Crs::Kind::Local || to.kind == Crs::Kind::Local)
    throw DataError("cannot transform between " + from.to_string() + " and " + to.to_string());
  double lon = x, lat = y;
  if (from.kind == Crs::Kind::Utm) {
    const LonLat ll = utm_to_wgs84(x, y, from.zone, from.hemisphere);
    lon = ll.lon;
    lat = ll.lat;
  }
  if (to.kind == Crs::Kind::Wgs84Geographic) {
    out_x = lon;
    out_y = lat;
    return;
  }
  const UtmCoord u = wgs84_to_utm(lon, lat, to.zone, to.hemisphere);
  out_x = u.easting;
  out_y = u.northing;
}

}  // namespace aerolabel
