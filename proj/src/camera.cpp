#include "aerolabel/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "aerolabel/error.hpp"
#include "aerolabel/utm.hpp"

namespace aerolabel {

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 mul(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Vec3 mul_transposed(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[3] * v[1] + m[6] * v[2], m[1] * v[0] + m[4] * v[1] + m[7] * v[2],
          m[2] * v[0] + m[5] * v[1] + m[8] * v[2]};
}

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return r;
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double radians) {
  const double n = aerolabel::norm(axis);
  if (!(n > 0.0)) throw DataError("rotation axis must be non-zero");
  const double s = std::sin(radians / 2.0) / n;
  return {std::cos(radians / 2.0), axis[0] * s, axis[1] * s, axis[2] * s};
}

Quaternion Quaternion::from_yaw_pitch_roll(double yaw, double pitch, double roll) {
  return from_axis_angle({0, 0, 1}, yaw) * from_axis_angle({0, 1, 0}, pitch) * from_axis_angle({1, 0, 0}, roll);
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DataError("cannot normalize a zero or non-finite quaternion");
  return {w / n, x / n, y / n, z / n};
}

Mat3 Quaternion::to_matrix() const {
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

Quaternion operator*(const Quaternion& a, const Quaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Quaternion slerp(const Quaternion& a, const Quaternion& b_in, double t) {
  Quaternion b = b_in;
  double c = a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
  if (c < 0.0) {
    b = {-b.w, -b.x, -b.y, -b.z};
    c = -c;
  }
  double wa, wb;
  if (c > 1.0 - 1e-12) {
    wa = 1.0 - t;
    wb = t;
  } else {
    const double theta = std::acos(c);
    const double s = std::sin(theta);
    wa = std::sin((1.0 - t) * theta) / s;
    wb = std::sin(t * theta) / s;
  }
  return Quaternion{wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z}.normalized();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("focal lengths must be > 0");
  if (width < 1 || height < 1) throw ConfigError("image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw ConfigError("principal point must lie inside the image");
  if (!std::isfinite(k1) || !std::isfinite(k2)) throw ConfigError("distortion coefficients must be finite");
}

void CameraPose::validate() const {
  if (std::abs(attitude.norm() - 1.0) > 1e-9) throw DataError("pose quaternion is not unit length");
  if (std::abs(mount.rotation.norm() - 1.0) > 1e-9) throw DataError("mount quaternion is not unit length");
  for (double v : position)
    if (!std::isfinite(v)) throw DataError("pose position is not finite");
}

Mat3 CameraPose::world_from_camera() const { return mul(attitude.to_matrix(), mount.rotation.to_matrix()); }

Vec3 CameraPose::camera_center() const { return position + attitude.rotate(mount.lever_arm); }

Quaternion nadir_attitude() { return {0.0, 1.0, 0.0, 0.0}; }

CameraModel::CameraModel(const CameraPose& pose, const CameraIntrinsics& k)
    : k_(k), r_wc_(pose.world_from_camera()), center_(pose.camera_center()) {
  pose.validate();
  k.validate();
}

void CameraModel::project_normalized(double xn, double yn, double& u, double& v) const {
  if (k_.k1 != 0.0 || k_.k2 != 0.0) {
    const double r2 = xn * xn + yn * yn;
    const double f = 1.0 + k_.k1 * r2 + k_.k2 * r2 * r2;
    xn *= f;
    yn *= f;
  }
  u = k_.fx * xn + k_.cx;
  v = k_.fy * yn + k_.cy;
}

void CameraModel::unproject(double u, double v, double& xn, double& yn) const {
  const double xd = (u - k_.cx) / k_.fx;
  const double yd = (v - k_.cy) / k_.fy;
  xn = xd;
  yn = yd;
  if (k_.k1 == 0.0 && k_.k2 == 0.0) return;
  // Newton on r * (1 + k1 r^2 + k2 r^4) = r_d.
  const double rd = std::hypot(xd, yd);
  if (rd == 0.0) return;
  double r = rd;
  for (int it = 0; it < 50; ++it) {
    const double r2 = r * r;
    const double g = r * (1.0 + k_.k1 * r2 + k_.k2 * r2 * r2) - rd;
    const double dg = 1.0 + 3.0 * k_.k1 * r2 + 5.0 * k_.k2 * r2 * r2;
    if (!(dg > 0.0)) throw NumericalError("radial distortion is not invertible at this pixel");
    const double step = g / dg;
    r -= step;
    if (std::abs(step) <= 1e-16 * r) break;
  }
  xn = xd * (r / rd);
  yn = yd * (r / rd);
}

std::optional<Projection> world_to_image(const Vec3& world, const CameraPose& pose, const CameraIntrinsics& k,
                                         double near_plane) {
  const CameraModel cam(pose, k);
  const Vec3 c = cam.to_camera(world);
  if (!(c[2] > near_plane)) return std::nullopt;
  Projection p;
  cam.project_normalized(c[0] / c[2], c[1] / c[2], p.u, p.v);
  p.depth = c[2];
  return p;
}

Vec3 image_to_world(double u, double v, double depth, const CameraPose& pose, const CameraIntrinsics& k) {
  const CameraModel cam(pose, k);
  double xn = 0, yn = 0;
  cam.unproject(u, v, xn, yn);
  return cam.to_world({xn * depth, yn * depth, depth});
}

CameraPose interpolate_pose(const std::vector<CameraPose>& log, double t) {
  if (log.empty()) throw DataError("pose log is empty");
  for (std::size_t i = 1; i < log.size(); ++i)
    if (!(log[i].timestamp > log[i - 1].timestamp)) throw DataError("pose log timestamps must be strictly increasing");
  if (!(t >= log.front().timestamp && t <= log.back().timestamp))
    throw DataError("timestamp " + std::to_string(t) + " is outside the pose log span [" +
                    std::to_string(log.front().timestamp) + ", " + std::to_string(log.back().timestamp) + "]");
  const auto it = std::lower_bound(log.begin(), log.end(), t,
                                   [](const CameraPose& p, double v) { return p.timestamp < v; });
  if (it->timestamp == t) return *it;
  const CameraPose& b = *it;
  const CameraPose& a = *(it - 1);
  const double f = (t - a.timestamp) / (b.timestamp - a.timestamp);
  CameraPose out = a;
  for (int i = 0; i < 3; ++i) out.position[i] = a.position[i] + f * (b.position[i] - a.position[i]);
  out.attitude = slerp(a.attitude, b.attitude, f);
  out.timestamp = t;
  return out;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) out.push_back(trim(f));
  return out;
}

}  // namespace

std::vector<CameraPose> parse_pose_log(const std::string& text, const Crs& crs, const BodyToCamera& mount) {
  std::stringstream in(text);
  std::string line;
  std::map<std::string, std::size_t> col;
  std::vector<CameraPose> out;
  int line_no = 0;
  bool geographic = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = split_csv(t);
    if (col.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
      for (const char* req : {"timestamp", "altitude", "qw", "qx", "qy", "qz"})
        if (!col.count(req)) throw DataError(std::string("pose log header lacks column '") + req + "'");
      if (col.count("easting") && col.count("northing")) {
        geographic = false;
      } else if (col.count("lat") && col.count("lon")) {
        geographic = true;
        if (crs.kind != Crs::Kind::Utm) throw ConfigError("lat/lon pose logs need a UTM target CRS");
      } else {
        throw DataError("pose log header needs easting,northing or lat,lon columns");
      }
      continue;
    }
    if (fields.size() != col.size())
      throw DataError("pose log line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(col.size()));
    auto num = [&](const char* name) {
      try {
        std::size_t pos = 0;
        const double v = std::stod(fields[col.at(name)], &pos);
        if (pos != fields[col.at(name)].size() || !std::isfinite(v)) throw std::invalid_argument(name);
        return v;
      } catch (const std::exception&) {
        throw DataError("pose log line " + std::to_string(line_no) + ": bad value for '" + name + "'");
      }
    };
    CameraPose p;
    p.timestamp = num("timestamp");
    if (geographic) {
      const UtmCoord u = wgs84_to_utm(num("lon"), num("lat"), crs.zone, crs.hemisphere);
      p.position = {u.easting, u.northing, num("altitude")};
    } else {
      p.position = {num("easting"), num("northing"), num("altitude")};
    }
    const Quaternion q{num("qw"), num("qx"), num("qy"), num("qz")};
    if (std::abs(q.norm() - 1.0) > 1e-6)
      throw DataError("pose log line " + std::to_string(line_no) + ": quaternion is not unit length");
    p.attitude = q.normalized();
    p.mount = mount;
    if (!out.empty() && !(p.timestamp > out.back().timestamp))
      throw DataError("pose log line " + std::to_string(line_no) + ": timestamps must be strictly increasing");
    out.push_back(p);
  }
  if (out.empty()) throw DataError("pose log contains no samples");
  return out;
}

std::vector<CameraPose> read_pose_log(const std::filesystem::path& path, const Crs& crs, const BodyToCamera& mount) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose log " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pose_log(ss.str(), crs, mount);
}

}  // namespace aerolabel
