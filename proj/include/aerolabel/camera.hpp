#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aerolabel/raster.hpp"

namespace aerolabel {

using Vec3 = std::array<double, 3>;
/// Row-major 3x3.
using Mat3 = std::array<double, 9>;

Vec3 operator+(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a, const Vec3& b);
Vec3 operator*(double s, const Vec3& a);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 mul(const Mat3& m, const Vec3& v);
Vec3 mul_transposed(const Mat3& m, const Vec3& v);
Mat3 mul(const Mat3& a, const Mat3& b);

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  static Quaternion from_axis_angle(const Vec3& axis, double radians);
  /// Intrinsic Z-Y-X (yaw, pitch, roll), radians.
  static Quaternion from_yaw_pitch_roll(double yaw, double pitch, double roll);
  double norm() const;
  Quaternion normalized() const;
  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  Mat3 to_matrix() const;
  Vec3 rotate(const Vec3& v) const { return mul(to_matrix(), v); }

  friend Quaternion operator*(const Quaternion& a, const Quaternion& b);
  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

/// Shortest-arc spherical linear interpolation.
Quaternion slerp(const Quaternion& a, const Quaternion& b, double t);

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  double k1 = 0.0, k2 = 0.0;

  void validate() const;
};

/// Camera mounting in the body frame: `rotation` maps camera axes into body
/// axes; `lever_arm` is the camera centre in body coordinates (m).
struct BodyToCamera {
  Quaternion rotation;
  Vec3 lever_arm{0.0, 0.0, 0.0};
};

/// World frame ENU (easting, northing, up). Camera frame: +Z forward,
/// +X right, +Y down. `attitude` maps body axes into the world frame.
struct CameraPose {
  Vec3 position{0.0, 0.0, 0.0};
  Quaternion attitude;
  BodyToCamera mount;
  double timestamp = 0.0;

  void validate() const;
  /// Camera-to-world rotation (columns are camera axes in world).
  Mat3 world_from_camera() const;
  Vec3 camera_center() const;
};

/// Attitude of a camera looking straight down with image up = north.
Quaternion nadir_attitude();

struct Projection {
  double u = 0.0, v = 0.0, depth = 0.0;
};

inline constexpr double kNearPlane = 0.1;

/// Precomputed world->image mapping for one pose.
class CameraModel {
 public:
  CameraModel(const CameraPose& pose, const CameraIntrinsics& k);

  Vec3 to_camera(const Vec3& world) const { return mul_transposed(r_wc_, world - center_); }
  Vec3 to_world(const Vec3& cam) const { return mul(r_wc_, cam) + center_; }
  /// Normalized (z = 1) camera coordinates -> pixels, applying distortion.
  void project_normalized(double xn, double yn, double& u, double& v) const;
  /// Inverse of project_normalized (fixed-point undistortion).
  void unproject(double u, double v, double& xn, double& yn) const;

  const CameraIntrinsics& intrinsics() const { return k_; }
  const Vec3& center() const { return center_; }

 private:
  CameraIntrinsics k_;
  Mat3 r_wc_;
  Vec3 center_;
};

/// Empty optional when the point is at or behind the near plane.
std::optional<Projection> world_to_image(const Vec3& world, const CameraPose& pose, const CameraIntrinsics& k,
                                         double near_plane = kNearPlane);
/// Point at camera-frame depth `depth` along the ray through pixel (u, v).
Vec3 image_to_world(double u, double v, double depth, const CameraPose& pose, const CameraIntrinsics& k);

/// Linear position / slerp attitude between the bracketing samples.
CameraPose interpolate_pose(const std::vector<CameraPose>& log, double t);

/// Pose log CSV with a header naming its columns: `timestamp`, either
/// `easting,northing` or `lat,lon` (converted into `crs`, which must be UTM
/// for geographic input), `altitude`, and `qw,qx,qy,qz`. Blank lines and
/// lines starting with '#' are skipped.
std::vector<CameraPose> read_pose_log(const std::filesystem::path& path, const Crs& crs,
                                      const BodyToCamera& mount = {});
std::vector<CameraPose> parse_pose_log(const std::string& text, const Crs& crs, const BodyToCamera& mount = {});

}  // namespace aerolabel
