#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "viso/error.hpp"

namespace viso {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Half-extent floor used for degenerate point sets.
inline constexpr double kBoxEpsilon = 1e-4;

/// A 3-vector that is normalized on construction.
class UnitVec3 {
 public:
  UnitVec3() : v_(Vec3::UnitZ()) {}

  /// Throws kDegenerateGeometry for (near) zero input.
  explicit UnitVec3(const Vec3& v);

  static UnitVec3 unchecked(const Vec3& unit) {
    UnitVec3 u;
    u.v_ = unit;
    return u;
  }

  const Vec3& vec() const { return v_; }
  operator const Vec3&() const { return v_; }
  double x() const { return v_.x(); }
  double y() const { return v_.y(); }
  double z() const { return v_.z(); }
  double dot(const Vec3& o) const { return v_.dot(o); }

 private:
  Vec3 v_;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
};

/// Camera optical frame: +z forward, +x right, +y down (image origin top-left).
struct CameraPose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Vec3 to_camera(const Vec3& world) const;
  Vec3 to_world(const Vec3& cam) const;
  Vec3 optical_axis() const { return orientation * Vec3::UnitZ(); }

  /// Pose at `position` whose optical axis points at `target`.
  static CameraPose look_at(const Vec3& position, const Vec3& target);
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // row-major, meters, 0 = invalid

  DepthImage() = default;
  DepthImage(int w, int h, double fill = 0.0);

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  bool contains(int u, int v) const { return u >= 0 && v >= 0 && u < width && v < height; }
};

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// Continuous form: depth * K^-1 * (u, v, 1).
Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& K);

/// Looks up the depth at integer pixel (u, v). Throws kOutOfBounds / kInvalidDepth.
Vec3 backproject(int u, int v, const DepthImage& depth, const CameraIntrinsics& K);

/// Throws kBehindCamera when p.z <= 0.
PixelDepth project(const Vec3& p, const CameraIntrinsics& K);

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();  // columns are the box axes
  Vec3 half_extents = Vec3::Constant(0.5);

  static OrientedBox axis_aligned(const Vec3& center, const Vec3& half_extents);

  std::array<Vec3, 8> corners() const;
  Vec3 to_local(const Vec3& world) const { return rotation.transpose() * (world - center); }
  Vec3 to_world(const Vec3& local) const { return center + rotation * local; }

  /// Closed containment with `slack` added to every half extent.
  bool contains(const Vec3& p, double slack = 0.0) const;

  /// Same box with every half extent grown by `margin`.
  OrientedBox expanded(double margin) const;

  double min_z() const;
  double max_z() const;
  double volume() const { return 8.0 * half_extents.prod(); }

  /// Same geometric box with axes ordered by descending half extent and
  /// sign-fixed the same way fit_oriented_box does it.
  OrientedBox canonical() const;

  void validate() const;
};

/// PCA-aligned box. Axes follow descending covariance eigenvalues; within a
/// degenerate eigenspace the frame is chosen to minimise the box extent.
/// Throws kDegenerateInput for fewer than 3 points or a collinear set.
OrientedBox fit_oriented_box(std::span<const Vec3> points);

/// fit_oriented_box, falling back to an axis-aligned box (half extents floored
/// at kBoxEpsilon) on degenerate input. Throws kDegenerateInput only when empty.
OrientedBox fit_oriented_box_or_aabb(std::span<const Vec3> points);

/// Nearest non-negative hit distance along the ray; 0 when the origin is inside.
std::optional<double> ray_box_intersect(const Vec3& origin, const UnitVec3& dir,
                                        const OrientedBox& box);

struct TangentBasis {
  UnitVec3 e_rad;
  UnitVec3 e_up;
  UnitVec3 e_az;
};

/// Radial/up/azimuth frame at x on a sphere centred at s.
/// Throws kPoleSingularity when the radial direction is vertical.
TangentBasis tangent_basis(const Vec3& x, const Vec3& s);

/// Elevation of x above the horizontal plane through s, radians.
double elevation(const Vec3& x, const Vec3& s);

}  // namespace viso
