#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "viso/geom.hpp"

namespace viso {

/// Hemisphere the camera moves on.
struct ViewSphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;

  void validate() const;

  /// Radial projection onto the sphere, clamped to elevation >= 0.
  Vec3 project(const Vec3& x) const;
  Vec3 from_angles(double azimuth, double elevation) const;
};

struct FieldSample {
  Vec3 velocity = Vec3::Zero();
  double beta = 0.0;
  bool truncated = false;
  bool singular = false;  // rejection vanished; fallback direction used or dropped
  int skipped = 0;        // occluder points coinciding with the target or camera
};

using OccluderPoints = std::vector<Vec3>;

/// Center and the 8 corners of a box.
OccluderPoints occluder_points(const OrientedBox& box);

/// Single-occluder field at camera position x. Throws kDegenerateGeometry when
/// the target and occluder coincide or x sits on the occluder point, and
/// kInvalidArgument when x is off the sphere by more than 1e-6.
FieldSample field_single(const Vec3& x, const ViewSphere& sphere, const Vec3& p_target,
                         const Vec3& p_occluder);

/// Superposition over occluder points. Singular contributions add no velocity
/// but count toward the mean beta; degenerate ones are skipped.
FieldSample field_multi(const Vec3& x, const ViewSphere& sphere, const Vec3& p_target,
                        std::span<const Vec3> occluders);

/// Below 45 degrees elevation, drops the downward part of the tangential velocity.
FieldSample truncate_downward(const FieldSample& sample, const Vec3& x, const ViewSphere& sphere);

/// Field plus truncation, as the integrator sees it.
FieldSample planner_field(const Vec3& x, const ViewSphere& sphere, const Vec3& p_target,
                          std::span<const Vec3> occluders);

struct IntegrationParams {
  double step = 0.02;  // meters per unit velocity
  int max_steps = 2000;
  double eps_stag = 1e-3;
};

enum class TrajectoryStatus { kStagnated, kBudget };

std::string_view to_string(TrajectoryStatus s);

struct Trajectory {
  Vec3 start = Vec3::Zero();
  std::vector<Vec3> points;  // positions after each accepted step
  std::vector<FieldSample> samples;  // field at the position each step started from
  FieldSample final_sample;          // field at the last position
  TrajectoryStatus status = TrajectoryStatus::kBudget;

  const Vec3& end() const { return points.empty() ? start : points.back(); }
};

/// One explicit Euler step, re-projected onto the hemisphere.
Vec3 euler_step(const Vec3& x, const FieldSample& sample, const ViewSphere& sphere, double step);

Trajectory integrate_trajectory(const Vec3& x0, const ViewSphere& sphere, const Vec3& p_target,
                                std::span<const Vec3> occluders, const IntegrationParams& params);

}  // namespace viso
