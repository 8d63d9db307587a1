#include "viso/nbv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace viso {

namespace {

constexpr double kRejectionFloor = 1e-9;
const double kTruncationElevation = std::numbers::pi / 4.0;

struct Contribution {
  Vec3 direction = Vec3::Zero();
  double beta = 0.0;
  bool singular = false;
};

Vec3 radial(const Vec3& x, const ViewSphere& sphere) {
  const Vec3 r = x - sphere.center;
  const double n = r.norm();
  if (n < 1e-12) throw Error(Errc::kDegenerateGeometry, "camera at the sphere centre");
  return r / n;
}

void require_on_sphere(const Vec3& x, const ViewSphere& sphere) {
  const double off = std::abs((x - sphere.center).norm() - sphere.radius);
  if (off > 1e-6 * std::max(1.0, sphere.radius)) {
    throw Error(Errc::kInvalidArgument, "camera position is off the view sphere");
  }
}

Contribution contribution(const Vec3& x, const Vec3& e_rad, const Vec3& p_target,
                          const Vec3& p_oc) {
  const Vec3 oc2t = p_target - p_oc;
  const double oc2t_norm = oc2t.norm();
  if (oc2t_norm < 1e-12) {
    throw Error(Errc::kDegenerateGeometry, "target and occluder points coincide");
  }
  const Vec3 from_oc = x - p_oc;
  const double from_oc_norm = from_oc.norm();
  if (from_oc_norm < 1e-12) {
    throw Error(Errc::kDegenerateGeometry, "camera coincides with an occluder point");
  }
  const Vec3 e_oc2t = oc2t / oc2t_norm;
  Contribution c;
  const double cosang = std::clamp(e_oc2t.dot(from_oc) / from_oc_norm, -1.0, 1.0);
  c.beta = std::acos(cosang) / std::numbers::pi;
  const Vec3 rej = e_oc2t - e_oc2t.dot(e_rad) * e_rad;
  const double rej_norm = rej.norm();
  if (rej_norm < kRejectionFloor) {
    c.singular = true;
  } else {
    c.direction = rej / rej_norm;
  }
  return c;
}

// Deterministic tangent used when the rejection vanishes: the azimuth
// direction, or world x rejected from the radial direction at the poles.
Vec3 fallback_direction(const Vec3& x, const ViewSphere& sphere, const Vec3& e_rad) {
  try {
    return tangent_basis(x, sphere.center).e_az.vec();
  } catch (const Error& e) {
    if (e.code() != Errc::kPoleSingularity) throw;
  }
  return (Vec3::UnitX() - Vec3::UnitX().dot(e_rad) * e_rad).normalized();
}

}  // namespace

void ViewSphere::validate() const {
  if (!(radius > 0.0)) throw Error(Errc::kInvalidArgument, "sphere radius must be positive");
}

Vec3 ViewSphere::project(const Vec3& x) const {
  Vec3 r = x - center;
  if (r.z() < 0.0) r.z() = 0.0;
  const double n = r.norm();
  if (n < 1e-12) throw Error(Errc::kDegenerateGeometry, "cannot project the sphere centre");
  return center + radius * r / n;
}

Vec3 ViewSphere::from_angles(double azimuth, double elev) const {
  return center + radius * Vec3(std::cos(elev) * std::cos(azimuth),
                                std::cos(elev) * std::sin(azimuth), std::sin(elev));
}

OccluderPoints occluder_points(const OrientedBox& box) {
  OccluderPoints pts;
  pts.reserve(9);
  pts.push_back(box.center);
  for (const auto& c : box.corners()) pts.push_back(c);
  return pts;
}

FieldSample field_single(const Vec3& x, const ViewSphere& sphere, const Vec3& p_target,
                         const Vec3& p_occluder) {
  sphere.validate();
  require_on_sphere(x, sphere);
  const Vec3 e_rad = radial(x, sphere);
  const Contribution c = contribution(x, e_rad, p_target, p_occluder);
  FieldSample s;
  s.beta = c.beta;
  s.singular = c.singular;
  const Vec3 dir = c.singular ? fallback_direction(x, sphere, e_rad) : c.direction;
  s.velocity = c.beta * dir;
  return s;
}

FieldSample field_multi(const Vec3& x, const ViewSphere& sphere, const Vec3& p_target,
                        std::span<const Vec3> occluders) {
  sphere.validate();
  require_on_sphere(x, sphere);
  if (occluders.empty()) throw Error(Errc::kInvalidArgument, "no occluder points");
  const Vec3 e_rad = radial(x, sphere);
  FieldSample s;
  double beta_sum = 0.0;
  int counted = 0;
  for (const auto& p : occluders) {
    Contribution c;
    try {
      c = contribution(x, e_rad, p_target, p);
    } catch (const Error& e) {
      if (e.code() != Errc::kDegenerateGeometry) throw;
      ++s.skipped;
      continue;
    }
    s.singular = s.singular || c.singular;
    s.velocity += c.beta * c.direction;
    beta_sum += c.beta;
    ++counted;
  }
  s.beta = counted > 0 ? beta_sum / counted : 0.0;
  return s;
}

FieldSample truncate_downward(const FieldSample& sample, const Vec3& x, const ViewSphere& sphere) {
  FieldSample out = sample;
  out.truncated = false;
  if (elevation(x, sphere.center) >= kTruncationElevation) return out;
  const TangentBasis basis = tangent_basis(x, sphere.center);
  double up = sample.velocity.dot(basis.e_up.vec());
  const double az = sample.velocity.dot(basis.e_az.vec());
  if (up < 0.0) {
    up = 0.0;
    out.truncated = true;
  }
  out.velocity = up * basis.e_up.vec() + az * basis.e_az.vec();
  return out;
}

FieldSample planner_field(const Vec3& x, const ViewSphere& sphere, const Vec3& p_target,
                          std::span<const Vec3> occluders) {
  const FieldSample raw = occluders.size() == 1
                              ? field_single(x, sphere, p_target, occluders.front())
                              : field_multi(x, sphere, p_target, occluders);
  return truncate_downward(raw, x, sphere);
}

std::string_view to_string(TrajectoryStatus s) {
  return s == TrajectoryStatus::kStagnated ? "Stagnated" : "Budget";
}

Vec3 euler_step(const Vec3& x, const FieldSample& sample, const ViewSphere& sphere, double step) {
  const Vec3 moved = x + step * sample.velocity;
  try {
    return sphere.project(moved);
  } catch (const Error&) {
    return x;
  }
}

Trajectory integrate_trajectory(const Vec3& x0, const ViewSphere& sphere, const Vec3& p_target,
                                std::span<const Vec3> occluders, const IntegrationParams& params) {
  if (!(params.step > 0.0)) throw Error(Errc::kInvalidArgument, "integration step must be positive");
  Trajectory traj;
  traj.start = sphere.project(x0);
  Vec3 x = traj.start;
  for (int k = 0;; ++k) {
    const FieldSample s = planner_field(x, sphere, p_target, occluders);
    traj.final_sample = s;
    if (s.velocity.norm() < params.eps_stag) {
      traj.status = TrajectoryStatus::kStagnated;
      return traj;
    }
    if (k >= params.max_steps) {
      traj.status = TrajectoryStatus::kBudget;
      return traj;
    }
    traj.samples.push_back(s);
    x = euler_step(x, s, sphere, params.step);
    traj.points.push_back(x);
  }
}

}  // namespace viso
