#include "viso/geom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace viso {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kOutOfBounds: return "OutOfBounds";
    case Errc::kInvalidDepth: return "InvalidDepth";
    case Errc::kBehindCamera: return "BehindCamera";
    case Errc::kDegenerateInput: return "DegenerateInput";
    case Errc::kPoleSingularity: return "PoleSingularity";
    case Errc::kDegenerateGeometry: return "DegenerateGeometry";
    case Errc::kAmbiguousTarget: return "AmbiguousTarget";
    case Errc::kNoTarget: return "NoTarget";
    case Errc::kCycleDetected: return "CycleDetected";
    case Errc::kNoHypothesis: return "NoHypothesis";
    case Errc::kUnknownLabel: return "UnknownLabel";
  }
  return "Unknown";
}

UnitVec3::UnitVec3(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 1e-300) || !std::isfinite(n)) {
    throw Error(Errc::kDegenerateGeometry, "cannot normalise a zero or non-finite vector");
  }
  v_ = v / n;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(Errc::kInvalidArgument, "focal lengths must be positive");
  }
}

Vec3 CameraPose::to_camera(const Vec3& world) const {
  return orientation.conjugate() * (world - position);
}

Vec3 CameraPose::to_world(const Vec3& cam) const { return position + orientation * cam; }

CameraPose CameraPose::look_at(const Vec3& position, const Vec3& target) {
  const Vec3 forward = UnitVec3(target - position).vec();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) {
    // Looking straight up or down: pin image +x to world +x.
    right = Vec3::UnitX() - forward.dot(Vec3::UnitX()) * forward;
  }
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  CameraPose pose;
  pose.position = position;
  pose.orientation = Quat(r).normalized();
  return pose;
}

DepthImage::DepthImage(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) {
    throw Error(Errc::kInvalidArgument, "depth image dimensions must be positive");
  }
  depth.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

Vec3 backproject(double u, double v, double depth, const CameraIntrinsics& K) {
  return {depth * (u - K.cx) / K.fx, depth * (v - K.cy) / K.fy, depth};
}

Vec3 backproject(int u, int v, const DepthImage& depth, const CameraIntrinsics& K) {
  K.validate();
  if (!depth.contains(u, v)) {
    throw Error(Errc::kOutOfBounds, "pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                                        ") outside " + std::to_string(depth.width) + "x" +
                                        std::to_string(depth.height) + " image");
  }
  const double d = depth.at(u, v);
  if (!(d > 0.0)) {
    throw Error(Errc::kInvalidDepth, "no depth at pixel (" + std::to_string(u) + ", " +
                                         std::to_string(v) + ")");
  }
  return backproject(static_cast<double>(u), static_cast<double>(v), d, K);
}

PixelDepth project(const Vec3& p, const CameraIntrinsics& K) {
  K.validate();
  if (!(p.z() > 0.0)) {
    throw Error(Errc::kBehindCamera, "point has non-positive depth");
  }
  return {K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy, p.z()};
}

// ---------------------------------------------------------------------------
// Oriented boxes

namespace {

int dominant_index(const Vec3& v) {
  int idx = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(v[i]) > std::abs(v[idx])) idx = i;
  }
  return idx;
}

Vec3 sign_fixed(const Vec3& v) { return v[dominant_index(v)] < 0.0 ? Vec3(-v) : v; }

// Reorders `axes` columns using `key` descending (ties within `tol` broken by
// dominant component index), applies the sign rule and forces det = +1.
void order_and_fix(Mat3& axes, Vec3& key, double tol) {
  std::array<int, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (std::abs(key[a] - key[b]) > tol) return key[a] > key[b];
    return dominant_index(axes.col(a)) < dominant_index(axes.col(b));
  });
  Mat3 out;
  Vec3 k;
  for (int i = 0; i < 3; ++i) {
    out.col(i) = sign_fixed(axes.col(idx[i]));
    k[i] = key[idx[i]];
  }
  if (out.determinant() < 0.0) out.col(2) = -out.col(2);
  axes = out;
  key = k;
}

struct Extent {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double length() const { return hi - lo; }
};

Extent extent_along(std::span<const Vec3> pts, const Vec3& axis) {
  Extent e;
  for (const auto& p : pts) e.add(p.dot(axis));
  return e;
}

// Candidate directions for resolving rotational ambiguity: pairwise
// differences among the leading `limit` points.
std::vector<Vec3> difference_directions(std::span<const Vec3> pts, std::size_t limit) {
  const std::size_t m = std::min(pts.size(), limit);
  std::vector<Vec3> out;
  out.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) out.push_back(pts[j] - pts[i]);
  }
  return out;
}

struct PlanarFrame {
  Vec3 a;
  Vec3 b;
  double area;
};

// Best in-plane frame for span(u, v): minimise the product of extents.
PlanarFrame resolve_plane(std::span<const Vec3> pts, const Vec3& u, const Vec3& v,
                          const std::vector<Vec3>& candidates) {
  auto evaluate = [&](double theta) {
    const Vec3 a = std::cos(theta) * u + std::sin(theta) * v;
    const Vec3 b = -std::sin(theta) * u + std::cos(theta) * v;
    return PlanarFrame{a, b, extent_along(pts, a).length() * extent_along(pts, b).length()};
  };
  PlanarFrame best = evaluate(0.0);
  for (const auto& d : candidates) {
    const double du = d.dot(u);
    const double dv = d.dot(v);
    if (std::hypot(du, dv) < 1e-12 * (1.0 + d.norm())) continue;
    double theta = std::fmod(std::atan2(dv, du), std::numbers::pi / 2.0);
    if (theta < 0.0) theta += std::numbers::pi / 2.0;
    const PlanarFrame f = evaluate(theta);
    if (f.area < best.area * (1.0 - 1e-12)) best = f;
  }
  return best;
}

Vec3 any_orthogonal(const Vec3& n) {
  const Vec3 seed = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return (seed - seed.dot(n) * n).normalized();
}

OrientedBox box_from_axes(std::span<const Vec3> pts, const Vec3& mean, const Mat3& axes) {
  OrientedBox box;
  box.rotation = axes;
  Vec3 mid;
  for (int i = 0; i < 3; ++i) {
    Extent e;
    for (const auto& p : pts) e.add((p - mean).dot(axes.col(i)));
    mid[i] = 0.5 * (e.lo + e.hi);
    box.half_extents[i] = std::max(0.5 * (e.hi - e.lo), kBoxEpsilon);
  }
  box.center = mean + axes * mid;
  return box;
}

}  // namespace

OrientedBox OrientedBox::axis_aligned(const Vec3& center, const Vec3& half_extents) {
  OrientedBox b;
  b.center = center;
  b.half_extents = half_extents;
  return b;
}

std::array<Vec3, 8> OrientedBox::corners() const {
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const Vec3 local((i & 1) ? half_extents.x() : -half_extents.x(),
                     (i & 2) ? half_extents.y() : -half_extents.y(),
                     (i & 4) ? half_extents.z() : -half_extents.z());
    out[i] = to_world(local);
  }
  return out;
}

bool OrientedBox::contains(const Vec3& p, double slack) const {
  const Vec3 l = to_local(p);
  for (int i = 0; i < 3; ++i) {
    if (std::abs(l[i]) > half_extents[i] + slack) return false;
  }
  return true;
}

OrientedBox OrientedBox::expanded(double margin) const {
  OrientedBox b = *this;
  b.half_extents.array() += margin;
  return b;
}

double OrientedBox::min_z() const {
  return center.z() - rotation.row(2).cwiseAbs().dot(half_extents);
}

double OrientedBox::max_z() const {
  return center.z() + rotation.row(2).cwiseAbs().dot(half_extents);
}

OrientedBox OrientedBox::canonical() const {
  OrientedBox b = *this;
  order_and_fix(b.rotation, b.half_extents, 1e-9 * std::max(1.0, half_extents.maxCoeff()));
  return b;
}

void OrientedBox::validate() const {
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw Error(Errc::kInvalidArgument, "box rotation is not a proper rotation");
  }
  if (!(half_extents.array() > 0.0).all()) {
    throw Error(Errc::kInvalidArgument, "box half extents must be positive");
  }
}

OrientedBox fit_oriented_box(std::span<const Vec3> points) {
  if (points.size() < 3) {
    throw Error(Errc::kDegenerateInput, "need at least 3 points, got " + std::to_string(points.size()));
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());

  Mat3 cov = Mat3::Zero();
  std::vector<Vec3> centred;
  centred.reserve(points.size());
  for (const auto& p : points) {
    centred.push_back(p - mean);
    cov += centred.back() * centred.back().transpose();
  }
  cov /= static_cast<double>(points.size());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  // Descending order.
  Vec3 lambda(solver.eigenvalues()[2], solver.eigenvalues()[1], solver.eigenvalues()[0]);
  Mat3 axes;
  axes.col(0) = solver.eigenvectors().col(2);
  axes.col(1) = solver.eigenvectors().col(1);
  axes.col(2) = solver.eigenvectors().col(0);

  if (!(lambda[0] > 0.0) || lambda[1] <= 1e-12 * lambda[0]) {
    throw Error(Errc::kDegenerateInput, "points are collinear or coincident");
  }

  const double tie = 1e-6 * lambda[0];
  const bool tie01 = lambda[0] - lambda[1] <= tie;
  const bool tie12 = lambda[1] - lambda[2] <= tie;

  if (tie01 && tie12) {
    // Isotropic spread: pick the frame with the smallest box among frames
    // seeded by point-difference directions.
    const auto cand = difference_directions(centred, 16);
    double best_volume = std::numeric_limits<double>::infinity();
    Mat3 best = axes;
    auto consider = [&](const Vec3& first) {
      const Vec3 u = any_orthogonal(first);
      const Vec3 v = first.cross(u);
      const PlanarFrame f = resolve_plane(centred, u, v, cand);
      const double vol = extent_along(centred, first).length() * f.area;
      if (vol < best_volume * (1.0 - 1e-12)) {
        best_volume = vol;
        best.col(0) = first;
        best.col(1) = f.a;
        best.col(2) = f.b;
      }
    };
    consider(axes.col(0));
    for (const auto& d : cand) {
      const double n = d.norm();
      if (n > 1e-12) consider(d / n);
    }
    axes = best;
  } else if (tie01 || tie12) {
    const int i = tie01 ? 0 : 1;
    const auto cand = difference_directions(centred, 64);
    const PlanarFrame f = resolve_plane(centred, axes.col(i), axes.col(i + 1), cand);
    axes.col(i) = f.a;
    axes.col(i + 1) = f.b;
  }

  // Re-derive the ordering key: eigenvalue for distinct axes, extent inside
  // tied groups.
  Vec3 key;
  for (int i = 0; i < 3; ++i) {
    const double len = extent_along(centred, axes.col(i)).length();
    key[i] = len * len;
  }
  const double key_tol = 1e-9 * std::max(1.0, key.maxCoeff());
  if (!tie01 && !tie12) {
    key = lambda;
  } else if (!(tie01 && tie12)) {
    // Keep the distinct axis on its own side of the tied pair.
    const int lone = tie01 ? 2 : 0;
    key[lone] = lone == 0 ? 1e300 : -1.0;
  }
  order_and_fix(axes, key, key_tol);
  return box_from_axes(points, mean, axes);
}

OrientedBox fit_oriented_box_or_aabb(std::span<const Vec3> points) {
  if (points.empty()) throw Error(Errc::kDegenerateInput, "empty point set");
  try {
    return fit_oriented_box(points);
  } catch (const Error& e) {
    if (e.code() != Errc::kDegenerateInput) throw;
  }
  Vec3 lo = points.front();
  Vec3 hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return OrientedBox::axis_aligned(0.5 * (lo + hi),
                                   (0.5 * (hi - lo)).cwiseMax(Vec3::Constant(kBoxEpsilon)));
}

std::optional<double> ray_box_intersect(const Vec3& origin, const UnitVec3& dir,
                                        const OrientedBox& box) {
  const Vec3 o = box.to_local(origin);
  const Vec3 d = box.rotation.transpose() * dir.vec();
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const double h = box.half_extents[i];
    if (d[i] == 0.0) {
      if (std::abs(o[i]) > h) return std::nullopt;
      continue;
    }
    double t1 = (-h - o[i]) / d[i];
    double t2 = (h - o[i]) / d[i];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_far < t_near) return std::nullopt;
  }
  if (t_far < 0.0) return std::nullopt;
  return std::max(t_near, 0.0);
}

TangentBasis tangent_basis(const Vec3& x, const Vec3& s) {
  const Vec3 r = x - s;
  if (r.norm() < 1e-12) {
    throw Error(Errc::kDegenerateGeometry, "position coincides with the sphere centre");
  }
  const Vec3 e_rad = r.normalized();
  if (std::abs(e_rad.z()) >= 1.0 - 1e-9) {
    throw Error(Errc::kPoleSingularity, "radial direction is vertical");
  }
  const Vec3 e_az = Vec3::UnitZ().cross(e_rad).normalized();
  const Vec3 e_up = e_rad.cross(e_az);
  return {UnitVec3::unchecked(e_rad), UnitVec3::unchecked(e_up), UnitVec3::unchecked(e_az)};
}

double elevation(const Vec3& x, const Vec3& s) {
  const Vec3 r = x - s;
  return std::asin(std::clamp(r.z() / r.norm(), -1.0, 1.0));
}

}  // namespace viso
