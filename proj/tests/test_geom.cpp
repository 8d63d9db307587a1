#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "viso/geom.hpp"

using namespace viso;

namespace {

const CameraIntrinsics kK{500, 500, 320, 240};

bool same_axis(const Vec3& a, const Vec3& b, double tol) { return std::abs(std::abs(a.dot(b)) - 1.0) < tol; }

}  // namespace

TEST_CASE("backproject examples") {
  CHECK((backproject(320.0, 240.0, 2.0, kK) - Vec3(0, 0, 2)).norm() < 1e-12);
  CHECK((backproject(820.0, 240.0, 1.0, kK) - Vec3(1, 0, 1)).norm() < 1e-12);
  CHECK((backproject(2.0, 3.0, 2.0, CameraIntrinsics{1, 1, 0, 0}) - Vec3(4, 6, 2)).norm() < 1e-12);
}

TEST_CASE("backproject from a depth image checks bounds and depth") {
  DepthImage img(4, 3, 0.0);
  img.at(1, 2) = 2.0;
  const CameraIntrinsics K{1, 1, 0, 0};
  CHECK((backproject(1, 2, img, K) - Vec3(2, 4, 2)).norm() < 1e-12);
  try {
    backproject(4, 0, img, K);
    FAIL("expected OutOfBounds");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kOutOfBounds);
  }
  try {
    backproject(0, 0, img, K);
    FAIL("expected InvalidDepth");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kInvalidDepth);
  }
}

TEST_CASE("project examples") {
  auto a = project(Vec3(0, 0, 2), kK);
  CHECK(a.u == doctest::Approx(320));
  CHECK(a.v == doctest::Approx(240));
  CHECK(a.depth == doctest::Approx(2.0));
  auto b = project(Vec3(1, 0, 1), kK);
  CHECK(b.u == doctest::Approx(820));
  CHECK(b.v == doctest::Approx(240));
  try {
    project(Vec3(0, 0, -1), kK);
    FAIL("expected BehindCamera");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kBehindCamera);
  }
}

TEST_CASE("project then backproject is the identity") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> xy(-3, 3), z(0.05, 10);
  for (int i = 0; i < 2000; ++i) {
    const Vec3 p(xy(rng), xy(rng), z(rng));
    const auto pd = project(p, kK);
    CHECK((backproject(pd.u, pd.v, pd.depth, kK) - p).norm() < 1e-9);
  }
}

TEST_CASE("camera look_at points the optical axis at the target") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Vec3 pos = oracle::uniform_vec(rng, -2, 2), target = oracle::uniform_vec(rng, -2, 2);
    const auto pose = CameraPose::look_at(pos, target);
    CHECK((pose.optical_axis() - (target - pos).normalized()).norm() < 1e-9);
    CHECK(std::abs(pose.orientation.norm() - 1.0) < 1e-9);
    const Vec3 c = pose.to_camera(target);
    CHECK(std::abs(c.x()) < 1e-9);
    CHECK(std::abs(c.y()) < 1e-9);
    CHECK((pose.to_world(c) - target).norm() < 1e-9);
  }
  // straight down keeps a valid frame
  const auto down = CameraPose::look_at(Vec3(0, 0, 1), Vec3::Zero());
  CHECK((down.optical_axis() - Vec3(0, 0, -1)).norm() < 1e-12);
}

TEST_CASE("fit_oriented_box on a unit cube") {
  std::vector<Vec3> pts = oracle::box_corners(OrientedBox::axis_aligned(Vec3::Zero(), Vec3::Constant(0.5)));
  const auto box = fit_oriented_box(pts);
  CHECK(box.center.norm() < 1e-12);
  CHECK((box.half_extents - Vec3::Constant(0.5)).norm() < 1e-9);
  CHECK(std::abs(box.rotation.determinant() - 1.0) < 1e-9);
}

TEST_CASE("fit_oriented_box recovers a cube rotated about z") {
  const Mat3 rz = Eigen::AngleAxisd(std::numbers::pi / 6, Vec3::UnitZ()).toRotationMatrix();
  OrientedBox truth;
  truth.rotation = rz;
  truth.half_extents = Vec3::Constant(0.5);
  const auto pts = oracle::box_corners(truth);
  const auto box = fit_oriented_box(pts);
  CHECK((box.half_extents - Vec3::Constant(0.5)).norm() < 1e-9);
  CHECK(box.volume() == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& p : pts) CHECK(oracle::inside(box, p, 1e-9));
  for (int i = 0; i < 3; ++i) {
    bool matched = false;
    for (int j = 0; j < 3; ++j) matched = matched || same_axis(box.rotation.col(i), rz.col(j), 1e-9);
    CHECK(matched);
  }
}

TEST_CASE("fit_oriented_box rejects degenerate input") {
  std::vector<Vec3> two{Vec3::Zero(), Vec3::UnitX()};
  CHECK_THROWS_AS(fit_oriented_box(two), Error);
  std::vector<Vec3> line{Vec3::Zero(), Vec3::UnitX(), 2 * Vec3::UnitX(), 3 * Vec3::UnitX()};
  try {
    fit_oriented_box(line);
    FAIL("expected DegenerateInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kDegenerateInput);
  }
  const auto fallback = fit_oriented_box_or_aabb(line);
  CHECK(fallback.half_extents.minCoeff() >= kBoxEpsilon);
  for (const auto& p : line) CHECK(fallback.contains(p, 1e-12));
}

TEST_CASE("fit_oriented_box: sign and order conventions") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<Vec3> pts;
    const Mat3 r = oracle::random_rotation(rng);
    for (int i = 0; i < 30; ++i) {
      Vec3 l = oracle::uniform_vec(rng, -1, 1);
      l = l.cwiseProduct(Vec3(3, 1.5, 0.5));
      pts.push_back(r * l);
    }
    const auto box = fit_oriented_box(pts);
    CHECK((box.rotation.transpose() * box.rotation - Mat3::Identity()).norm() < 1e-9);
    CHECK(box.rotation.determinant() == doctest::Approx(1.0));
    for (int c = 0; c < 2; ++c) {
      Eigen::Index k;
      box.rotation.col(c).cwiseAbs().maxCoeff(&k);
      CHECK(box.rotation(k, c) > 0.0);
    }
  }
}

TEST_CASE("fit_oriented_box containment and rotation equivariance") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<Vec3> pts;
    const Vec3 scale = oracle::uniform_vec(rng, 0.1, 2.0);
    for (int i = 0; i < 40; ++i) pts.push_back(oracle::uniform_vec(rng, -1, 1).cwiseProduct(scale));
    const auto box = fit_oriented_box(pts);
    for (const auto& p : pts) CHECK(oracle::inside(box, p, 1e-9));

    const Mat3 R = oracle::random_rotation(rng);
    std::vector<Vec3> turned;
    for (const auto& p : pts) turned.push_back(R * p);
    const auto rbox = fit_oriented_box(turned);
    CHECK((rbox.half_extents - box.half_extents).norm() < 1e-9);
    CHECK((rbox.center - R * box.center).norm() < 1e-9);
    const Mat3 expect = R * box.rotation;
    for (int i = 0; i < 3; ++i) CHECK(same_axis(rbox.rotation.col(i), expect.col(i), 1e-9));
  }
}

TEST_CASE("ray_box_intersect examples") {
  const auto cube = OrientedBox::axis_aligned(Vec3::Zero(), Vec3::Constant(0.5));
  auto hit = ray_box_intersect(Vec3(0, 0, 5), UnitVec3(Vec3(0, 0, -1)), cube);
  REQUIRE(hit);
  CHECK(*hit == doctest::Approx(4.5));
  CHECK_FALSE(ray_box_intersect(Vec3(10, 10, 10), UnitVec3(Vec3(1, 0, 0)), cube));
  auto inside = ray_box_intersect(Vec3(0.1, 0, 0), UnitVec3(Vec3(1, 1, 0)), cube);
  REQUIRE(inside);
  CHECK(*inside == 0.0);
}

TEST_CASE("ray_box_intersect agrees with a marching oracle") {
  std::mt19937_64 rng(5);
  int hits = 0;
  for (int t = 0; t < 1000; ++t) {
    OrientedBox b;
    b.center = oracle::uniform_vec(rng, -0.3, 0.3);
    b.rotation = oracle::random_rotation(rng);
    b.half_extents = oracle::uniform_vec(rng, 0.05, 0.4);
    const Vec3 origin = oracle::uniform_vec(rng, -1.2, 1.2);
    // aim near the box half the time so hits are common
    Vec3 dir = (t % 2 == 0) ? Vec3(b.center + oracle::uniform_vec(rng, -0.3, 0.3) - origin)
                            : oracle::random_unit(rng);
    if (dir.norm() < 1e-9) continue;
    dir.normalize();
    const auto got = ray_box_intersect(origin, UnitVec3(dir), b);
    const auto want = oracle::march(origin, dir, b, 1e-4, 4.0);
    // skip grazing rays where a step can jump over a thin sliver
    if (got.has_value() != want.has_value()) {
      const auto coarse = oracle::march(origin, dir, b, 1e-5, 4.0);
      CHECK(got.has_value() == coarse.has_value());
      continue;
    }
    if (got) {
      ++hits;
      CHECK(std::abs(*got - *want) < 2e-4);
    }
  }
  CHECK(hits > 200);
}

TEST_CASE("tangent_basis examples and orthonormality") {
  const auto tb = tangent_basis(Vec3(1, 0, 0), Vec3::Zero());
  CHECK((tb.e_rad.vec() - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK(std::abs(std::abs(tb.e_az.y()) - 1.0) < 1e-12);
  CHECK((tb.e_up.vec() - Vec3(0, 0, 1)).norm() < 1e-12);
  try {
    tangent_basis(Vec3(0, 0, 1), Vec3::Zero());
    FAIL("expected PoleSingularity");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::kPoleSingularity);
  }
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> az(0, 2 * std::numbers::pi), el(0.01, std::numbers::pi / 2 - 0.01);
  for (int i = 0; i < 1000; ++i) {
    const double a = az(rng), e = el(rng);
    const Vec3 s = oracle::uniform_vec(rng, -1, 1);
    const Vec3 x = s + 0.7 * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
    const auto b = tangent_basis(x, s);
    CHECK(std::abs(b.e_rad.dot(b.e_up)) < 1e-9);
    CHECK(std::abs(b.e_rad.dot(b.e_az)) < 1e-9);
    CHECK(std::abs(b.e_up.dot(b.e_az)) < 1e-9);
    CHECK(b.e_up.z() > 0.0);
    CHECK(std::abs(b.e_az.z()) < 1e-12);
    CHECK(elevation(x, s) == doctest::Approx(e).epsilon(1e-9));
  }
}

TEST_CASE("UnitVec3 normalises and rejects zero") {
  CHECK(UnitVec3(Vec3(3, 0, 4)).vec().norm() == doctest::Approx(1.0));
  CHECK_THROWS_AS(UnitVec3(Vec3::Zero()), Error);
}
