#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "visform/error.hpp"
#include "visform/geometry.hpp"
#include "visform/rng.hpp"

using namespace visform;
using namespace visform::geometry;

namespace {

constexpr double kPi = std::numbers::pi;

UnitQuaternion random_quat(CounterRng& r) {
  return UnitQuaternion::from_components(r.normal(), r.normal(), r.normal(), r.normal());
}

double max_abs(const Mat3& m) { return m.cwiseAbs().maxCoeff(); }

// Residual of aligning q onto p with rotation theta and scale s (translation
// solved by centroids).
double aligned_residual(const std::vector<Vec2>& q, const std::vector<Vec2>& p, double theta, double s) {
  Vec2 cq = Vec2::Zero(), cp = Vec2::Zero();
  for (std::size_t i = 0; i < q.size(); ++i) {
    cq += q[i];
    cp += p[i];
  }
  cq /= static_cast<double>(q.size());
  cp /= static_cast<double>(p.size());
  double r2 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    r2 += (s * rotate_planar(q[i] - cq, theta) - (p[i] - cp)).squaredNorm();
    n2 += (p[i] - cp).squaredNorm();
  }
  return std::sqrt(r2 / n2);
}

// Coarse-to-fine grid search over (theta, s).
double grid_formation_error(const std::vector<Vec2>& q, const std::vector<Vec2>& p) {
  double best = std::numeric_limits<double>::infinity(), bt = 0.0, bs = 0.0;
  for (int i = 0; i < 720; ++i)
    for (int j = 0; j <= 400; ++j) {
      const double t = 2.0 * kPi * i / 720.0, s = 4.0 * j / 400.0;
      const double v = aligned_residual(q, p, t, s);
      if (v < best) best = v, bt = t, bs = s;
    }
  double dt = 2.0 * kPi / 720.0, ds = 0.01;
  for (int level = 0; level < 8; ++level) {
    const double ct = bt, cs = bs;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j) {
        const double t = ct + dt * i / 10.0, s = std::max(0.0, cs + ds * j / 10.0);
        const double v = aligned_residual(q, p, t, s);
        if (v < best) best = v, bt = t, bs = s;
      }
    dt /= 5.0;
    ds /= 5.0;
  }
  return best;
}

Configuration triangle() {
  const std::vector<Vec2> p{{0.0, 0.0}, {10.0, 0.0}, {5.0, 8.660254037844386}};
  return Configuration::from_points(p);
}

}  // namespace

TEST(Quaternion, IdentityMapsToIdentity) {
  EXPECT_LT(max_abs(quat_to_rotation(UnitQuaternion::identity()).matrix() - Mat3::Identity()), 1e-15);
}

TEST(Quaternion, QuarterTurnAboutZ) {
  const auto q = UnitQuaternion::from_components(std::cos(kPi / 4), 0, 0, std::sin(kPi / 4));
  const Vec3 v = quat_to_rotation(q) * Vec3::UnitX();
  EXPECT_NEAR(v.x(), 0.0, 1e-15);
  EXPECT_NEAR(v.y(), 1.0, 1e-15);
  EXPECT_NEAR(v.z(), 0.0, 1e-15);
}

TEST(Quaternion, NormalizedAndCanonical) {
  CounterRng r(1);
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_quat(r);
    const auto& c = q.components();
    EXPECT_NEAR(c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3], 1.0, 1e-12);
    EXPECT_GE(q.w(), 0.0);
  }
  EXPECT_EQ(UnitQuaternion::from_components(-1, 0, 0, 0), UnitQuaternion::identity());
  EXPECT_EQ(UnitQuaternion::from_components(0.5, 0.5, -0.5, 0.5), UnitQuaternion::from_components(-0.5, -0.5, 0.5, -0.5));
  EXPECT_THROW(UnitQuaternion::from_components(0, 0, 0, 0), Error);
  EXPECT_THROW(UnitQuaternion::from_components(NAN, 0, 0, 1), Error);
}

TEST(Quaternion, InverseAndHomomorphism) {
  CounterRng r(2);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_quat(r), b = random_quat(r);
    EXPECT_LT(max_abs((quat_to_rotation(a) * quat_to_rotation(a.inverse())).matrix() - Mat3::Identity()), 1e-12);
    EXPECT_LT(max_abs(quat_to_rotation(a * b).matrix() - (quat_to_rotation(a) * quat_to_rotation(b)).matrix()), 1e-12);
  }
}

TEST(Quaternion, RotationRoundTrip) {
  CounterRng r(3);
  for (int i = 0; i < 1000; ++i) {
    const auto q = random_quat(r);
    const Rotation3 m = quat_to_rotation(q);
    const Mat3& a = m.matrix();
    EXPECT_LT(max_abs(a.transpose() * a - Mat3::Identity()), 1e-9);
    EXPECT_NEAR(a.determinant(), 1.0, 1e-9);
    EXPECT_LT(max_abs(quat_to_rotation(rotation_to_quat(m)).matrix() - a), 1e-9);
  }
  // Near-pi rotations exercise the other Shepperd branches.
  for (const Vec3 axis : std::vector<Vec3>{Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ(), Vec3(1, 1, 1).normalized()}) {
    const auto m = quat_to_rotation(UnitQuaternion::from_axis_angle(axis, kPi - 1e-9));
    EXPECT_LT(max_abs(quat_to_rotation(rotation_to_quat(m)).matrix() - m.matrix()), 1e-9);
  }
}

TEST(Quaternion, AxisAngleAndExp) {
  const Vec3 axis = Vec3(1, -2, 0.5).normalized();
  const auto q = UnitQuaternion::from_axis_angle(axis, 0.7);
  EXPECT_NEAR(q.angle(), 0.7, 1e-14);
  EXPECT_EQ(UnitQuaternion::exp(axis * 0.7), q);
  EXPECT_NEAR(quat_to_rotation(q).angle(), 0.7, 1e-12);
  EXPECT_NEAR(rotation_angle_between(Rotation3::about_z(0.2), Rotation3::about_z(-0.3)), 0.5, 1e-14);
}

TEST(Rotation3, RejectsNonRotations) {
  EXPECT_THROW(Rotation3::from_matrix(2.0 * Mat3::Identity()), Error);
  Mat3 flip = Mat3::Identity();
  flip(2, 2) = -1.0;
  EXPECT_THROW(Rotation3::from_matrix(flip), Error);
  Mat3 drift = Rotation3::about_z(0.3).matrix();
  drift(0, 1) += 1e-6;
  const Mat3 fixed = Rotation3::nearest(drift).matrix();
  EXPECT_LT(max_abs(fixed.transpose() * fixed - Mat3::Identity()), 1e-12);
}

TEST(Project, OnAxisIsPrincipalPoint) {
  const CameraIntrinsics k;
  const auto px = project(k, CameraPose{}, Vec3(0, 0, 5));
  ASSERT_TRUE(px.has_value());
  EXPECT_EQ(px->x(), 160.0);
  EXPECT_EQ(px->y(), 120.0);
}

TEST(Project, BehindCameraOrOutsideIsNotVisible) {
  const CameraIntrinsics k;
  EXPECT_FALSE(project(k, CameraPose{}, Vec3(0, 0, -5)).has_value());
  EXPECT_FALSE(project(k, CameraPose{}, Vec3(0, 0, 0)).has_value());
  EXPECT_FALSE(project(k, CameraPose{}, Vec3(100, 0, 5)).has_value());
}

TEST(Project, HandPinholeExample) {
  const auto k = CameraIntrinsics::make(250, 160, 120, 320, 240);
  const auto px = project(k, CameraPose{}, Vec3(1, 0, 5));
  ASSERT_TRUE(px.has_value());
  EXPECT_DOUBLE_EQ(px->x(), 210.0);
  EXPECT_DOUBLE_EQ(px->y(), 120.0);
  const Vec3 b = backproject(Vec2(210, 120), k);
  EXPECT_DOUBLE_EQ(b.x(), 0.2);
  EXPECT_EQ(b.y(), 0.0);
  EXPECT_EQ(b.z(), 1.0);
  EXPECT_EQ(backproject(Vec2(160, 120), k), Vec3(0, 0, 1));
}

TEST(Project, BackprojectRoundTrip) {
  const CameraIntrinsics k;
  CounterRng r(4);
  CameraPose pose;
  pose.position = Vec3(1, 2, 3);
  pose.orientation = quat_to_rotation(UnitQuaternion::from_axis_angle(Vec3(0.3, 1, 0).normalized(), 0.4));
  int visible = 0;
  while (visible < 1000) {
    const Vec3 p = pose.position + pose.orientation.transpose() * Vec3(r.uniform(-3, 3), r.uniform(-2, 2), r.uniform(2, 9));
    const auto px = project(k, pose, p);
    if (!px) continue;
    ++visible;
    const Vec3 b = backproject(*px, k);
    EXPECT_EQ(b.z(), 1.0);
    const Vec3 cam = pose.orientation * (p - pose.position);
    EXPECT_LT(angle_between(b, cam), 1e-12);
    // Reprojection at an arbitrary positive depth.
    const double depth = r.uniform(0.5, 50.0);
    const auto again = project(k, pose, pose.position + pose.orientation.transpose() * (depth * b));
    ASSERT_TRUE(again.has_value());
    EXPECT_LT((*again - *px).norm(), 1e-9);
  }
}

TEST(Intrinsics, Validation) {
  EXPECT_THROW(CameraIntrinsics::make(0, 160, 120, 320, 240), Error);
  EXPECT_THROW(CameraIntrinsics::make(250, 400, 120, 320, 240), Error);
  EXPECT_NO_THROW(CameraIntrinsics::make(250, 0, 0, 320, 240));
}

TEST(RotatePlanar, Examples) {
  const Vec2 a = rotate_planar(Vec2(1, 0), kPi / 2);
  EXPECT_NEAR(a.x(), 0.0, 1e-15);
  EXPECT_NEAR(a.y(), 1.0, 1e-15);
  const Vec2 b = rotate_planar(Vec2(1, 0), -kPi / 2);
  EXPECT_NEAR(b.x(), 0.0, 1e-15);
  EXPECT_NEAR(b.y(), -1.0, 1e-15);
  EXPECT_EQ(rotate_planar(Vec2(3, -4), 0.0), Vec2(3, -4));
  CounterRng r(5);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 v(r.normal(), r.normal());
    EXPECT_NEAR(rotate_planar(v, r.uniform(-10, 10)).norm(), v.norm(), 1e-12);
  }
}

TEST(Mounting, DeclaredMatrices) {
  // Downward camera: optical axis is world down, image up is body forward.
  const Rotation3 d = downward_mounting();
  EXPECT_EQ(d * Vec3(0, 0, -1), Vec3(0, 0, 1));
  EXPECT_EQ(d * Vec3(1, 0, 0), Vec3(0, -1, 0));
  const Rotation3 f = forward_mounting();
  EXPECT_EQ(f * Vec3(1, 0, 0), Vec3(0, 0, 1));
  EXPECT_EQ(f * Vec3(0, 0, 1), Vec3(0, -1, 0));
}

TEST(Configuration, Validation) {
  EXPECT_THROW(Configuration::from_stacked(Eigen::VectorXd::Zero(2)), Error);
  EXPECT_THROW(Configuration::from_stacked(Eigen::VectorXd::Zero(5)), Error);
  const auto c = triangle();
  EXPECT_EQ(c.size(), 3u);
  EXPECT_NEAR(c.diameter(), 10.0, 1e-12);
}

TEST(FormationError, ZeroOnSpec) {
  const auto p = triangle();
  EXPECT_LT(formation_error(p, p), 1e-12);
}

TEST(FormationError, SimilarityInvariance) {
  const auto p = triangle();
  std::vector<Vec2> q;
  for (const auto& v : p.points()) q.push_back(2.0 * rotate_planar(v, kPi / 6) + Vec2(-3.0, 7.5));
  EXPECT_LT(formation_error(Configuration::from_points(q), p), 1e-10);

  CounterRng r(6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> a;
    for (int i = 0; i < 5; ++i) a.emplace_back(r.normal(), r.normal());
    std::vector<Vec2> spec;
    for (int i = 0; i < 5; ++i) spec.emplace_back(r.normal(), r.normal());
    const auto sp = Configuration::from_points(spec);
    const double e0 = formation_error(Configuration::from_points(a), sp);
    const double th = r.uniform(-kPi, kPi), s = r.uniform(0.1, 10.0);
    const Vec2 t(r.normal() * 100, r.normal() * 100);
    std::vector<Vec2> b;
    for (const auto& v : a) b.push_back(s * rotate_planar(v, th) + t);
    EXPECT_NEAR(formation_error(Configuration::from_points(b), sp), e0, 1e-10);
  }
}

TEST(FormationError, ReflectionIsNotSimilar) {
  const auto p = triangle();
  std::vector<Vec2> mirrored;
  for (const auto& v : p.points()) mirrored.emplace_back(v.x(), -v.y());
  EXPECT_GT(formation_error(Configuration::from_points(mirrored), p), 0.5);
}

TEST(FormationError, MatchesGridSearch) {
  CounterRng r(7);
  const auto spec = triangle();
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec2> q;
    for (const auto& v : spec.points()) q.push_back(1.3 * v + Vec2(r.normal(), r.normal()) * 2.0);
    const double closed = formation_error(Configuration::from_points(q), spec);
    EXPECT_NEAR(closed, grid_formation_error(q, spec.points()), 1e-4);
  }
}

TEST(FormationError, Errors) {
  const auto p = triangle();
  const std::vector<Vec2> four{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  EXPECT_THROW(formation_error(Configuration::from_points(four), p), Error);
  const std::vector<Vec2> coincident{{1, 1}, {1, 1}, {1, 1}};
  EXPECT_THROW(formation_error(p, Configuration::from_points(coincident)), Error);
}
