#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace visform {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

namespace geometry {

class Rotation3;

/// Hamilton unit quaternion (w, x, y, z). Always normalized and
/// canonicalized to w >= 0, so q and -q compare equal.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;

  /// Normalizes the input. Throws invalid_argument for a zero or non-finite
  /// quaternion.
  static UnitQuaternion from_components(double w, double x, double y, double z);
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  /// Rotation vector (axis * angle) exponential map.
  static UnitQuaternion exp(const Vec3& rotation_vector);
  static UnitQuaternion identity() { return {}; }

  double w() const noexcept { return c_[0]; }
  double x() const noexcept { return c_[1]; }
  double y() const noexcept { return c_[2]; }
  double z() const noexcept { return c_[3]; }
  const std::array<double, 4>& components() const noexcept { return c_; }

  UnitQuaternion inverse() const noexcept;
  /// Hamilton product; quat_to_rotation(a * b) == R(a) * R(b).
  UnitQuaternion operator*(const UnitQuaternion& rhs) const noexcept;

  /// Rotation angle in [0, pi].
  double angle() const noexcept;

  /// Lexicographic order on (w, x, y, z) of the canonical representative.
  friend bool operator<(const UnitQuaternion& a, const UnitQuaternion& b) noexcept {
    return a.c_ < b.c_;
  }
  friend bool operator==(const UnitQuaternion& a, const UnitQuaternion& b) noexcept = default;

 private:
  void canonicalize() noexcept;
  std::array<double, 4> c_{1.0, 0.0, 0.0, 0.0};
};

/// Proper rotation matrix (R^T R = I, det R = 1).
class Rotation3 {
 public:
  Rotation3() : m_(Mat3::Identity()) {}

  /// Validates orthonormality and determinant within 1e-9.
  static Rotation3 from_matrix(const Mat3& m);
  /// Nearest rotation (SVD projection); for matrices that drifted numerically.
  static Rotation3 nearest(const Mat3& m);
  static Rotation3 identity() { return {}; }
  static Rotation3 about_z(double angle);

  const Mat3& matrix() const noexcept { return m_; }
  Rotation3 transpose() const { return Rotation3(m_.transpose(), Trusted{}); }
  Rotation3 operator*(const Rotation3& rhs) const { return Rotation3(m_ * rhs.m_, Trusted{}); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Angle of this rotation in [0, pi].
  double angle() const noexcept;

 private:
  struct Trusted {};
  Rotation3(const Mat3& m, Trusted) : m_(m) {}
  friend Rotation3 quat_to_rotation(const UnitQuaternion& q);

  Mat3 m_;
};

Rotation3 quat_to_rotation(const UnitQuaternion& q);
/// Shepperd's method; result canonicalized to w >= 0.
UnitQuaternion rotation_to_quat(const Rotation3& r);

/// Angle of a^T b, i.e. the geodesic distance on SO(3).
double rotation_angle_between(const Rotation3& a, const Rotation3& b);
/// Angle between two nonzero 3-vectors, in [0, pi].
double angle_between(const Vec3& a, const Vec3& b);

struct CameraIntrinsics {
  double focal = 250.0;
  double cx = 160.0;
  double cy = 120.0;
  int width = 320;
  int height = 240;

  /// Throws invalid_argument unless focal > 0 and the principal point lies
  /// inside the image rectangle.
  static CameraIntrinsics make(double focal, double cx, double cy, int width, int height);
  void validate() const;
};

/// Camera placement: world position and world->camera orientation.
struct CameraPose {
  Vec3 position = Vec3::Zero();
  Rotation3 orientation;
};

/// Pixel of a world landmark, or nullopt if it has non-positive depth or
/// falls outside [0, width) x [0, height).
std::optional<Vec2> project(const CameraIntrinsics& intrinsics, const CameraPose& pose, const Vec3& landmark);

/// Homogeneous bearing (x, y, 1) of a pixel.
Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& intrinsics);

Vec2 rotate_planar(const Vec2& v, double angle);

/// Body->camera rotation for a camera looking straight down (image up is
/// body forward).
Rotation3 downward_mounting();
/// Body->camera rotation for a camera looking along body forward.
Rotation3 forward_mounting();

/// Planar positions of n >= 2 agents, stacked (x0, y0, x1, y1, ...).
class Configuration {
 public:
  static Configuration from_stacked(const Eigen::VectorXd& stacked);
  static Configuration from_points(std::span<const Vec2> points);

  std::size_t size() const noexcept { return static_cast<std::size_t>(q_.size() / 2); }
  const Eigen::VectorXd& stacked() const noexcept { return q_; }
  Vec2 point(std::size_t i) const { return q_.segment<2>(2 * static_cast<Eigen::Index>(i)); }
  std::vector<Vec2> points() const;

  /// Largest pairwise distance.
  double diameter() const;

 private:
  explicit Configuration(Eigen::VectorXd q) : q_(std::move(q)) {}
  Eigen::VectorXd q_;
};

/// Distance from q to the orbit of spec under planar translation, rotation
/// and positive scaling. q is aligned onto spec and the residual is divided
/// by the norm of the centered spec, so the value lies in [0, 1] and is
/// invariant to similarity transforms of q. Reflections are not allowed.
double formation_error(const Configuration& q, const Configuration& spec);

}  // namespace geometry
}  // namespace visform
