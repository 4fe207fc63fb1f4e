#include "visform/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>

#include "visform/error.hpp"

namespace visform::geometry {

UnitQuaternion UnitQuaternion::from_components(double w, double x, double y, double z) {
  const double norm = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(norm) || norm == 0.0) fail(ErrorCode::invalid_argument, "quaternion must be finite and nonzero");
  UnitQuaternion q;
  q.c_ = {w / norm, x / norm, y / norm, z / norm};
  q.canonicalize();
  return q;
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) fail(ErrorCode::invalid_argument, "rotation axis must be nonzero");
  const Vec3 a = axis / n * std::sin(angle / 2.0);
  return from_components(std::cos(angle / 2.0), a.x(), a.y(), a.z());
}

UnitQuaternion UnitQuaternion::exp(const Vec3& rotation_vector) {
  const double angle = rotation_vector.norm();
  if (angle < 1e-300) return identity();
  return from_axis_angle(rotation_vector, angle);
}

UnitQuaternion UnitQuaternion::inverse() const noexcept {
  UnitQuaternion q;
  q.c_ = {c_[0], -c_[1], -c_[2], -c_[3]};
  q.canonicalize();
  return q;
}

UnitQuaternion UnitQuaternion::operator*(const UnitQuaternion& r) const noexcept {
  const auto& a = c_;
  const auto& b = r.c_;
  const double w = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
  const double x = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
  const double y = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
  const double z = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  UnitQuaternion q;
  q.c_ = {w / n, x / n, y / n, z / n};
  q.canonicalize();
  return q;
}

double UnitQuaternion::angle() const noexcept {
  const double s = std::sqrt(c_[1] * c_[1] + c_[2] * c_[2] + c_[3] * c_[3]);
  return 2.0 * std::atan2(s, std::abs(c_[0]));
}

void UnitQuaternion::canonicalize() noexcept {
  // w == 0 is a measure-zero tie; break it on the first nonzero component.
  bool flip = c_[0] < 0.0;
  if (c_[0] == 0.0) {
    for (std::size_t k = 1; k < 4; ++k) {
      if (c_[k] != 0.0) {
        flip = c_[k] < 0.0;
        break;
      }
    }
  }
  if (flip) {
    for (double& v : c_) v = -v;
  }
  if (c_[0] == 0.0) c_[0] = 0.0;  // drop -0.0
}

Rotation3 Rotation3::from_matrix(const Mat3& m) {
  if (!m.allFinite()) fail(ErrorCode::invalid_argument, "rotation matrix must be finite");
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) fail(ErrorCode::invalid_argument, "matrix is not orthonormal");
  if (std::abs(m.determinant() - 1.0) > 1e-9) fail(ErrorCode::invalid_argument, "matrix determinant is not +1");
  return Rotation3(m, Trusted{});
}

Rotation3 Rotation3::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return Rotation3(svd.matrixU() * d * svd.matrixV().transpose(), Trusted{});
}

Rotation3 Rotation3::about_z(double angle) {
  Mat3 m;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  m << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return Rotation3(m, Trusted{});
}

double Rotation3::angle() const noexcept {
  // atan2 form stays accurate near 0 and pi, unlike acos((tr - 1) / 2).
  const Vec3 axis(m_(2, 1) - m_(1, 2), m_(0, 2) - m_(2, 0), m_(1, 0) - m_(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (m_.trace() - 1.0));
}

Rotation3 quat_to_rotation(const UnitQuaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return Rotation3(m, Rotation3::Trusted{});
}

UnitQuaternion rotation_to_quat(const Rotation3& r) {
  const Mat3& m = r.matrix();
  const double trace = m.trace();
  // Shepperd: pivot on the largest of (trace, m00, m11, m22).
  if (trace >= m(0, 0) && trace >= m(1, 1) && trace >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + trace);
    return UnitQuaternion::from_components(0.25 * s, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s,
                                           (m(1, 0) - m(0, 1)) / s);
  }
  if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    return UnitQuaternion::from_components((m(2, 1) - m(1, 2)) / s, 0.25 * s, (m(0, 1) + m(1, 0)) / s,
                                           (m(0, 2) + m(2, 0)) / s);
  }
  if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    return UnitQuaternion::from_components((m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, 0.25 * s,
                                           (m(1, 2) + m(2, 1)) / s);
  }
  const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
  return UnitQuaternion::from_components((m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s,
                                         (m(1, 2) + m(2, 1)) / s, 0.25 * s);
}

double rotation_angle_between(const Rotation3& a, const Rotation3& b) { return (a.transpose() * b).angle(); }

double angle_between(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

CameraIntrinsics CameraIntrinsics::make(double focal, double cx, double cy, int width, int height) {
  CameraIntrinsics k{focal, cx, cy, width, height};
  k.validate();
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(focal > 0.0) || !std::isfinite(focal)) fail(ErrorCode::invalid_argument, "focal length must be positive");
  if (width <= 0 || height <= 0) fail(ErrorCode::invalid_argument, "image size must be positive");
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
    fail(ErrorCode::invalid_argument, "principal point must lie inside the image");
}

std::optional<Vec2> project(const CameraIntrinsics& k, const CameraPose& pose, const Vec3& landmark) {
  const Vec3 p = pose.orientation * (landmark - pose.position);
  if (!(p.z() > 0.0)) return std::nullopt;
  const Vec2 px(k.cx + k.focal * p.x() / p.z(), k.cy + k.focal * p.y() / p.z());
  if (!(px.x() >= 0.0 && px.x() < k.width && px.y() >= 0.0 && px.y() < k.height)) return std::nullopt;
  return px;
}

Vec3 backproject(const Vec2& pixel, const CameraIntrinsics& k) {
  return Vec3((pixel.x() - k.cx) / k.focal, (pixel.y() - k.cy) / k.focal, 1.0);
}

Vec2 rotate_planar(const Vec2& v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// Body frame is x forward, y left, z up; camera frame is x right, y down,
// z along the optical axis. Rows are the camera axes in body coordinates.
Rotation3 downward_mounting() {
  Mat3 m;
  m << 0, -1, 0,
      -1, 0, 0,
       0, 0, -1;
  return Rotation3::from_matrix(m);
}

Rotation3 forward_mounting() {
  Mat3 m;
  m << 0, -1, 0,
       0, 0, -1,
       1, 0, 0;
  return Rotation3::from_matrix(m);
}

Configuration Configuration::from_stacked(const Eigen::VectorXd& stacked) {
  if (stacked.size() < 4 || stacked.size() % 2 != 0)
    fail(ErrorCode::invalid_argument, "configuration needs 2n entries with n >= 2, got " + std::to_string(stacked.size()));
  if (!stacked.allFinite()) fail(ErrorCode::invalid_argument, "configuration must be finite");
  return Configuration(stacked);
}

Configuration Configuration::from_points(std::span<const Vec2> points) {
  Eigen::VectorXd q(2 * static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) q.segment<2>(2 * static_cast<Eigen::Index>(i)) = points[i];
  return from_stacked(q);
}

std::vector<Vec2> Configuration::points() const {
  std::vector<Vec2> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) out.push_back(point(i));
  return out;
}

double Configuration::diameter() const {
  double d = 0.0;
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t j = i + 1; j < size(); ++j) d = std::max(d, (point(i) - point(j)).norm());
  return d;
}

namespace {

std::vector<std::complex<double>> centered(const Configuration& c) {
  std::vector<std::complex<double>> z(c.size());
  std::complex<double> mean = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    z[i] = {c.point(i).x(), c.point(i).y()};
    mean += z[i];
  }
  mean /= static_cast<double>(c.size());
  for (auto& v : z) v -= mean;
  return z;
}

}  // namespace

double formation_error(const Configuration& q, const Configuration& spec) {
  if (q.size() != spec.size())
    fail(ErrorCode::invalid_argument, "formation_error: agent count mismatch (" + std::to_string(q.size()) + " vs " +
                                          std::to_string(spec.size()) + ")");
  const auto zq = centered(q);
  const auto zp = centered(spec);
  double nq = 0.0, np = 0.0;
  std::complex<double> cross = 0.0;
  for (std::size_t i = 0; i < zq.size(); ++i) {
    nq += std::norm(zq[i]);
    np += std::norm(zp[i]);
    cross += std::conj(zq[i]) * zp[i];
  }
  if (!(np > 1e-24)) fail(ErrorCode::invalid_argument, "formation_error: desired configuration is degenerate");
  if (nq <= 1e-300) return 1.0;
  // Best complex gain a = <zq, zp> / |zq|^2 encodes rotation and positive
  // scale. The residual is summed explicitly; the closed form
  // 1 - |<zq, zp>|^2 / (|zq|^2 |zp|^2) cancels catastrophically near zero.
  const std::complex<double> a = cross / nq;
  double r2 = 0.0;
  for (std::size_t i = 0; i < zq.size(); ++i) r2 += std::norm(a * zq[i] - zp[i]);
  return std::sqrt(r2 / np);
}

}  // namespace visform::geometry
