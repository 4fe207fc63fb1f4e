#pragma once

// Shared kernels for the minimal solvers and the refinement.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "visform/pose.hpp"

namespace visform::pose::detail {

struct UnitBearings {
  Vec3 a;  // m / |m|
  Vec3 b;  // n / |n|
};

std::vector<UnitBearings> unit_bearings(std::span<const Correspondence> cs);

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

/// r = b^T (t x R a) and its row Jacobian with respect to (w, d) of retract.
inline double residual_and_jacobian(const Mat3& r, const Vec3& t, const Eigen::Matrix<double, 3, 2>& tangent,
                                    const UnitBearings& ub, Eigen::Matrix<double, 1, 5>* jac) {
  const Vec3 ra = r * ub.a;
  const Vec3 rab = ra.cross(ub.b);
  if (jac != nullptr) {
    // d/dw of b^T [t]x R (a + w x a) = -(b x t)^T R [a]x.
    jac->leftCols<3>() = -(ub.b.cross(t)).transpose() * r * skew(ub.a);
    jac->rightCols<2>() = rab.transpose() * tangent;
  }
  return rab.dot(t);
}

/// Angular residual r = b^T w / |w| with w = t x R a (sine of the angle
/// between b and the epipolar plane) and its row Jacobian, as above. Zero
/// with a zero Jacobian when w vanishes.
inline double angular_residual_and_jacobian(const Mat3& r, const Vec3& t, const Eigen::Matrix<double, 3, 2>& tangent,
                                            const UnitBearings& ub, Eigen::Matrix<double, 1, 5>* jac) {
  const Vec3 ra = r * ub.a;
  const Vec3 w = t.cross(ra);
  const double wn = w.norm();
  if (!(wn > 1e-300)) {
    if (jac != nullptr) jac->setZero();
    return 0.0;
  }
  const double res = ub.b.dot(w) / wn;
  if (jac != nullptr) {
    const Vec3 g = (ub.b - res * (w / wn)) / wn;
    jac->leftCols<3>() = -g.transpose() * skew(t) * r * skew(ub.a);
    jac->rightCols<2>() = -g.transpose() * skew(ra) * tangent;
  }
  return res;
}

/// Gauss-Newton polish of a root of the 5 x 5 minimal system. Returns false
/// if the residual did not reach `tolerance`.
bool polish_root(PoseHypothesis& h, std::span<const UnitBearings> ub, double tolerance, int iterations);

std::vector<PoseHypothesis> solve_algebraic(std::span<const UnitBearings> ub);
std::vector<PoseHypothesis> solve_multistart(std::span<const UnitBearings> ub, int starts, std::uint64_t seed);

/// Canonical sort plus removal of duplicates within 1e-6 (translation
/// compared up to sign).
void canonicalize_solutions(std::vector<PoseHypothesis>& hs);

}  // namespace visform::pose::detail
