#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "visform/geometry.hpp"

namespace visform::pose {

/// Matched homogeneous bearings (x, y, 1): m in the first view, n in the
/// second. A correct match satisfies u R m + t = v n.
struct Correspondence {
  Vec3 m = Vec3::UnitZ();
  Vec3 n = Vec3::UnitZ();

  /// Throws invalid_argument unless both third components are exactly 1 and
  /// all entries are finite.
  static Correspondence make(const Vec3& m, const Vec3& n);
  /// From normalized image coordinates (x, y) of each view.
  static Correspondence from_normalized(const Vec2& m, const Vec2& n);
};

/// Relative pose X2 = R X1 + t with the translation known up to a positive
/// scale, so t is stored with unit norm.
struct PoseHypothesis {
  geometry::UnitQuaternion rotation;
  Vec3 translation = Vec3::UnitX();
  double mean_residual = 0.0;

  /// Normalizes t; throws invalid_argument for a zero translation.
  static PoseHypothesis make(const geometry::UnitQuaternion& rotation, const Vec3& translation,
                             double mean_residual = 0.0);

  geometry::Rotation3 rotation_matrix() const { return geometry::quat_to_rotation(rotation); }
  PoseHypothesis negated() const;
  /// The other rotation sharing this essential matrix: R' = (2 t t^T - I) R.
  PoseHypothesis twisted() const;
};

struct DepthPair {
  double u = 0.0;
  double v = 0.0;
  double residual = 0.0;  // || u R m + t - v n ||

  bool cheiral() const noexcept { return u > 0.0 && v > 0.0; }
};

/// n^T (t x R m) with raw homogeneous bearings.
double raw_epipolar_residual(const PoseHypothesis& h, const Correspondence& c);
/// n^T (t x R m) / (|n| |t x R m|): sine of the angle between n and the
/// epipolar plane, zero when t x R m vanishes. This is the residual used for
/// RANSAC thresholds and refinement.
double epipolar_residual(const PoseHypothesis& h, const Correspondence& c);

enum class MinimalBackend {
  /// Essential-matrix action-matrix eigen solver (exact algebraic).
  algebraic,
  /// Multi-start Newton over unit quaternion x unit translation with t
  /// initialized from the null direction of (R m_i x n_i).
  multistart,
};

struct MinimalOptions {
  MinimalBackend backend = MinimalBackend::algebraic;
  int starts = 64;  // multistart only
  std::uint64_t seed = 0;
};

/// All poses consistent with exactly 5 correspondences (at most 20), with
/// unit translation and canonical quaternion sign, sorted canonically.
/// Throws degenerate for zero baseline / pure rotation data or rank-deficient
/// bearing sets; invalid_argument unless exactly 5 are given.
std::vector<PoseHypothesis> solve_minimal(std::span<const Correspondence> cs, const MinimalOptions& options = {});

/// Least-squares solve of [R m, -n] (u, v)^T = -t. Throws no_parallax when the
/// two columns are parallel within 1e-12.
DepthPair triangulate_depths(const PoseHypothesis& h, const Correspondence& c);

/// Among the hypotheses and their t -> -t variants, the one with the most
/// cheiral correspondences; ties go to smaller mean |residual|, then
/// canonical quaternion order. Throws invalid_argument for an empty set and
/// ambiguous when the top two distinct candidates cannot be separated.
PoseHypothesis select_cheiral(std::span<const PoseHypothesis> hypotheses, std::span<const Correspondence> cs);

/// Sum of squared epipolar residuals and its gradient with respect to the
/// local parametrization (rotation increment w applied as R Exp(w), then a
/// step d in the tangent basis of t, renormalized).
struct RefinementCost {
  double value = 0.0;
  Eigen::Matrix<double, 5, 1> gradient = Eigen::Matrix<double, 5, 1>::Zero();
};
RefinementCost refinement_cost(const PoseHypothesis& h, std::span<const Correspondence> cs);
/// Moves h by a local step (w, d) as described for RefinementCost.
PoseHypothesis retract(const PoseHypothesis& h, const Eigen::Matrix<double, 5, 1>& step);
/// Tangent basis of the translation sphere at t used by retract.
Eigen::Matrix<double, 3, 2> translation_tangent_basis(const Vec3& t);

/// Levenberg-Marquardt on quaternion x unit translation, quaternion
/// renormalized each step.
PoseHypothesis refine_pose(const PoseHypothesis& h, std::span<const Correspondence> cs, int max_iterations = 50);

struct RansacParams {
  double threshold = 1e-4;    // on |epipolar_residual|
  double confidence = 0.999;
  int max_iterations = 1000;
  std::uint64_t seed = 0;
  MinimalBackend backend = MinimalBackend::algebraic;
  bool refine = true;

  /// Default threshold for pixel-noise data: 2 px in normalized units.
  static double pixel_threshold(double focal) { return 2.0 / focal; }
};

struct RansacResult {
  PoseHypothesis pose;
  std::vector<bool> inliers;
  int iterations = 0;
  double threshold = 0.0;

  std::size_t inlier_count() const;
  std::vector<Correspondence> inlier_set(std::span<const Correspondence> cs) const;
};

/// Adaptive RANSAC over 5-point samples. Samples come from a counter-based
/// generator keyed by (seed, iteration) over a canonical ordering of the
/// input, so the result does not depend on input order. Throws
/// invalid_argument for fewer than 5 correspondences and no_consensus if no
/// hypothesis gathers 5 inliers.
RansacResult ransac_pose(std::span<const Correspondence> cs, const RansacParams& params = {});

/// Meters per unit baseline: altitude over the median vertical drop of the
/// cheiral inliers triangulated in the first camera. camera_orientation is
/// that camera's world->camera rotation. Throws invalid_argument for a
/// non-positive altitude and unobservable when the median drop is <= 1e-9.
double recover_scale(const PoseHypothesis& h, std::span<const Correspondence> inliers, double altitude,
                     const geometry::Rotation3& camera_orientation);

/// Metric neighbor offset in the planar body frame of the second camera's
/// vehicle: scale * t mapped through the body->camera mounting, then
/// projected onto the horizontal plane. Throws invalid_argument unless
/// scale > 0.
Vec2 relative_position(const PoseHypothesis& h, double scale, const geometry::Rotation3& mounting);

/// Rotation angle and translation direction errors (radians) against a
/// reference pose.
struct PoseError {
  double rotation = 0.0;
  double direction = 0.0;
};
PoseError pose_error(const PoseHypothesis& estimate, const geometry::Rotation3& rotation, const Vec3& translation);

}  // namespace visform::pose
