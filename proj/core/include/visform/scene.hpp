#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "visform/geometry.hpp"
#include "visform/pose.hpp"

namespace visform::scene {

/// Random two-view scene for pose-estimation experiments. Landmarks are
/// drawn inside the first camera's frustum at the requested depths and kept
/// only if the second camera sees them too.
struct TwoViewParams {
  std::size_t points = 100;
  double min_depth = 4.0;
  double max_depth = 10.0;
  double baseline = 1.0;
  double max_rotation = 0.3;      // radians, random axis
  double pixel_sigma = 0.0;       // isotropic pixel noise in both views
  double outlier_fraction = 0.0;  // share of correspondences with swapped second bearings
  geometry::CameraIntrinsics intrinsics;
};

struct TwoViewScene {
  geometry::Rotation3 rotation;  // X2 = R X1 + t
  Vec3 translation;              // metric, |t| = baseline
  std::vector<Vec3> landmarks;   // first-camera frame
  std::vector<pose::Correspondence> correspondences;
  std::vector<bool> outlier;     // ground-truth mismatch flags
};

TwoViewScene make_two_view_scene(const TwoViewParams& params, std::uint64_t seed);

}  // namespace visform::scene
