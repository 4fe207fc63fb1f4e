#include "visform/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "visform/error.hpp"
#include "visform/rng.hpp"

namespace visform::scene {

namespace {

Vec3 random_unit(CounterRng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace

TwoViewScene make_two_view_scene(const TwoViewParams& p, std::uint64_t seed) {
  if (p.points < 5) fail(ErrorCode::invalid_argument, "scene needs at least 5 points");
  if (!(p.outlier_fraction >= 0.0 && p.outlier_fraction < 1.0))
    fail(ErrorCode::invalid_argument, "outlier fraction must be in [0, 1)");
  const auto& k = p.intrinsics;
  CounterRng rng(derive_seed(seed, {tag("two-view")}));

  TwoViewScene s;
  const double angle = rng.uniform(0.0, p.max_rotation);
  s.rotation = geometry::quat_to_rotation(geometry::UnitQuaternion::from_axis_angle(random_unit(rng), angle));
  s.translation = p.baseline * random_unit(rng);

  geometry::CameraPose first;  // identity
  // X2 = R X1 + t  <=>  second camera center c2 = -R^T t, orientation R.
  geometry::CameraPose second{-(s.rotation.transpose() * s.translation), s.rotation};

  std::vector<Vec2> px1, px2;
  std::size_t attempts = 0;
  while (s.landmarks.size() < p.points) {
    if (++attempts > 1000 * p.points) fail(ErrorCode::degenerate, "could not place landmarks visible in both views");
    const Vec2 pix(rng.uniform(0.0, k.width), rng.uniform(0.0, k.height));
    const double depth = rng.uniform(p.min_depth, p.max_depth);
    const Vec3 x1 = geometry::backproject(pix, k) * depth;
    const auto in2 = geometry::project(k, second, x1);
    if (!in2) continue;
    const auto in1 = geometry::project(k, first, x1);
    if (!in1) continue;
    Vec2 n1 = *in1, n2 = *in2;
    if (p.pixel_sigma > 0.0) {
      n1 += Vec2(rng.normal(), rng.normal()) * p.pixel_sigma;
      n2 += Vec2(rng.normal(), rng.normal()) * p.pixel_sigma;
    }
    s.landmarks.push_back(x1);
    px1.push_back(n1);
    px2.push_back(n2);
  }

  const auto outliers = static_cast<std::size_t>(std::floor(p.outlier_fraction * static_cast<double>(p.points) + 0.5));
  s.outlier.assign(p.points, false);
  // Mismatches: a cyclic shift of second-view bearings over a random subset.
  std::vector<std::size_t> idx(p.points);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = p.points - 1; i > 0; --i) std::swap(idx[i], idx[rng.index(i + 1)]);
  if (outliers >= 2) {
    std::vector<Vec2> shifted(outliers);
    for (std::size_t k2 = 0; k2 < outliers; ++k2) shifted[k2] = px2[idx[(k2 + 1) % outliers]];
    for (std::size_t k2 = 0; k2 < outliers; ++k2) {
      px2[idx[k2]] = shifted[k2];
      s.outlier[idx[k2]] = true;
    }
  }

  s.correspondences.reserve(p.points);
  for (std::size_t i = 0; i < p.points; ++i)
    s.correspondences.push_back(
        pose::Correspondence::make(geometry::backproject(px1[i], k), geometry::backproject(px2[i], k)));
  return s;
}

}  // namespace visform::scene
