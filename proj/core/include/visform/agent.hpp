#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "visform/geometry.hpp"
#include "visform/percept.hpp"
#include "visform/pose.hpp"

namespace visform::agent {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

struct AgentState {
  std::size_t id = 0;
  Vec3 position = Vec3::Zero();  // world, z is the altitude
  double yaw = 0.0;
  geometry::Rotation3 mounting = geometry::downward_mounting();  // body -> camera

  static AgentState make(std::size_t id, const Vec3& position, double yaw, const geometry::Rotation3& mounting);

  double altitude() const noexcept { return position.z(); }
  Vec2 planar() const { return position.head<2>(); }
  /// mounting * Rz(yaw)^T
  geometry::Rotation3 world_to_camera() const;
  geometry::CameraPose camera_pose() const { return {position, world_to_camera()}; }
};

/// Ground-truth planar offset of `other` in the body frame of `self`.
Vec2 body_offset(const AgentState& self, const AgentState& other);

struct NeighborEstimate {
  std::size_t neighbor = 0;
  Vec2 offset = Vec2::Zero();  // q_j^i, meters, body frame
  double distance = 0.0;
  int freshness = 0;  // steps since the last successful estimate
  bool scale_observed = true;
  std::optional<pose::PoseHypothesis> pose;  // latest relative pose (vision only)
};

NeighborEstimate oracle_estimate(const AgentState& self, const AgentState& other);

struct AvoidanceParams {
  static constexpr double max_rotation = std::numbers::pi / 2.0;

  double safety_radius = 2.0;
  double horizon = 2.0;
  double grid_step = std::numbers::pi / 180.0;

  /// r_s > 0, tau > 0, step in (0, 5 deg].
  void validate() const;
};

struct ControlCommand {
  Vec2 velocity = Vec2::Zero();  // body frame, m/s
  double rotation = 0.0;
  bool stopped = false;
};

/// Rotate-or-stop: keeps u if the segment of length min(|u|, v_max) * tau
/// along it stays at least r_s from every neighbor offset, otherwise scans
/// 0, +d, -d, +2d, ... up to +-90 deg for the first clearing rotation, and
/// stops if there is none. Neighbors are assumed static over the horizon.
ControlCommand avoid_collision(const Vec2& u, std::span<const NeighborEstimate> neighbors,
                               const AvoidanceParams& params, double v_max);

/// Single integrator: planar position += Rz(yaw) sat(u) dt, with sat
/// clipping the norm to v_max. Throws invalid_argument unless dt, v_max > 0.
AgentState step_dynamics(const AgentState& s, const ControlCommand& c, double dt, double v_max);

struct PerceptionParams {
  geometry::CameraIntrinsics intrinsics;
  double mismatch_rate = 0.0;
  pose::RansacParams ransac;
  int stale_limit = 10;
  /// Planar distance used when the scale is unobservable.
  double fallback_distance = 5.0;
};

struct Inbound {
  std::size_t sender = 0;
  std::span<const percept::FeaturePoint> features;
};

enum class EstimateStatus { fresh, stale, dropped };

struct EstimateOutcome {
  std::size_t neighbor = 0;
  EstimateStatus status = EstimateStatus::fresh;
  std::size_t matches = 0;
  std::size_t inliers = 0;
  std::string failure;  // empty on success
};

/// Vision estimate of every neighbor in the inbox or in `previous`:
/// match_features (neighbor as first view) -> ransac_pose -> recover_scale
/// -> relative_position. The neighbor camera is assumed to share this
/// agent's altitude and mounting. On failure the previous estimate is reused
/// with freshness + 1; estimates older than stale_limit are dropped.
std::vector<NeighborEstimate> estimate_neighbors(const AgentState& self, std::span<const Inbound> inbox,
                                                 std::span<const percept::FeaturePoint> own,
                                                 std::span<const NeighborEstimate> previous,
                                                 const PerceptionParams& params, std::uint64_t seed,
                                                 std::vector<EstimateOutcome>* outcomes = nullptr);

}  // namespace visform::agent
