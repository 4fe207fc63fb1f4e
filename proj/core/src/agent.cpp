#include "visform/agent.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "visform/error.hpp"
#include "visform/rng.hpp"

namespace visform::agent {

double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

AgentState AgentState::make(std::size_t id, const Vec3& position, double yaw, const geometry::Rotation3& mounting) {
  if (!position.allFinite() || !std::isfinite(yaw)) fail(ErrorCode::invalid_argument, "agent state must be finite");
  return {id, position, wrap_angle(yaw), mounting};
}

geometry::Rotation3 AgentState::world_to_camera() const {
  return mounting * geometry::Rotation3::about_z(yaw).transpose();
}

Vec2 body_offset(const AgentState& self, const AgentState& other) {
  return geometry::rotate_planar(other.planar() - self.planar(), -self.yaw);
}

NeighborEstimate oracle_estimate(const AgentState& self, const AgentState& other) {
  NeighborEstimate e;
  e.neighbor = other.id;
  e.offset = body_offset(self, other);
  e.distance = e.offset.norm();
  return e;
}

void AvoidanceParams::validate() const {
  if (!(safety_radius > 0.0)) fail(ErrorCode::invalid_argument, "safety radius must be positive");
  if (!(horizon > 0.0)) fail(ErrorCode::invalid_argument, "avoidance horizon must be positive");
  if (!(grid_step > 0.0 && grid_step <= 5.0 * std::numbers::pi / 180.0 + 1e-15))
    fail(ErrorCode::invalid_argument, "avoidance grid step must be in (0, 5 deg]");
}

namespace {

bool segment_clears(const Vec2& dir, double length, std::span<const NeighborEstimate> neighbors, double radius) {
  for (const auto& n : neighbors) {
    const double s = std::clamp(n.offset.dot(dir), 0.0, length);
    if ((n.offset - s * dir).norm() < radius) return false;
  }
  return true;
}

}  // namespace

ControlCommand avoid_collision(const Vec2& u, std::span<const NeighborEstimate> neighbors,
                               const AvoidanceParams& params, double v_max) {
  params.validate();
  if (!(v_max > 0.0)) fail(ErrorCode::invalid_argument, "v_max must be positive");
  ControlCommand c;
  const double speed = u.norm();
  if (speed == 0.0) return c;
  const double length = std::min(speed, v_max) * params.horizon;
  const Vec2 dir = u / speed;
  if (segment_clears(dir, length, neighbors, params.safety_radius)) {
    c.velocity = u;
    return c;
  }
  const int steps = static_cast<int>(std::floor(AvoidanceParams::max_rotation / params.grid_step + 1e-9));
  for (int k = 1; k <= steps; ++k) {
    for (const double sign : {1.0, -1.0}) {
      const double theta = sign * k * params.grid_step;
      const Vec2 d = geometry::rotate_planar(dir, theta);
      if (segment_clears(d, length, neighbors, params.safety_radius)) {
        c.velocity = geometry::rotate_planar(u, theta);
        c.rotation = theta;
        return c;
      }
    }
  }
  c.stopped = true;
  return c;
}

AgentState step_dynamics(const AgentState& s, const ControlCommand& c, double dt, double v_max) {
  if (!(dt > 0.0)) fail(ErrorCode::invalid_argument, "dt must be positive");
  if (!(v_max > 0.0)) fail(ErrorCode::invalid_argument, "v_max must be positive");
  if (c.stopped) return s;
  Vec2 u = c.velocity;
  const double speed = u.norm();
  if (speed > v_max) u *= v_max / speed;
  AgentState next = s;
  next.position.head<2>() += geometry::rotate_planar(u, s.yaw) * dt;
  return next;
}

namespace {

NeighborEstimate estimate_one(const AgentState& self, const Inbound& msg, std::span<const percept::FeaturePoint> own,
                              const PerceptionParams& params, std::uint64_t seed, EstimateOutcome& outcome) {
  const auto match = percept::match_features(msg.features, own, params.mismatch_rate,
                                             derive_seed(seed, {msg.sender, tag("match")}), params.intrinsics);
  outcome.matches = match.size();
  if (match.size() < 5) fail(ErrorCode::no_consensus, "fewer than 5 matched features");
  pose::RansacParams rp = params.ransac;
  rp.seed = derive_seed(seed, {msg.sender, tag("ransac")});
  const pose::RansacResult r = pose::ransac_pose(match.correspondences, rp);
  outcome.inliers = r.inlier_count();
  const auto inliers = r.inlier_set(match.correspondences);

  NeighborEstimate e;
  e.neighbor = msg.sender;
  e.pose = r.pose;
  try {
    const double scale = pose::recover_scale(r.pose, inliers, self.altitude(), self.world_to_camera());
    e.offset = pose::relative_position(r.pose, scale, self.mounting);
    e.distance = e.offset.norm();
  } catch (const Error& err) {
    if (err.code() != ErrorCode::unobservable) throw;
    const Vec2 dir = pose::relative_position(r.pose, 1.0, self.mounting);
    if (!(dir.norm() > 1e-9)) throw;
    e.offset = dir.normalized() * params.fallback_distance;
    e.distance = params.fallback_distance;
    e.scale_observed = false;
  }
  return e;
}

}  // namespace

std::vector<NeighborEstimate> estimate_neighbors(const AgentState& self, std::span<const Inbound> inbox,
                                                 std::span<const percept::FeaturePoint> own,
                                                 std::span<const NeighborEstimate> previous,
                                                 const PerceptionParams& params, std::uint64_t seed,
                                                 std::vector<EstimateOutcome>* outcomes) {
  std::map<std::size_t, const Inbound*> messages;
  for (const auto& m : inbox) messages[m.sender] = &m;
  std::map<std::size_t, const NeighborEstimate*> prior;
  for (const auto& p : previous) prior[p.neighbor] = &p;
  std::map<std::size_t, int> ids;
  for (const auto& [k, v] : messages) ids[k] = 0;
  for (const auto& [k, v] : prior) ids[k] = 0;

  std::vector<NeighborEstimate> out;
  for (const auto& [id, unused] : ids) {
    EstimateOutcome outcome;
    outcome.neighbor = id;
    std::optional<NeighborEstimate> fresh;
    if (const auto it = messages.find(id); it != messages.end()) {
      try {
        fresh = estimate_one(self, *it->second, own, params, seed, outcome);
      } catch (const Error& err) {
        outcome.failure = std::string(to_string(err.code()));
      }
    } else {
      outcome.failure = "no message";
    }
    if (fresh) {
      out.push_back(*fresh);
    } else if (const auto p = prior.find(id); p != prior.end() && p->second->freshness + 1 <= params.stale_limit) {
      NeighborEstimate stale = *p->second;
      ++stale.freshness;
      out.push_back(stale);
      outcome.status = EstimateStatus::stale;
    } else {
      outcome.status = EstimateStatus::dropped;
    }
    if (outcomes != nullptr) outcomes->push_back(outcome);
  }
  return out;
}

}  // namespace visform::agent
