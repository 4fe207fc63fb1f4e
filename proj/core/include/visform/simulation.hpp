#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "visform/agent.hpp"
#include "visform/config.hpp"
#include "visform/gains.hpp"

namespace visform::harness {

/// One agent at one step; state is the pre-step state, command the command
/// computed from it.
struct AgentRow {
  int step = 0;
  double time = 0.0;
  std::size_t agent = 0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Vec2 command = Vec2::Zero();
  double rotation = 0.0;
  bool stopped = false;
  double formation_error = 0.0;
  double min_distance = 0.0;

  friend bool operator==(const AgentRow&, const AgentRow&) = default;
};

/// Pose estimate of `neighbor` computed by `agent` (vision mode only).
/// Errors are -1 unless status is fresh.
struct PoseErrorRow {
  int step = 0;
  std::size_t agent = 0;
  std::size_t neighbor = 0;
  agent::EstimateStatus status = agent::EstimateStatus::fresh;
  std::size_t matches = 0;
  std::size_t inliers = 0;
  double rotation_error = 0.0;
  double direction_error = 0.0;
  double offset_error = 0.0;  // meters, planar

  friend bool operator==(const PoseErrorRow&, const PoseErrorRow&) = default;
};

struct TrajectoryLog {
  std::size_t agents = 0;
  std::vector<AgentRow> rows;  // agent-major within a step
  std::vector<PoseErrorRow> pose_rows;

  friend bool operator==(const TrajectoryLog&, const TrajectoryLog&) = default;
};

struct RunSummary {
  bool converged = false;
  int steps = 0;                // logged steps
  int steps_to_threshold = -1;  // first step below threshold, -1 if never
  double initial_error = 0.0;
  double final_error = 0.0;
  /// Aligned residual of the final configuration in desired-formation
  /// meters, divided by the desired formation diameter.
  double final_shape_error = 0.0;
  double min_distance = 0.0;
  double median_rotation_error = -1.0;  // -1 without vision estimates
  double median_direction_error = -1.0;
  std::uint64_t bytes_exchanged = 0;
  std::size_t stopped_commands = 0;

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

struct SimulationResult {
  TrajectoryLog log;
  RunSummary summary;
  std::vector<agent::AgentState> final_states;
};

/// Gains from the config's gains_file if set, designed otherwise.
gains::GainSet scenario_gains(const ScenarioConfig& config);

/// Synchronous rounds: capture, exchange, estimate and command, then a
/// simultaneous state update. Stops once the formation error drops to
/// error_threshold times its initial value (or below 1e-12), or after max_steps.
SimulationResult run_simulation(const ScenarioConfig& config, const std::optional<gains::GainSet>& gains = std::nullopt);

/// Aligned residual of q against the desired configuration over its diameter.
double shape_error(const geometry::Configuration& q, const geometry::Configuration& desired);

}  // namespace visform::harness
