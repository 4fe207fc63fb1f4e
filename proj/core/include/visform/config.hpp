#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "visform/agent.hpp"
#include "visform/gains.hpp"
#include "visform/geometry.hpp"
#include "visform/percept.hpp"

namespace visform::harness {

enum class PerceptionMode { vision, oracle };
enum class GraphKind { complete, grid8, grid4, edges };
enum class CameraKind { downward, forward };

std::string_view to_string(PerceptionMode m) noexcept;
std::string_view to_string(GraphKind g) noexcept;
std::string_view to_string(CameraKind c) noexcept;

struct AgentConfig {
  Vec3 initial = Vec3::Zero();
  double yaw = 0.0;
  CameraKind camera = CameraKind::downward;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::uint64_t seed = 1;

  // [formation]
  std::vector<Vec2> desired;
  GraphKind graph = GraphKind::complete;
  std::size_t grid_columns = 0;  // grid8 / grid4
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // edges
  std::filesystem::path gains_file;  // optional precomputed gains, resolved against the config directory

  std::vector<AgentConfig> agents;

  geometry::CameraIntrinsics camera;
  percept::WorldParams world;
  std::uint64_t world_seed = 7;

  // [noise]
  double pixel_sigma = 0.0;
  double descriptor_sigma = 0.02;
  double mismatch_rate = 0.0;

  // [control]
  double dt = 0.1;
  double v_max = 2.0;

  // [avoidance]
  bool avoidance_enabled = true;
  double safety_radius = 2.0;
  double horizon = 2.0;
  double grid_step_deg = 1.0;

  // [perception]
  PerceptionMode mode = PerceptionMode::oracle;
  int stale_limit = 10;
  double ransac_threshold_px = 2.0;
  double ransac_confidence = 0.999;
  int ransac_max_iterations = 1000;
  double fallback_distance = 5.0;

  // [termination]
  int max_steps = 5000;
  double error_threshold = 1e-3;  // relative to the initial formation error

  // [robustness]
  bool scaling_enabled = false;
  double scaling_min = 0.5;
  double scaling_max = 2.0;
  double control_rotation_deg = 0.0;

  agent::AvoidanceParams avoidance() const;
  gains::Adjacency adjacency() const;
  gains::FormationSpec spec() const;
  /// Throws config with a field path for the first violation.
  void validate() const;
};

ScenarioConfig parse_config(std::string_view text, std::string_view source = "<string>");
/// Reads and validates; relative gains_file paths are resolved against the
/// config file's directory. Throws io or config.
ScenarioConfig load_config(const std::filesystem::path& path);
/// Canonical TOML with every field present; parse_config(to_toml(c))
/// reproduces c exactly.
std::string to_toml(const ScenarioConfig& config);

}  // namespace visform::harness
