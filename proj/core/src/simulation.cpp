#include "visform/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "visform/error.hpp"
#include "visform/percept.hpp"
#include "visform/rng.hpp"

namespace visform::harness {

namespace {

constexpr double kErrorFloor = 1e-12;

double median(std::vector<double> v) {
  if (v.empty()) return -1.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  return 0.5 * (*std::max_element(v.begin(), mid) + hi);
}

geometry::Configuration planar_configuration(const std::vector<agent::AgentState>& states) {
  std::vector<Vec2> pts;
  pts.reserve(states.size());
  for (const auto& s : states) pts.push_back(s.planar());
  return geometry::Configuration::from_points(pts);
}

double min_pairwise_distance(const std::vector<agent::AgentState>& states) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < states.size(); ++i)
    for (std::size_t j = i + 1; j < states.size(); ++j)
      best = std::min(best, (states[i].position - states[j].position).norm());
  return best;
}

geometry::Rotation3 mounting_for(CameraKind kind) {
  return kind == CameraKind::downward ? geometry::downward_mounting() : geometry::forward_mounting();
}

}  // namespace

double shape_error(const geometry::Configuration& q, const geometry::Configuration& desired) {
  Vec2 centroid = Vec2::Zero();
  for (std::size_t i = 0; i < desired.size(); ++i) centroid += desired.point(i);
  centroid /= static_cast<double>(desired.size());
  double norm2 = 0.0;
  for (std::size_t i = 0; i < desired.size(); ++i) norm2 += (desired.point(i) - centroid).squaredNorm();
  return geometry::formation_error(q, desired) * std::sqrt(norm2) / desired.diameter();
}

gains::GainSet scenario_gains(const ScenarioConfig& config) {
  const auto spec = config.spec();
  if (config.gains_file.empty()) return gains::design_gains(spec);
  std::ifstream in(config.gains_file);
  if (!in) fail(ErrorCode::io, "cannot open gains file " + config.gains_file.string());
  gains::GainSet g = gains::read_gain_file(in);
  if (g.size() != spec.size() || !(g.adjacency() == spec.adjacency()))
    fail(ErrorCode::config, "formation.gains_file: gain sparsity does not match the formation graph");
  return g;
}

SimulationResult run_simulation(const ScenarioConfig& config, const std::optional<gains::GainSet>& precomputed) {
  config.validate();
  const auto spec = config.spec();
  const gains::GainSet gains = precomputed ? *precomputed : scenario_gains(config);
  const std::size_t n = config.agents.size();
  const auto& adjacency = spec.adjacency();
  const auto avoidance = config.avoidance();
  const bool vision = config.mode == PerceptionMode::vision;

  std::vector<agent::AgentState> states;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = config.agents[i];
    states.push_back(agent::AgentState::make(i, a.initial, a.yaw, mounting_for(a.camera)));
  }

  std::optional<percept::World> world;
  agent::PerceptionParams pp;
  if (vision) {
    world = percept::generate_world(config.world, config.world_seed);
    pp.intrinsics = config.camera;
    pp.mismatch_rate = config.mismatch_rate;
    pp.ransac.threshold = config.ransac_threshold_px / config.camera.focal;
    pp.ransac.confidence = config.ransac_confidence;
    pp.ransac.max_iterations = config.ransac_max_iterations;
    pp.stale_limit = config.stale_limit;
    pp.fallback_distance = config.fallback_distance;
  }
  const percept::CaptureNoise noise{config.pixel_sigma, config.descriptor_sigma};
  const double rotation = config.control_rotation_deg * std::numbers::pi / 180.0;

  SimulationResult result;
  TrajectoryLog& log = result.log;
  RunSummary& summary = result.summary;
  log.agents = n;
  std::vector<std::vector<agent::NeighborEstimate>> estimates(n);
  std::vector<double> rotation_errors;
  std::vector<double> direction_errors;
  summary.min_distance = std::numeric_limits<double>::infinity();

  for (int step = 0; step < config.max_steps; ++step) {
    const double time = step * config.dt;
    const auto q = planar_configuration(states);
    const double err = geometry::formation_error(q, spec.desired());
    const double dmin = min_pairwise_distance(states);
    if (step == 0) summary.initial_error = err;
    summary.min_distance = std::min(summary.min_distance, dmin);

    // (1) capture and (2) exchange.
    std::vector<std::vector<percept::FeaturePoint>> captures(n);
    std::vector<std::vector<std::vector<percept::FeaturePoint>>> received(n);
    if (vision) {
      for (std::size_t i = 0; i < n; ++i)
        captures[i] = percept::capture(*world, states[i].camera_pose(), config.camera, noise,
                                       derive_seed(config.seed, {i, static_cast<std::uint64_t>(step), tag("capture")}));
      for (std::size_t j = 0; j < n; ++j) {
        const auto bytes = percept::encode_message(
            {static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(step), 0, captures[j]});
        for (std::size_t i : adjacency.neighbors(j)) {
          percept::FeatureMessage m = percept::decode_message(bytes);
          // Ground-truth ids ride along outside the payload, for scoring only.
          for (std::size_t k = 0; k < m.features.size(); ++k) m.features[k].landmark = captures[j][k].landmark;
          summary.bytes_exchanged += bytes.size();
          if (received[i].empty()) received[i].resize(n);
          received[i][j] = std::move(m.features);
        }
      }
    }

    // (3) estimate and command, all from the pre-step states.
    std::vector<agent::ControlCommand> commands(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<agent::NeighborEstimate> current;
      if (vision) {
        std::vector<agent::Inbound> inbox;
        for (std::size_t j : adjacency.neighbors(i)) inbox.push_back({j, received[i][j]});
        std::vector<agent::EstimateOutcome> outcomes;
        current = agent::estimate_neighbors(states[i], inbox, captures[i], estimates[i], pp,
                                            derive_seed(config.seed, {i, static_cast<std::uint64_t>(step), tag("estimate")}),
                                            &outcomes);
        for (const auto& o : outcomes) {
          PoseErrorRow row;
          row.step = step;
          row.agent = i;
          row.neighbor = o.neighbor;
          row.status = o.status;
          row.matches = o.matches;
          row.inliers = o.inliers;
          row.rotation_error = row.direction_error = row.offset_error = -1.0;
          if (o.status == agent::EstimateStatus::fresh) {
            const auto it = std::find_if(current.begin(), current.end(),
                                         [&](const agent::NeighborEstimate& e) { return e.neighbor == o.neighbor; });
            const auto& other = states[o.neighbor];
            const geometry::Rotation3 ri = states[i].world_to_camera();
            const geometry::Rotation3 rj = other.world_to_camera();
            const auto pe = pose::pose_error(*it->pose, ri * rj.transpose(), ri * (other.position - states[i].position));
            row.rotation_error = pe.rotation;
            row.direction_error = pe.direction;
            row.offset_error = (it->offset - agent::body_offset(states[i], other)).norm();
            rotation_errors.push_back(pe.rotation);
            direction_errors.push_back(pe.direction);
          }
          log.pose_rows.push_back(row);
        }
      } else {
        for (std::size_t j : adjacency.neighbors(i)) current.push_back(agent::oracle_estimate(states[i], states[j]));
      }
      estimates[i] = current;

      std::vector<gains::NeighborOffset> offsets;
      for (const auto& e : current) offsets.push_back({e.neighbor, e.offset});
      Vec2 u = gains::control_law(i, offsets, gains);
      if (rotation != 0.0) u = geometry::rotate_planar(u, rotation);
      if (config.scaling_enabled) {
        CounterRng rng(derive_seed(config.seed, {i, static_cast<std::uint64_t>(step), tag("scaling")}));
        u *= rng.uniform(config.scaling_min, config.scaling_max);
      }
      commands[i] = config.avoidance_enabled ? agent::avoid_collision(u, current, avoidance, config.v_max)
                                             : agent::ControlCommand{u, 0.0, false};
      if (commands[i].stopped) ++summary.stopped_commands;
    }

    for (std::size_t i = 0; i < n; ++i) {
      AgentRow row;
      row.step = step;
      row.time = time;
      row.agent = i;
      row.position = states[i].position;
      row.yaw = states[i].yaw;
      row.command = commands[i].velocity;
      row.rotation = commands[i].rotation;
      row.stopped = commands[i].stopped;
      row.formation_error = err;
      row.min_distance = dmin;
      log.rows.push_back(row);
    }
    summary.steps = step + 1;
    summary.final_error = err;
    summary.final_shape_error = shape_error(q, spec.desired());
    // The floor keeps a start already at equilibrium from running forever.
    if (err <= std::max(config.error_threshold * summary.initial_error, kErrorFloor)) {
      summary.converged = true;
      summary.steps_to_threshold = step;
      break;
    }

    // (4) simultaneous update.
    for (std::size_t i = 0; i < n; ++i)
      states[i] = agent::step_dynamics(states[i], commands[i], config.dt, config.v_max);
  }

  summary.median_rotation_error = median(rotation_errors);
  summary.median_direction_error = median(direction_errors);
  result.final_states = states;
  return result;
}

}  // namespace visform::harness
