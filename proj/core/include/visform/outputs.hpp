#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "visform/gains.hpp"
#include "visform/simulation.hpp"

namespace visform::harness {

inline constexpr const char* kTrajectoryHeader =
    "step,time,agent,x,y,z,yaw,ux,uy,theta,stopped,formation_error,min_distance";
inline constexpr const char* kPoseErrorHeader =
    "step,agent,neighbor,status,matches,inliers,rotation_error,direction_error,offset_error";
inline constexpr const char* kSummaryHeader =
    "converged,steps,steps_to_threshold,initial_error,final_error,final_shape_error,min_distance,"
    "median_rotation_error,median_direction_error,bytes_exchanged,stopped_commands";

/// Doubles are written in shortest round-trip form, so reading a file back
/// reproduces the values bit for bit.
void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log);
void write_pose_errors_csv(std::ostream& out, const TrajectoryLog& log);
void write_summary_csv(std::ostream& out, const RunSummary& summary);

/// Throws io with a line number on malformed input. The agent count is
/// taken from the largest agent index seen.
TrajectoryLog read_trajectory_csv(std::istream& in);
void read_pose_errors_csv(std::istream& in, TrajectoryLog& log);
RunSummary read_summary_csv(std::istream& in);

/// Top-down plot: one polyline per agent and graph edges between start
/// positions.
void write_trajectory_svg(std::ostream& out, const TrajectoryLog& log, const gains::Adjacency& adjacency);

/// trajectory.csv, pose_errors.csv, summary.csv and trajectory.svg in
/// outdir (created if missing). Throws io naming the failing path.
void emit_outputs(const TrajectoryLog& log, const RunSummary& summary, const gains::Adjacency& adjacency,
                  const std::filesystem::path& outdir);

}  // namespace visform::harness
