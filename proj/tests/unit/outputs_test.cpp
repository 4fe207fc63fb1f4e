#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "visform/config.hpp"
#include "visform/error.hpp"
#include "visform/outputs.hpp"
#include "visform/simulation.hpp"

namespace {

using namespace visform;
using namespace visform::harness;

const std::filesystem::path kScenarios = VISFORM_SCENARIO_DIR;

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

const SimulationResult& vision_run() {
  static const SimulationResult r = [] {
    ScenarioConfig c = load_config(kScenarios / "triangle3.toml");
    c.max_steps = 12;
    return run_simulation(c);
  }();
  return r;
}

TEST(Outputs, TrajectoryRoundTrip) {
  const auto& r = vision_run();
  std::stringstream ss;
  write_trajectory_csv(ss, r.log);
  ASSERT_EQ(first_line(ss.str()), kTrajectoryHeader);
  const TrajectoryLog back = read_trajectory_csv(ss);
  EXPECT_EQ(back.agents, r.log.agents);
  EXPECT_TRUE(back.rows == r.log.rows);
}

TEST(Outputs, PoseErrorRoundTrip) {
  const auto& r = vision_run();
  ASSERT_FALSE(r.log.pose_rows.empty());
  std::stringstream ss;
  write_pose_errors_csv(ss, r.log);
  ASSERT_EQ(first_line(ss.str()), kPoseErrorHeader);
  TrajectoryLog back;
  read_pose_errors_csv(ss, back);
  EXPECT_TRUE(back.pose_rows == r.log.pose_rows);
}

TEST(Outputs, SummaryRoundTrip) {
  RunSummary s = vision_run().summary;
  for (int k = 0; k < 2; ++k) {
    std::stringstream ss;
    write_summary_csv(ss, s);
    ASSERT_EQ(first_line(ss.str()), kSummaryHeader);
    EXPECT_TRUE(read_summary_csv(ss) == s);
    s.converged = !s.converged;
    s.final_error = 0.1 + 0.2;
    s.min_distance = std::numeric_limits<double>::denorm_min();
  }
}

TEST(Outputs, AwkwardDoublesSurvive) {
  TrajectoryLog log;
  log.agents = 1;
  AgentRow row;
  row.position = {1.0 / 3.0, -0.0, 1e300};
  row.yaw = -std::numeric_limits<double>::min();
  row.command = {5e-324, 0.1};
  row.formation_error = 123456789.123456789;
  log.rows.push_back(row);
  std::stringstream ss;
  write_trajectory_csv(ss, log);
  const auto back = read_trajectory_csv(ss);
  ASSERT_EQ(back.rows.size(), 1u);
  EXPECT_TRUE(back.rows[0] == row);
}

TEST(Outputs, EmptyLog) {
  TrajectoryLog log;
  std::stringstream csv;
  write_trajectory_csv(csv, log);
  EXPECT_EQ(csv.str(), std::string(kTrajectoryHeader) + "\n");
  EXPECT_TRUE(read_trajectory_csv(csv).rows.empty());

  std::stringstream svg;
  write_trajectory_svg(svg, log, gains::Adjacency(0));
  EXPECT_NE(svg.str().find("<svg"), std::string::npos);
  EXPECT_EQ(count(svg.str(), "<polyline"), 0u);
}

TEST(Outputs, SvgHasOnePolylinePerAgent) {
  const auto& r = vision_run();
  const auto c = load_config(kScenarios / "triangle3.toml");
  std::stringstream svg;
  write_trajectory_svg(svg, r.log, c.adjacency());
  EXPECT_EQ(count(svg.str(), "<polyline"), 3u);
  EXPECT_EQ(count(svg.str(), "<line "), 3u);
  EXPECT_NE(svg.str().find("</svg>"), std::string::npos);
}

TEST(Outputs, MalformedInputNamesLine) {
  const std::string header = std::string(kTrajectoryHeader) + "\n";
  const char* bad[] = {
      "0,0,0,1,2,3\n",
      "0,0,0,1,2,3,0,0,0,0,maybe,0,0\n",
      "0,0,0,x,2,3,0,0,0,0,0,0,0\n",
      "0,0,-1,1,2,3,0,0,0,0,0,0,0\n",
  };
  for (const char* body : bad) {
    std::stringstream ss(header + body);
    try {
      (void)read_trajectory_csv(ss);
      FAIL() << body;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::io);
      EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
  }
  std::stringstream wrong_header("step,time\n");
  EXPECT_THROW((void)read_trajectory_csv(wrong_header), Error);
  std::stringstream empty;
  EXPECT_THROW((void)read_summary_csv(empty), Error);
}

TEST(Outputs, EmitWritesAllFiles) {
  const auto& r = vision_run();
  const auto dir = std::filesystem::temp_directory_path() / "visform_outputs" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  emit_outputs(r.log, r.summary, load_config(kScenarios / "triangle3.toml").adjacency(), dir);
  for (const char* f : {"trajectory.csv", "pose_errors.csv", "summary.csv", "trajectory.svg"})
    EXPECT_TRUE(std::filesystem::is_regular_file(dir / f)) << f;
  std::ifstream in(dir / "trajectory.csv");
  EXPECT_TRUE(read_trajectory_csv(in).rows == r.log.rows);
  std::ifstream sin(dir / "summary.csv");
  EXPECT_TRUE(read_summary_csv(sin) == r.summary);
  std::filesystem::remove_all(dir.parent_path());
}

TEST(Outputs, EmitFailsOnFileInTheWay) {
  const auto file = std::filesystem::temp_directory_path() / "visform_outputs_blocker";
  { std::ofstream(file) << "x"; }
  try {
    emit_outputs({}, {}, gains::Adjacency(0), file / "sub");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::io);
  }
  std::filesystem::remove(file);
}

}  // namespace
