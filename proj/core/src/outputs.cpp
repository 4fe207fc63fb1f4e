#include "visform/outputs.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

#include "visform/error.hpp"

namespace visform::harness {

namespace {

std::string fmt(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return {buf.data(), end};
}

std::string_view status_name(agent::EstimateStatus s) {
  switch (s) {
    case agent::EstimateStatus::fresh: return "fresh";
    case agent::EstimateStatus::stale: return "stale";
    case agent::EstimateStatus::dropped: return "dropped";
  }
  return "?";
}

class CsvReader {
 public:
  CsvReader(std::istream& in, std::string_view header, std::string_view name) : in_(in), name_(name) {
    std::string line;
    if (!std::getline(in_, line) || line != header) error("unexpected header");
  }

  bool next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (line.empty()) continue;
      fields_.clear();
      std::size_t start = 0;
      for (;;) {
        const std::size_t comma = line.find(',', start);
        fields_.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      col_ = 0;
      return true;
    }
    return false;
  }

  void expect(std::size_t count) const {
    if (fields_.size() != count)
      error("expected " + std::to_string(count) + " fields, got " + std::to_string(fields_.size()));
  }

  double real() {
    const std::string& f = take();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) error("bad number '" + f + "'");
    return v;
  }

  template <class Int>
  Int integer() {
    const std::string& f = take();
    Int v{};
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) error("bad integer '" + f + "'");
    return v;
  }

  const std::string& text() { return take(); }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::io, std::string(name_) + ":" + std::to_string(line_ + 1) + ": " + what);
  }

 private:
  const std::string& take() { return fields_.at(col_++); }

  std::istream& in_;
  std::string_view name_;
  std::vector<std::string> fields_;
  std::size_t col_ = 0;
  std::size_t line_ = 0;
};

}  // namespace

void write_trajectory_csv(std::ostream& out, const TrajectoryLog& log) {
  out << kTrajectoryHeader << '\n';
  for (const auto& r : log.rows) {
    out << r.step << ',' << fmt(r.time) << ',' << r.agent << ',' << fmt(r.position.x()) << ',' << fmt(r.position.y())
        << ',' << fmt(r.position.z()) << ',' << fmt(r.yaw) << ',' << fmt(r.command.x()) << ',' << fmt(r.command.y())
        << ',' << fmt(r.rotation) << ',' << (r.stopped ? 1 : 0) << ',' << fmt(r.formation_error) << ','
        << fmt(r.min_distance) << '\n';
  }
}

void write_pose_errors_csv(std::ostream& out, const TrajectoryLog& log) {
  out << kPoseErrorHeader << '\n';
  for (const auto& r : log.pose_rows) {
    out << r.step << ',' << r.agent << ',' << r.neighbor << ',' << status_name(r.status) << ',' << r.matches << ','
        << r.inliers << ',' << fmt(r.rotation_error) << ',' << fmt(r.direction_error) << ',' << fmt(r.offset_error)
        << '\n';
  }
}

void write_summary_csv(std::ostream& out, const RunSummary& s) {
  out << kSummaryHeader << '\n';
  out << (s.converged ? 1 : 0) << ',' << s.steps << ',' << s.steps_to_threshold << ',' << fmt(s.initial_error) << ','
      << fmt(s.final_error) << ',' << fmt(s.final_shape_error) << ',' << fmt(s.min_distance) << ','
      << fmt(s.median_rotation_error) << ',' << fmt(s.median_direction_error) << ',' << s.bytes_exchanged << ','
      << s.stopped_commands << '\n';
}

TrajectoryLog read_trajectory_csv(std::istream& in) {
  CsvReader csv(in, kTrajectoryHeader, "trajectory.csv");
  TrajectoryLog log;
  while (csv.next()) {
    csv.expect(13);
    AgentRow r;
    r.step = csv.integer<int>();
    r.time = csv.real();
    r.agent = csv.integer<std::size_t>();
    r.position.x() = csv.real();
    r.position.y() = csv.real();
    r.position.z() = csv.real();
    r.yaw = csv.real();
    r.command.x() = csv.real();
    r.command.y() = csv.real();
    r.rotation = csv.real();
    const int stopped = csv.integer<int>();
    if (stopped != 0 && stopped != 1) csv.error("stopped must be 0 or 1");
    r.stopped = stopped == 1;
    r.formation_error = csv.real();
    r.min_distance = csv.real();
    log.agents = std::max(log.agents, r.agent + 1);
    log.rows.push_back(r);
  }
  return log;
}

void read_pose_errors_csv(std::istream& in, TrajectoryLog& log) {
  CsvReader csv(in, kPoseErrorHeader, "pose_errors.csv");
  log.pose_rows.clear();
  while (csv.next()) {
    csv.expect(9);
    PoseErrorRow r;
    r.step = csv.integer<int>();
    r.agent = csv.integer<std::size_t>();
    r.neighbor = csv.integer<std::size_t>();
    const std::string& status = csv.text();
    if (status == "fresh") r.status = agent::EstimateStatus::fresh;
    else if (status == "stale") r.status = agent::EstimateStatus::stale;
    else if (status == "dropped") r.status = agent::EstimateStatus::dropped;
    else csv.error("unknown status '" + status + "'");
    r.matches = csv.integer<std::size_t>();
    r.inliers = csv.integer<std::size_t>();
    r.rotation_error = csv.real();
    r.direction_error = csv.real();
    r.offset_error = csv.real();
    log.pose_rows.push_back(r);
  }
}

RunSummary read_summary_csv(std::istream& in) {
  CsvReader csv(in, kSummaryHeader, "summary.csv");
  if (!csv.next()) csv.error("missing summary row");
  csv.expect(11);
  RunSummary s;
  s.converged = csv.integer<int>() == 1;
  s.steps = csv.integer<int>();
  s.steps_to_threshold = csv.integer<int>();
  s.initial_error = csv.real();
  s.final_error = csv.real();
  s.final_shape_error = csv.real();
  s.min_distance = csv.real();
  s.median_rotation_error = csv.real();
  s.median_direction_error = csv.real();
  s.bytes_exchanged = csv.integer<std::uint64_t>();
  s.stopped_commands = csv.integer<std::size_t>();
  return s;
}

void write_trajectory_svg(std::ostream& out, const TrajectoryLog& log, const gains::Adjacency& adjacency) {
  constexpr double kSize = 600.0;
  constexpr double kMargin = 30.0;
  static constexpr std::array<const char*, 10> kColors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                       "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" viewBox=\"0 0 " << kSize << ' ' << kSize << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (log.rows.empty()) {
    out << "</svg>\n";
    return;
  }

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& r : log.rows) {
    xmin = std::min(xmin, r.position.x());
    xmax = std::max(xmax, r.position.x());
    ymin = std::min(ymin, r.position.y());
    ymax = std::max(ymax, r.position.y());
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  const double s = (kSize - 2.0 * kMargin) / span;
  const auto coord = [](double v) {
    std::array<char, 32> b{};
    std::snprintf(b.data(), b.size(), "%.3f", v);
    return std::string(b.data());
  };
  const auto sx = [&](const Vec3& p) { return coord(kMargin + (p.x() - xmin) * s); };
  const auto sy = [&](const Vec3& p) { return coord(kSize - kMargin - (p.y() - ymin) * s); };

  std::vector<std::vector<Vec3>> tracks(log.agents);
  for (const auto& r : log.rows) tracks[r.agent].push_back(r.position);

  out << "<g stroke=\"#bbbbbb\" stroke-width=\"1\" stroke-dasharray=\"4 3\">\n";
  for (const auto& [i, j] : adjacency.edges()) {
    if (i >= tracks.size() || j >= tracks.size() || tracks[i].empty() || tracks[j].empty()) continue;
    const Vec3& a = tracks[i].front();
    const Vec3& b = tracks[j].front();
    out << "<line x1=\"" << sx(a) << "\" y1=\"" << sy(a) << "\" x2=\"" << sx(b) << "\" y2=\"" << sy(b) << "\"/>\n";
  }
  out << "</g>\n";
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i].empty()) continue;
    const char* color = kColors[i % kColors.size()];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < tracks[i].size(); ++k) out << (k ? " " : "") << sx(tracks[i][k]) << ',' << sy(tracks[i][k]);
    out << "\"/>\n";
    const Vec3& start = tracks[i].front();
    const Vec3& end = tracks[i].back();
    out << "<circle cx=\"" << sx(start) << "\" cy=\"" << sy(start) << "\" r=\"3\" fill=\"white\" stroke=\"" << color
        << "\"/>\n";
    out << "<circle cx=\"" << sx(end) << "\" cy=\"" << sy(end) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  }
  out << "</svg>\n";
}

namespace {

template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  fn(out);
  out.flush();
  if (!out) fail(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace

void emit_outputs(const TrajectoryLog& log, const RunSummary& summary, const gains::Adjacency& adjacency,
                  const std::filesystem::path& outdir) {
  std::error_code ec;
  std::filesystem::create_directories(outdir, ec);
  if (ec) fail(ErrorCode::io, "cannot create " + outdir.string() + ": " + ec.message());
  write_file(outdir / "trajectory.csv", [&](std::ostream& o) { write_trajectory_csv(o, log); });
  write_file(outdir / "pose_errors.csv", [&](std::ostream& o) { write_pose_errors_csv(o, log); });
  write_file(outdir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, summary); });
  write_file(outdir / "trajectory.svg", [&](std::ostream& o) { write_trajectory_svg(o, log, adjacency); });
}

}  // namespace visform::harness
