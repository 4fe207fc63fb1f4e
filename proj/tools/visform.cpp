// visform command-line driver.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "visform/config.hpp"
#include "visform/error.hpp"
#include "visform/gains.hpp"
#include "visform/outputs.hpp"
#include "visform/pose.hpp"
#include "visform/rng.hpp"
#include "visform/scene.hpp"
#include "visform/simulation.hpp"

namespace {

using namespace visform;

constexpr double kDeg = 180.0 / 3.14159265358979323846;

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void print_report(std::ostream& out, const gains::SpectralReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "kernel_dimension %zu\nspectral_gap %.6g\nmax_eigenvalue %.3g\nsymmetry_violation %.3g\n"
                "sparsity_violation %.3g\nkernel_residual %.3g\nok %s\n",
                r.kernel_dimension, r.spectral_gap, r.max_eigenvalue, r.symmetry_violation, r.sparsity_violation,
                r.kernel_residual, r.ok() ? "yes" : "no");
  out << buf;
}

int design_gains_cmd(const std::string& config_path, const std::string& out_path) {
  const auto cfg = harness::load_config(config_path);
  const auto spec = cfg.spec();
  const auto g = gains::design_gains(spec);
  const auto report = gains::verify_gains(g, spec);
  if (out_path.empty()) {
    gains::write_gain_file(std::cout, g, report);
  } else {
    std::ofstream out(out_path);
    if (!out) fail(ErrorCode::io, "cannot write " + out_path);
    gains::write_gain_file(out, g, report);
    print_report(std::cout, report);
  }
  return report.ok() ? 0 : 1;
}

int simulate_cmd(const std::string& config_path, const std::string& outdir, const std::optional<std::uint64_t>& seed,
                 const std::string& perception) {
  auto cfg = harness::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (perception == "vision") cfg.mode = harness::PerceptionMode::vision;
  if (perception == "oracle") cfg.mode = harness::PerceptionMode::oracle;
  cfg.validate();
  const auto result = harness::run_simulation(cfg);
  harness::emit_outputs(result.log, result.summary, cfg.adjacency(), outdir);
  {
    std::ofstream eff(std::filesystem::path(outdir) / "config.toml", std::ios::binary);
    if (!eff) fail(ErrorCode::io, "cannot write " + (std::filesystem::path(outdir) / "config.toml").string());
    eff << harness::to_toml(cfg);
  }
  const auto& s = result.summary;
  std::printf("scenario %s (%s perception, seed %llu)\n", cfg.name.c_str(), std::string(to_string(cfg.mode)).c_str(),
              static_cast<unsigned long long>(cfg.seed));
  std::printf("converged %s after %d steps\n", s.converged ? "yes" : "no", s.steps);
  std::printf("formation error %.3e -> %.3e (shape error %.3g of diameter)\n", s.initial_error, s.final_error,
              s.final_shape_error);
  std::printf("min pairwise distance %.3f m, stopped commands %zu\n", s.min_distance, s.stopped_commands);
  if (cfg.mode == harness::PerceptionMode::vision)
    std::printf("median pose error: rotation %.3f deg, direction %.3f deg; %llu bytes exchanged\n",
                s.median_rotation_error * kDeg, s.median_direction_error * kDeg,
                static_cast<unsigned long long>(s.bytes_exchanged));
  return 0;
}

std::vector<pose::Correspondence> read_correspondence_csv(const std::string& path, bool pixels,
                                                          const geometry::CameraIntrinsics& k) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "mx,my,nx,ny") fail(ErrorCode::io, path + ":1: expected header mx,my,nx,ny");
  std::vector<pose::Correspondence> cs;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) {
      std::string field;
      if (!std::getline(ss, field, i < 3 ? ',' : '\n')) fail(ErrorCode::io, path + ":" + std::to_string(lineno) + ": expected 4 fields");
      try {
        std::size_t used = 0;
        v[i] = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        fail(ErrorCode::io, path + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (pixels) {
      cs.push_back(pose::Correspondence::make(geometry::backproject({v[0], v[1]}, k), geometry::backproject({v[2], v[3]}, k)));
    } else {
      cs.push_back(pose::Correspondence::from_normalized({v[0], v[1]}, {v[2], v[3]}));
    }
  }
  return cs;
}

int estimate_pose_cmd(const std::string& path, bool pixels, double focal, double threshold_px, std::uint64_t seed) {
  geometry::CameraIntrinsics k;
  k.focal = focal;
  k.validate();
  const auto cs = read_correspondence_csv(path, pixels, k);
  pose::RansacParams p;
  p.threshold = threshold_px / focal;
  p.seed = seed;
  const auto r = pose::ransac_pose(cs, p);
  const auto& q = r.pose.rotation;
  const auto& t = r.pose.translation;
  std::printf("correspondences %zu\ninliers %zu\niterations %d\n", cs.size(), r.inlier_count(), r.iterations);
  std::printf("quaternion_wxyz %.12g %.12g %.12g %.12g\n", q.w(), q.x(), q.y(), q.z());
  std::printf("rotation_angle_deg %.9g\n", q.angle() * kDeg);
  std::printf("translation_direction %.12g %.12g %.12g\n", t.x(), t.y(), t.z());
  std::printf("mean_residual %.6g\n", r.pose.mean_residual);
  return 0;
}

struct BenchRow {
  int failures = 0;
  std::vector<double> rot, dir, ms;
};

BenchRow bench_level(int trials, double noise, int points, double outliers, std::uint64_t seed,
                     pose::MinimalBackend backend) {
  BenchRow row;
  for (int i = 0; i < trials; ++i) {
    scene::TwoViewParams sp;
    sp.points = static_cast<std::size_t>(points);
    sp.pixel_sigma = noise;
    sp.outlier_fraction = outliers;
    const auto s = scene::make_two_view_scene(sp, derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    pose::RansacParams p;
    p.threshold = noise > 0.0 ? pose::RansacParams::pixel_threshold(sp.intrinsics.focal) * std::max(1.0, noise) : 1e-6;
    p.seed = derive_seed(seed, {static_cast<std::uint64_t>(i), tag("ransac")});
    p.backend = backend;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto r = pose::ransac_pose(s.correspondences, p);
      const auto e = pose::pose_error(r.pose, s.rotation, s.translation);
      row.rot.push_back(e.rotation * kDeg);
      row.dir.push_back(e.direction * kDeg);
    } catch (const Error&) {
      ++row.failures;
    }
    row.ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return row;
}

// One CSV row per noise level; the same scenes are reused across levels.
int bench_pose_cmd(int trials, const std::vector<double>& noise, int points, double outliers, std::uint64_t seed,
                   const std::string& backend, const std::string& out_path) {
  if (trials < 1) fail(ErrorCode::invalid_argument, "--trials must be >= 1");
  const auto be = backend == "multistart" ? pose::MinimalBackend::multistart : pose::MinimalBackend::algebraic;
  std::ostringstream csv;
  csv << "noise_px,trials,points,outliers,failures,median_rotation_deg,p90_rotation_deg,"
         "median_direction_deg,p90_direction_deg,median_time_ms\n";
  int failures = 0;
  for (double sigma : noise) {
    const BenchRow r = bench_level(trials, sigma, points, outliers, seed, be);
    failures += r.failures;
    char line[256];
    std::snprintf(line, sizeof line, "%.6g,%d,%d,%.6g,%d,%.6g,%.6g,%.6g,%.6g,%.4g\n", sigma, trials, points, outliers,
                  r.failures, quantile(r.rot, 0.5), quantile(r.rot, 0.9), quantile(r.dir, 0.5), quantile(r.dir, 0.9),
                  quantile(r.ms, 0.5));
    csv << line;
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) fail(ErrorCode::io, "cannot write " + out_path);
    f << csv.str();
    if (!f) fail(ErrorCode::io, "write failed: " + out_path);
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-based distributed formation control simulator"};
  app.require_subcommand(1);

  std::string config_path, out_path, outdir, perception, csv_path, backend = "algebraic";
  std::optional<std::uint64_t> seed;
  std::uint64_t pose_seed = 0, bench_seed = 1;
  bool pixels = false;
  double focal = 250.0, threshold_px = 2.0, outliers = 0.0;
  std::vector<double> noise{1.0};
  std::string bench_out;
  int trials = 100, points = 100;

  auto* design = app.add_subcommand("design-gains", "Design and verify formation gains for a scenario");
  design->add_option("config", config_path, "Scenario TOML")->required()->check(CLI::ExistingFile);
  design->add_option("--out", out_path, "Write the gain file here instead of stdout");

  auto* sim = app.add_subcommand("simulate", "Run a scenario and write CSV/SVG outputs");
  sim->add_option("config", config_path, "Scenario TOML")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", outdir, "Output directory")->required();
  sim->add_option("--seed", seed, "Override the master seed");
  sim->add_option("--perception", perception, "Override perception mode")->check(CLI::IsMember({"vision", "oracle"}));

  auto* est = app.add_subcommand("estimate-pose", "Robust relative pose from a correspondence CSV (mx,my,nx,ny)");
  est->add_option("csv", csv_path, "Correspondence CSV")->required()->check(CLI::ExistingFile);
  est->add_flag("--pixels", pixels, "Columns are pixel coordinates (principal point 160, 120)");
  est->add_option("--focal", focal, "Focal length in pixels")->check(CLI::PositiveNumber);
  est->add_option("--threshold-px", threshold_px, "RANSAC threshold in pixels")->check(CLI::PositiveNumber);
  est->add_option("--seed", pose_seed, "RANSAC seed");

  auto* bench = app.add_subcommand("bench-pose", "Monte Carlo pose accuracy on synthetic scenes");
  bench->add_option("--trials", trials, "Number of scenes")->check(CLI::PositiveNumber);
  bench->add_option("--noise", noise, "Pixel noise sigma, one or more levels")->check(CLI::NonNegativeNumber);
  bench->add_option("--points", points, "Correspondences per scene")->check(CLI::Range(5, 100000));
  bench->add_option("--outliers", outliers, "Mismatch fraction")->check(CLI::Range(0.0, 0.95));
  bench->add_option("--seed", bench_seed, "Master seed");
  bench->add_option("--backend", backend, "Minimal solver")->check(CLI::IsMember({"algebraic", "multistart"}));
  bench->add_option("--out", bench_out, "Write the CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*design) return design_gains_cmd(config_path, out_path);
    if (*sim) return simulate_cmd(config_path, outdir, seed, perception);
    if (*est) return estimate_pose_cmd(csv_path, pixels, focal, threshold_px, pose_seed);
    if (*bench) return bench_pose_cmd(trials, noise, points, outliers, bench_seed, backend, bench_out);
  } catch (const visform::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
