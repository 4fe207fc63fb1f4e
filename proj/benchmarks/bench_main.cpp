#include <benchmark/benchmark.h>

#include <vector>

#include "visform/gains.hpp"
#include "visform/percept.hpp"
#include "visform/pose.hpp"
#include "visform/scene.hpp"

namespace {

using namespace visform;

void BM_SolveMinimal(benchmark::State& state) {
  scene::TwoViewParams p;
  p.points = 5;
  const auto s = scene::make_two_view_scene(p, 3);
  pose::MinimalOptions o;
  o.backend = static_cast<pose::MinimalBackend>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pose::solve_minimal(s.correspondences, o));
}
BENCHMARK(BM_SolveMinimal)->Arg(0)->Arg(1)->ArgNames({"backend"});

void BM_Ransac(benchmark::State& state) {
  scene::TwoViewParams p;
  p.points = static_cast<std::size_t>(state.range(0));
  p.pixel_sigma = 1.0;
  p.outlier_fraction = 0.3;
  const auto s = scene::make_two_view_scene(p, 5);
  pose::RansacParams rp;
  rp.threshold = pose::RansacParams::pixel_threshold(p.intrinsics.focal);
  for (auto _ : state) benchmark::DoNotOptimize(pose::ransac_pose(s.correspondences, rp));
}
BENCHMARK(BM_Ransac)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

void BM_DesignGrid9(benchmark::State& state) {
  std::vector<Vec2> pts;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pts.emplace_back(10.0 * c, 10.0 * r);
  const auto spec = gains::FormationSpec::make(geometry::Configuration::from_points(pts), gains::Adjacency::grid(3, 3, true));
  for (auto _ : state) benchmark::DoNotOptimize(gains::design_gains(spec));
}
BENCHMARK(BM_DesignGrid9)->Unit(benchmark::kMillisecond);

struct Views {
  std::vector<percept::FeaturePoint> a, b;
};

Views two_views() {
  percept::WorldParams wp;
  const auto world = percept::generate_world(wp, 7);
  geometry::CameraPose c1{Vec3(0, 0, 20), geometry::downward_mounting()};
  geometry::CameraPose c2{Vec3(0, 8, 20), geometry::downward_mounting()};
  return {percept::capture(world, c1, {}, {1.0, 0.02}, 1), percept::capture(world, c2, {}, {1.0, 0.02}, 2)};
}

void BM_MatchFeatures(benchmark::State& state) {
  const Views v = two_views();
  for (auto _ : state) benchmark::DoNotOptimize(percept::match_features(v.a, v.b, 0.1, 3, {}));
  state.counters["features"] = static_cast<double>(v.a.size());
}
BENCHMARK(BM_MatchFeatures)->Unit(benchmark::kMillisecond);

void BM_Codec(benchmark::State& state) {
  const Views v = two_views();
  const percept::FeatureMessage m{1, 2, 0, v.a};
  for (auto _ : state) {
    const auto bytes = percept::encode_message(m);
    benchmark::DoNotOptimize(percept::decode_message(bytes));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * percept::message_size(v.a.size())));
}
BENCHMARK(BM_Codec);

}  // namespace

BENCHMARK_MAIN();
