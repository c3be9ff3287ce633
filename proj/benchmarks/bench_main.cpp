#include <benchmark/benchmark.h>

#include <vector>

#include "uvfuse/anchor.hpp"
#include "uvfuse/deform.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/splat.hpp"
#include "uvfuse/synth.hpp"

namespace {

using namespace uvfuse;

synth::Scene sphere(int subdiv) {
  synth::SceneSpec spec;
  spec.subdiv = subdiv;
  return synth::make_scene(spec);
}

geometry::Camera front_camera(int image) { return geometry::six_view_rig(3.0, {0, 0, 0}, {image, image, 40.0})[0]; }

// Args: icosphere subdivision, image size.
void BM_Rasterize(benchmark::State& state) {
  const auto scene = sphere(static_cast<int>(state.range(0)));
  const auto cam = front_camera(static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(raster::rasterize(scene.mesh, scene.mesh.vertices, cam));
  state.SetItemsProcessed(state.iterations() * state.range(1) * state.range(1));
}
BENCHMARK(BM_Rasterize)->Args({3, 128})->Args({4, 256})->Args({5, 512})->Unit(benchmark::kMillisecond);

// Args: image size, UV resolution.
void BM_SplatLevel(benchmark::State& state) {
  const auto scene = sphere(4);
  const auto gb = raster::rasterize(scene.mesh, scene.mesh.vertices, front_camera(static_cast<int>(state.range(0))));
  const auto features = synth::make_features(gb, synth::FeatureRule::kCheckerboard, 8, 0.5);
  const int res = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(splat::splat_level(gb, features, res));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(gb.covered_count()));
}
BENCHMARK(BM_SplatLevel)->Args({128, 128})->Args({256, 256})->Args({512, 512})->Unit(benchmark::kMicrosecond);

// Args: UV resolution, pyramid levels. Six views of a 256 px rig.
void BM_Fuse(benchmark::State& state, splat::FusionMode mode) {
  const auto scene = sphere(4);
  splat::FusionConfig cfg;
  cfg.base_res = static_cast<int>(state.range(0));
  cfg.num_levels = static_cast<int>(state.range(1));
  cfg.mode = mode;
  std::vector<splat::UVPyramid> views;
  for (const auto& cam : geometry::six_view_rig(3.0, {0, 0, 0}, {256, 256, 40.0})) {
    const auto gb = raster::rasterize(scene.mesh, scene.mesh.vertices, cam);
    views.push_back(splat::build_pyramid(gb, synth::make_features(gb, synth::FeatureRule::kCheckerboard, 8, 0.5),
                                         cam, cfg));
  }
  for (auto _ : state) benchmark::DoNotOptimize(splat::fuse(views, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK_CAPTURE(BM_Fuse, hole_filled, splat::FusionMode::kHoleFilled)
    ->Args({128, 4})
    ->Args({256, 4})
    ->Args({512, 5})
    ->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Fuse, raw_levels, splat::FusionMode::kRawLevels)->Args({256, 4})->Unit(benchmark::kMillisecond);

void BM_BuildPyramid(benchmark::State& state) {
  const auto scene = sphere(4);
  const auto cam = front_camera(256);
  const auto gb = raster::rasterize(scene.mesh, scene.mesh.vertices, cam);
  const auto features = synth::make_features(gb, synth::FeatureRule::kCheckerboard, 8, 0.5);
  splat::FusionConfig cfg;
  cfg.base_res = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(splat::build_pyramid(gb, features, cam, cfg));
}
BENCHMARK(BM_BuildPyramid)->Arg(128)->Arg(256)->Arg(512)->Unit(benchmark::kMicrosecond);

// Arg: icosphere subdivision.
void BM_LaplacianLoss(benchmark::State& state) {
  auto scene = sphere(static_cast<int>(state.range(0)));
  for (auto& w : scene.mesh.lap_weights) w = 1.0;
  for (auto _ : state) benchmark::DoNotOptimize(deform::laplacian_loss(scene.mesh, scene.mesh.vertices));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scene.mesh.num_vertices()));
}
BENCHMARK(BM_LaplacianLoss)->Arg(3)->Arg(4)->Arg(5)->Unit(benchmark::kMicrosecond);

void BM_NormalLoss(benchmark::State& state) {
  const auto scene = sphere(static_cast<int>(state.range(0)));
  std::vector<raster::GBuffer> gbs;
  std::vector<deform::NormalTarget> targets;
  for (const auto& cam : geometry::six_view_rig(3.0, {0, 0, 0}, {256, 256, 40.0})) {
    gbs.push_back(raster::rasterize(scene.mesh, scene.mesh.vertices, cam));
    targets.push_back({256, 256, gbs.back().normal});
  }
  const auto cache = deform::build_normal_cache(gbs, scene.mesh, targets, {});
  for (auto _ : state) benchmark::DoNotOptimize(deform::normal_loss(cache, scene.mesh, scene.mesh.vertices));
}
BENCHMARK(BM_NormalLoss)->Arg(3)->Arg(4)->Arg(5)->Unit(benchmark::kMicrosecond);

void BM_RenderGaussians(benchmark::State& state) {
  const auto scene = sphere(4);
  const auto cam = front_camera(static_cast<int>(state.range(0)));
  splat::FeatureMap attrs(64, 64, anchor::kAttributeChannels);
  const std::vector<Vec3> colors(scene.mesh.num_vertices(), Vec3{0.5, 0.5, 0.5});
  const auto set = anchor::build_gaussians(scene.mesh, scene.mesh.vertices, attrs, colors);
  for (auto _ : state) benchmark::DoNotOptimize(anchor::render_gaussians(set, cam));
  state.counters["splats"] = static_cast<double>(set.splats.size());
}
BENCHMARK(BM_RenderGaussians)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
