#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "uvfuse/oracle.hpp"
#include "uvfuse/splat.hpp"
#include "uvfuse/synth.hpp"

namespace {

using namespace uvfuse;
using splat::FeatureMap;
using splat::FusionConfig;

struct OnePixel {
  geometry::Camera camera;
  raster::GBuffer gbuffer;
  FeatureMap features;
};

// 1x1 view whose ray runs down +Z; the surface normal makes `angle` radians
// with the direction back to the camera.
OnePixel one_pixel(Vec2 uv, std::vector<double> feature, double angle = 0.0) {
  OnePixel v;
  v.camera.fx = v.camera.fy = 1.0;
  v.camera.cx = v.camera.cy = 0.5;
  v.gbuffer = raster::GBuffer(1, 1);
  v.gbuffer.mask[0] = 1;
  v.gbuffer.face_id[0] = 0;
  v.gbuffer.bary[0] = {1.0, 0.0, 0.0};
  v.gbuffer.uv[0] = uv;
  v.gbuffer.depth[0] = 2.0;
  v.gbuffer.normal[0] = {std::sin(angle), 0.0, -std::cos(angle)};
  v.features = FeatureMap(1, 1, static_cast<int>(feature.size()));
  v.features.data = std::move(feature);
  return v;
}

FusionConfig tiny_config(int res, int levels, std::size_t views) {
  FusionConfig cfg;
  cfg.base_res = res;
  cfg.num_levels = levels;
  cfg.gamma.assign(views, 1.0);
  return cfg;
}

double weight_at(const splat::SplatTaps& t, int index) {
  double w = 0.0;
  for (int k = 0; k < t.count; ++k)
    if (t.taps[static_cast<std::size_t>(k)].index == index) w += t.taps[static_cast<std::size_t>(k)].weight;
  return w;
}

TEST(SplatTaps, TexelCenterTakesAllMass) {
  const auto t = splat::splat_taps({(2 + 0.5) / 8.0, (5 + 0.5) / 8.0}, 8);
  EXPECT_EQ(weight_at(t, 5 * 8 + 2), 1.0);
  double sum = 0.0;
  for (int k = 0; k < t.count; ++k) sum += t.taps[static_cast<std::size_t>(k)].weight;
  EXPECT_EQ(sum, 1.0);
}

TEST(SplatTaps, MidpointSplitsEvenly) {
  const auto t = splat::splat_taps({3.0 / 8.0, 3.0 / 8.0}, 8);
  ASSERT_EQ(t.count, 4);
  for (int idx : {2 * 8 + 2, 2 * 8 + 3, 3 * 8 + 2, 3 * 8 + 3}) EXPECT_EQ(weight_at(t, idx), 0.25);
}

TEST(SplatTaps, OutOfRangeTapsAreDropped) {
  const auto corner = splat::splat_taps({0.0, 0.0}, 4);
  ASSERT_EQ(corner.count, 1);
  EXPECT_EQ(corner.taps[0].index, 0);
  EXPECT_EQ(corner.taps[0].weight, 0.25);
  EXPECT_FALSE(splat::in_range({0.0, 0.5}, 4));
  EXPECT_TRUE(splat::in_range({0.125, 0.875}, 4));
}

TEST(SplatTaps, PartitionOfUnityInRange) {
  synth::Rng rng(13);
  for (int i = 0; i < 5000; ++i) {
    const int res = rng.uniform_int(1, 64);
    const Vec2 uv{rng.uniform(0.5 / res, 1.0 - 0.5 / res), rng.uniform(0.5 / res, 1.0 - 0.5 / res)};
    ASSERT_TRUE(splat::in_range(uv, res));
    const auto t = splat::splat_taps(uv, res);
    double sum = 0.0;
    for (int k = 0; k < t.count; ++k) sum += t.taps[static_cast<std::size_t>(k)].weight;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(SplatLevel, MatchesBruteForce) {
  synth::Rng rng(14);
  const auto view = synth::random_view(rng, 8, 8, 3, 0.7);
  const int res = 16;
  const auto lvl = splat::splat_level(view.gbuffer, view.features, res);
  std::vector<double> U(res * res * 3, 0.0), D(res * res, 0.0);
  for (std::size_t p = 0; p < view.gbuffer.size(); ++p) {
    if (!view.gbuffer.mask[p]) continue;
    const double x = view.gbuffer.uv[p].x * res - 0.5;
    const double y = view.gbuffer.uv[p].y * res - 0.5;
    for (int ty = 0; ty < res; ++ty)
      for (int tx = 0; tx < res; ++tx) {
        const double w = std::max(0.0, 1.0 - std::abs(x - tx)) * std::max(0.0, 1.0 - std::abs(y - ty));
        if (w == 0.0) continue;
        D[ty * res + tx] += w;
        for (int c = 0; c < 3; ++c) U[(ty * res + tx) * 3 + c] += w * view.features.pixel(p)[c];
      }
  }
  for (std::size_t i = 0; i < D.size(); ++i) EXPECT_NEAR(lvl.D[i], D[i], 1e-12);
  for (std::size_t i = 0; i < U.size(); ++i) EXPECT_NEAR(lvl.U[i], U[i], 1e-12);
}

TEST(SplatLevel, RejectsBadInput) {
  auto v = one_pixel({0.5, 0.5}, {1.0});
  v.features.data[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(splat::splat_level(v.gbuffer, v.features, 4), Error);
  v.features.data[0] = 1.0;
  EXPECT_THROW(splat::splat_level(v.gbuffer, v.features, 0), Error);
  EXPECT_THROW(splat::splat_level(v.gbuffer, FeatureMap(2, 1, 1), 4), Error);
}

TEST(SplatLevel, UncoveredPixelsContributeNothing) {
  auto v = one_pixel({0.5, 0.5}, {7.0});
  v.gbuffer.mask[0] = 0;
  v.gbuffer.face_id[0] = raster::kEmpty;
  const auto lvl = splat::splat_level(v.gbuffer, v.features, 4);
  for (double d : lvl.D) EXPECT_EQ(d, 0.0);
  for (double u : lvl.U) EXPECT_EQ(u, 0.0);
}

TEST(Confidence, FacingOrthogonalAndAway) {
  EXPECT_NEAR(splat::confidence_scores(one_pixel({0.5, 0.5}, {1.0}, 0.0).gbuffer,
                                       one_pixel({0.5, 0.5}, {1.0}).camera)[0],
              1.0, 1e-15);
  const auto side = one_pixel({0.5, 0.5}, {1.0}, 0.5 * kPi);
  EXPECT_NEAR(splat::confidence_scores(side.gbuffer, side.camera)[0], 0.0, 1e-15);
  const auto away = one_pixel({0.5, 0.5}, {1.0}, 0.8 * kPi);
  EXPECT_EQ(splat::confidence_scores(away.gbuffer, away.camera)[0], 0.0);
}

TEST(Confidence, MonotoneInIncidence) {
  double prev = -1.0;
  for (int i = 20; i >= 0; --i) {
    const auto v = one_pixel({0.4, 0.6}, {1.0}, 0.5 * kPi * i / 20.0);
    const auto C = splat::splat_confidence(v.gbuffer, v.camera, 8);
    double total = 0.0;
    for (double c : C) total += c;
    EXPECT_GE(total, prev);
    prev = total;
  }
}

TEST(Pyramid, SingleLevelIsOneSplat) {
  synth::Rng rng(15);
  const auto view = synth::random_view(rng, 12, 12, 2, 0.5);
  const auto cfg = tiny_config(16, 1, 1);
  const auto pyr = splat::build_pyramid(view.gbuffer, view.features, view.camera, cfg);
  ASSERT_EQ(pyr.num_levels(), 1);
  const auto lvl = splat::splat_level(view.gbuffer, view.features, 16);
  EXPECT_EQ(pyr.levels[0].U, lvl.U);
  EXPECT_EQ(pyr.levels[0].D, lvl.D);
  EXPECT_EQ(pyr.levels[0].C, splat::splat_confidence(view.gbuffer, view.camera, 16));
}

TEST(Pyramid, DensityMassIsLevelInvariantForInRangeUVs) {
  synth::Rng rng(16);
  // uv within [1/8, 7/8] keeps every tap in range down to res 4.
  const auto view = synth::random_view(rng, 16, 16, 1, 0.6, 0.125, 0.875);
  const auto pyr = splat::build_pyramid(view.gbuffer, view.features, view.camera, tiny_config(32, 4, 1));
  const double covered = static_cast<double>(view.gbuffer.covered_count());
  for (const auto& lvl : pyr.levels) {
    double mass = 0.0;
    for (double d : lvl.D) mass += d;
    EXPECT_NEAR(mass, covered, 1e-9) << lvl.res;
  }
}

TEST(Pyramid, CoarseLevelsAreDenser) {
  synth::Rng rng(17);
  const auto view = synth::random_view(rng, 16, 16, 1, 0.3);
  const auto pyr = splat::build_pyramid(view.gbuffer, view.features, view.camera, tiny_config(64, 3, 1));
  auto zero_fraction = [](const splat::PyramidLevel& l) {
    double zeros = 0.0;
    for (double d : l.D) zeros += d == 0.0;
    return zeros / static_cast<double>(l.D.size());
  };
  EXPECT_LT(zero_fraction(pyr.levels[2]), zero_fraction(pyr.levels[0]));
}

TEST(Pyramid, LevelsReducedWithDiagnostic) {
  auto v = one_pixel({0.5, 0.5}, {1.0});
  const auto pyr = splat::build_pyramid(v.gbuffer, v.features, v.camera, tiny_config(4, 6, 1));
  EXPECT_EQ(pyr.num_levels(), 3);
  ASSERT_FALSE(pyr.diagnostics.empty());
  EXPECT_EQ(pyr.diagnostics[0].code, "levels_reduced");
}

TEST(Pyramid, ZeroDensityImpliesZeroSums) {
  synth::Rng rng(18);
  const auto view = synth::random_view(rng, 10, 10, 3, 0.4);
  const auto pyr = splat::build_pyramid(view.gbuffer, view.features, view.camera, tiny_config(32, 3, 1));
  for (const auto& lvl : pyr.levels)
    for (std::size_t t = 0; t < lvl.D.size(); ++t) {
      EXPECT_GE(lvl.D[t], 0.0);
      EXPECT_GE(lvl.C[t], 0.0);
      if (lvl.D[t] == 0.0) {
        EXPECT_EQ(lvl.C[t], 0.0);
        for (int c = 0; c < 3; ++c) EXPECT_EQ(lvl.U[t * 3 + c], 0.0);
      }
    }
}

TEST(Resampler, RowsArePartitionsOfUnity) {
  for (auto [src, dst] : {std::pair{4, 16}, std::pair{8, 8}, std::pair{1, 5}, std::pair{32, 256}}) {
    const splat::Resampler r(src, dst);
    for (const auto& w : r.weight) EXPECT_NEAR(w[0] + w[1] + w[2] + w[3], 1.0, 1e-15);
  }
  const splat::Resampler same(8, 8);
  std::vector<double> img(64);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  EXPECT_EQ(same.apply(img), img);
}

TEST(HoleFill, SaturatedTexelKeepsItsOwnValue) {
  const auto v = one_pixel({(1 + 0.5) / 8.0, (6 + 0.5) / 8.0}, {0.3, -2.0});
  const auto cfg = tiny_config(8, 3, 1);
  const auto pyr = splat::build_pyramid(v.gbuffer, v.features, v.camera, cfg);
  const auto hf = splat::hole_fill(pyr, cfg);
  const std::size_t t = 6 * 8 + 1;
  EXPECT_NEAR(hf.filled[t * 2 + 0], 0.3, 1e-15);
  EXPECT_NEAR(hf.filled[t * 2 + 1], -2.0, 1e-15);
}

TEST(HoleFill, EmptyFineTexelsTakeTheCoarseValue) {
  const auto v = one_pixel({0.3, 0.7}, {0.42});
  const auto cfg = tiny_config(16, 3, 1);
  const auto pyr = splat::build_pyramid(v.gbuffer, v.features, v.camera, cfg);
  const auto hf = splat::hole_fill(pyr, cfg);
  int filled_from_coarse = 0;
  for (std::size_t t = 0; t < hf.filled.size(); ++t) {
    if (hf.weight[t] == 0.0) {
      EXPECT_EQ(hf.filled[t], 0.0);
      continue;
    }
    EXPECT_NEAR(hf.filled[t], 0.42, 1e-15);
    filled_from_coarse += pyr.levels[0].D[t] == 0.0;
  }
  EXPECT_GT(filled_from_coarse, 0);
}

TEST(HoleFill, ConstantInputStaysConstant) {
  synth::Rng rng(19);
  auto view = synth::random_view(rng, 16, 16, 2, 0.2);
  for (double& x : view.features.data) x = 1.75;
  const auto cfg = tiny_config(64, 4, 1);
  const auto hf = splat::hole_fill(splat::build_pyramid(view.gbuffer, view.features, view.camera, cfg), cfg);
  int covered = 0;
  for (std::size_t t = 0; t < hf.weight.size(); ++t) {
    for (int c = 0; c < 2; ++c) {
      ASSERT_TRUE(std::isfinite(hf.filled[t * 2 + c]));
      if (hf.weight[t] > 0.0) EXPECT_NEAR(hf.filled[t * 2 + c], 1.75, 1e-12);
      else EXPECT_EQ(hf.filled[t * 2 + c], 0.0);
    }
    covered += hf.weight[t] > 0.0;
  }
  EXPECT_GT(covered, 0);
}

TEST(HoleFill, AllZeroDensityWarns) {
  auto v = one_pixel({0.5, 0.5}, {1.0});
  v.gbuffer.mask[0] = 0;
  v.gbuffer.face_id[0] = raster::kEmpty;
  const auto cfg = tiny_config(8, 2, 1);
  const auto hf = splat::hole_fill(splat::build_pyramid(v.gbuffer, v.features, v.camera, cfg), cfg);
  for (double x : hf.filled) EXPECT_EQ(x, 0.0);
  bool warned = false;
  for (const auto& d : hf.diagnostics) warned = warned || d.code == "no_coverage";
  EXPECT_TRUE(warned);
}

TEST(HoleFill, AdjointOfApply) {
  synth::Rng rng(20);
  const auto view = synth::random_view(rng, 12, 12, 2, 0.3);
  const auto cfg = tiny_config(32, 3, 1);
  const auto pyr = splat::build_pyramid(view.gbuffer, view.features, view.camera, cfg);
  const auto plan = splat::plan_hole_fill(pyr, cfg);
  std::vector<std::vector<double>> sums;
  for (const auto& l : pyr.levels) {
    std::vector<double> s(l.U.size());
    for (double& x : s) x = rng.normal();
    sums.push_back(s);
  }
  std::vector<double> g(32 * 32 * 2);
  for (double& x : g) x = rng.normal();
  const auto out = splat::apply_hole_fill(plan, sums);
  const auto back = splat::hole_fill_adjoint(plan, g);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) lhs += out[i] * g[i];
  for (std::size_t l = 0; l < sums.size(); ++l)
    for (std::size_t i = 0; i < sums[l].size(); ++i) rhs += sums[l][i] * back[l][i];
  EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(lhs)));
}

std::vector<splat::UVPyramid> pyramids(const std::vector<synth::RandomView>& views, const FusionConfig& cfg) {
  std::vector<splat::UVPyramid> out;
  for (const auto& v : views) out.push_back(splat::build_pyramid(v.gbuffer, v.features, v.camera, cfg));
  return out;
}

TEST(Fuse, SingleActiveViewReproducesItsFill) {
  synth::Rng rng(21);
  std::vector<synth::RandomView> views;
  for (int k = 0; k < 3; ++k) views.push_back(synth::random_view(rng, 16, 16, 3, 0.5));
  auto cfg = tiny_config(32, 3, 3);
  cfg.gamma = {0.0, 1.0, 0.0};
  const auto pyrs = pyramids(views, cfg);
  const auto fused = splat::fuse(pyrs, cfg);
  const auto hf = splat::hole_fill(pyrs[1], cfg);
  int checked = 0;
  for (std::size_t t = 0; t < fused.total_weight.size(); ++t) {
    if (fused.total_weight[t] <= cfg.epsilon) continue;
    ++checked;
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(fused.fused[t * 3 + c], hf.filled[t * 3 + c], 1e-12);
  }
  EXPECT_GT(checked, 100);
}

TEST(Fuse, TwoViewsOfAConstant) {
  synth::Rng rng(22);
  std::vector<synth::RandomView> views;
  for (int k = 0; k < 2; ++k) {
    views.push_back(synth::random_view(rng, 16, 16, 1, 0.6));
    for (double& x : views.back().features.data) x = -0.37;
  }
  for (auto mode : {splat::FusionMode::kHoleFilled, splat::FusionMode::kRawLevels}) {
    auto cfg = tiny_config(32, 3, 2);
    cfg.mode = mode;
    const auto fused = splat::fuse(pyramids(views, cfg), cfg);
    for (std::size_t t = 0; t < fused.total_weight.size(); ++t) {
      if (fused.total_weight[t] > 10.0 * cfg.epsilon) EXPECT_NEAR(fused.fused[t], -0.37, 1e-6);
      if (!fused.coverage[t]) EXPECT_EQ(fused.fused[t], 0.0);
    }
  }
}

TEST(Fuse, MatchesOracleOnTinyInstances) {
  synth::Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<oracle::OracleView> ov;
    std::vector<synth::RandomView> views;
    for (int k = 0; k < 2; ++k) {
      views.push_back(synth::random_view(rng, 4, 4, 2, 0.7));
      ov.push_back({views.back().gbuffer, views.back().features, views.back().camera});
    }
    auto cfg = tiny_config(4, 2, 2);
    cfg.gamma = {rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
    cfg.mode = trial % 2 ? splat::FusionMode::kRawLevels : splat::FusionMode::kHoleFilled;
    const auto got = splat::fuse(pyramids(views, cfg), cfg);
    const auto want = oracle::oracle_fuse(ov, cfg);
    for (std::size_t i = 0; i < got.fused.size(); ++i) EXPECT_NEAR(got.fused[i], want.fused[i], 1e-9);
    for (std::size_t i = 0; i < got.total_weight.size(); ++i)
      EXPECT_NEAR(got.total_weight[i], want.total_weight[i], 1e-9);
  }
}

TEST(Fuse, SuperpositionHolds) {
  synth::Rng rng(24);
  std::vector<synth::RandomView> a, b, mix;
  for (int k = 0; k < 2; ++k) {
    a.push_back(synth::random_view(rng, 12, 12, 2, 0.5));
    b.push_back(a.back());
    mix.push_back(a.back());
    for (std::size_t i = 0; i < b.back().features.data.size(); ++i) {
      b.back().features.data[i] = rng.normal();
      mix.back().features.data[i] = 2.0 * a.back().features.data[i] - 0.5 * b.back().features.data[i];
    }
  }
  for (auto mode : {splat::FusionMode::kHoleFilled, splat::FusionMode::kRawLevels}) {
    auto cfg = tiny_config(16, 3, 2);
    cfg.mode = mode;
    const auto fa = splat::fuse(pyramids(a, cfg), cfg);
    const auto fb = splat::fuse(pyramids(b, cfg), cfg);
    const auto fm = splat::fuse(pyramids(mix, cfg), cfg);
    for (std::size_t i = 0; i < fm.fused.size(); ++i)
      EXPECT_NEAR(fm.fused[i], 2.0 * fa.fused[i] - 0.5 * fb.fused[i], 1e-10);
  }
}

TEST(FuseBackward, ZeroGradientAndShapeChecks) {
  synth::Rng rng(25);
  std::vector<synth::RandomView> views{synth::random_view(rng, 8, 8, 2, 0.5), synth::random_view(rng, 8, 8, 2, 0.5)};
  const auto cfg = tiny_config(16, 2, 2);
  splat::FusionState state;
  splat::fuse(pyramids(views, cfg), cfg, &state);
  const auto grads = splat::fuse_backward(state, std::vector<double>(16 * 16 * 2, 0.0));
  ASSERT_EQ(grads.size(), 2u);
  for (const auto& g : grads) {
    EXPECT_EQ(g.width, 8);
    for (double x : g.data) EXPECT_EQ(x, 0.0);
  }
  EXPECT_THROW(splat::fuse_backward(state, std::vector<double>(16 * 16, 0.0)), Error);
}

TEST(FuseBackward, AdjointIdentity) {
  synth::Rng rng(26);
  for (auto mode : {splat::FusionMode::kHoleFilled, splat::FusionMode::kRawLevels}) {
    std::vector<synth::RandomView> views;
    for (int k = 0; k < 3; ++k) views.push_back(synth::random_view(rng, 10, 10, 2, 0.5));
    auto cfg = tiny_config(32, 3, 3);
    cfg.mode = mode;
    splat::FusionState state;
    const auto fwd = splat::fuse(pyramids(views, cfg), cfg, &state);
    std::vector<double> g(fwd.fused.size());
    for (double& x : g) x = rng.normal();
    const auto back = splat::fuse_backward(state, g);
    double lhs = 0.0, rhs = 0.0, nf = 0.0, ng = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      lhs += fwd.fused[i] * g[i];
      ng += g[i] * g[i];
    }
    for (std::size_t k = 0; k < views.size(); ++k)
      for (std::size_t i = 0; i < back[k].data.size(); ++i) {
        rhs += views[k].features.data[i] * back[k].data[i];
        nf += views[k].features.data[i] * views[k].features.data[i];
      }
    EXPECT_LE(std::abs(lhs - rhs) / std::sqrt(nf * ng), 1e-10);
  }
}

TEST(FusionConfig, ValidateRejectsBadValues) {
  FusionConfig cfg;
  EXPECT_NO_THROW(cfg.validate(6));
  EXPECT_THROW(cfg.validate(7), Error);
  cfg.gamma = {0.0, 0.0};
  EXPECT_THROW(cfg.validate(2), Error);
  cfg = FusionConfig{};
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(1), Error);
  cfg = FusionConfig{};
  cfg.density_tau = -1.0;
  EXPECT_THROW(cfg.validate(1), Error);
}

TEST(Fuse, MismatchedPyramidsAreRejected) {
  synth::Rng rng(27);
  const auto v = synth::random_view(rng, 8, 8, 2, 0.5);
  const auto pa = splat::build_pyramid(v.gbuffer, v.features, v.camera, tiny_config(16, 2, 1));
  const auto pb = splat::build_pyramid(v.gbuffer, v.features, v.camera, tiny_config(8, 2, 1));
  const std::vector<splat::UVPyramid> pyrs{pa, pb};
  EXPECT_THROW(splat::fuse(pyrs, tiny_config(16, 2, 2)), Error);
}

}  // namespace
