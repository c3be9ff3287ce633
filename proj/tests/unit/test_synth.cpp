#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "uvfuse/oracle.hpp"
#include "uvfuse/synth.hpp"

namespace {

using namespace uvfuse;
using synth::SceneSpec;
using synth::Shape;

TEST(Icosphere, EulerCounts) {
  for (int s = 0; s <= 4; ++s) {
    std::vector<Vec3> v;
    std::vector<geometry::Face> f;
    synth::icosphere(s, v, f);
    const std::size_t faces = 20u << (2 * s);
    EXPECT_EQ(f.size(), faces);
    EXPECT_EQ(v.size(), faces / 2 + 2);  // V - E + F = 2 with E = 3F/2
  }
  SceneSpec spec;
  spec.subdiv = 2;
  const auto scene = synth::make_scene(spec);
  EXPECT_EQ(scene.mesh.vertices.size(), 162u);
  EXPECT_EQ(scene.mesh.faces.size(), 320u);
}

TEST(MakeScene, UnitEllipsoidIsOnTheSphere) {
  SceneSpec spec;
  spec.shape = Shape::kEllipsoid;
  spec.subdiv = 3;
  const auto scene = synth::make_scene(spec);
  for (const Vec3& p : scene.mesh.vertices) EXPECT_NEAR(norm(p), 1.0, 1e-9);
}

TEST(MakeScene, EllipsoidVerticesLieOnTheSurface) {
  SceneSpec spec;
  spec.shape = Shape::kEllipsoid;
  spec.subdiv = 2;
  spec.a = 1.0;
  spec.b = 0.8;
  spec.c = 1.2;
  const auto scene = synth::make_scene(spec);
  for (const Vec3& p : scene.mesh.vertices) {
    const double r = p.x * p.x + p.y * p.y / 0.64 + p.z * p.z / 1.44;
    EXPECT_NEAR(r, 1.0, 1e-12);
  }
}

TEST(MakeScene, GridInteriorLaplacianIsZero) {
  SceneSpec spec;
  spec.shape = Shape::kGrid;
  spec.grid_n = 4;
  spec.uv_layout = synth::UVLayout::kPlanar;
  const auto scene = synth::make_scene(spec);
  EXPECT_EQ(scene.mesh.vertices.size(), 25u);
  const auto lap = geometry::vertex_laplacian(scene.mesh, scene.mesh.vertices);
  for (int y = 1; y < 4; ++y)
    for (int x = 1; x < 4; ++x) EXPECT_LE(norm(lap.delta[static_cast<std::size_t>(y * 5 + x)]), 1e-15);
}

TEST(MakeScene, EveryVariantValidatesAndIsDeterministic) {
  std::vector<SceneSpec> specs;
  for (auto layout : {synth::UVLayout::kSpherical, synth::UVLayout::kPerFaceAtlas}) {
    SceneSpec s;
    s.subdiv = 2;
    s.uv_layout = layout;
    specs.push_back(s);
    s.shape = Shape::kEllipsoid;
    s.a = 0.9;
    s.b = 1.1;
    s.c = 1.3;
    specs.push_back(s);
  }
  for (auto layout : {synth::UVLayout::kPlanar, synth::UVLayout::kPerFaceAtlas}) {
    SceneSpec s;
    s.shape = Shape::kGrid;
    s.grid_n = 5;
    s.uv_layout = layout;
    specs.push_back(s);
  }
  for (const auto& spec : specs) {
    const auto a = synth::make_scene(spec);
    const auto b = synth::make_scene(spec);
    EXPECT_NO_THROW(a.mesh.validate());
    EXPECT_NO_THROW(a.model.validate());
    EXPECT_EQ(a.mesh.vertices, b.mesh.vertices);
    EXPECT_EQ(a.mesh.faces, b.mesh.faces);
    EXPECT_EQ(a.mesh.mirror, b.mesh.mirror);
    for (std::size_t f = 0; f < a.mesh.uv_corners.size(); ++f)
      for (int k = 0; k < 3; ++k) EXPECT_EQ(a.mesh.uv_corners[f][k], b.mesh.uv_corners[f][k]);
    for (std::size_t i = 0; i < a.mesh.mirror.size(); ++i)
      EXPECT_EQ(a.mesh.mirror[static_cast<std::size_t>(a.mesh.mirror[i])], static_cast<int>(i));
  }
}

TEST(MakeScene, RejectsInvalidSpecs) {
  SceneSpec s;
  s.subdiv = -1;
  EXPECT_THROW(synth::make_scene(s), Error);
  s = SceneSpec{};
  s.shape = Shape::kEllipsoid;
  s.b = 0.0;
  EXPECT_THROW(synth::make_scene(s), Error);
  s = SceneSpec{};
  s.cells = 0;
  EXPECT_THROW(synth::make_scene(s), Error);
  s = SceneSpec{};
  s.uv_layout = synth::UVLayout::kPlanar;
  EXPECT_THROW(synth::make_scene(s), Error);
}

TEST(MakeScene, LatitudeBandsDriveLabelsAndWeights) {
  SceneSpec spec;
  spec.subdiv = 3;
  const auto scene = synth::make_scene(spec);
  for (std::size_t i = 0; i < scene.mesh.vertices.size(); ++i) {
    const double lat = std::asin(std::clamp(scene.mesh.vertices[i].y, -1.0, 1.0)) * 180.0 / kPi;
    const auto label = scene.mesh.labels[i];
    if (lat >= spec.label_rule.hair_above_deg + 1e-9) EXPECT_EQ(label, geometry::Label::kHair);
    else if (lat < spec.label_rule.boundary_above_deg - 1e-9) EXPECT_EQ(label, geometry::Label::kFace);
    EXPECT_EQ(scene.mesh.lap_weights[i], spec.region_weights(label));
  }
}

TEST(MakeScene, SphericalSeamFacesStayCompact) {
  SceneSpec spec;
  spec.subdiv = 3;
  const auto scene = synth::make_scene(spec);
  EXPECT_FALSE(scene.seam_faces.empty());
  for (const auto& uv : scene.mesh.uv_corners) {
    const double lo = std::min({uv[0].x, uv[1].x, uv[2].x});
    const double hi = std::max({uv[0].x, uv[1].x, uv[2].x});
    EXPECT_LE(hi - lo, 0.5);
  }
}

TEST(MirrorPairs, UnpairedVerticesMapToSelf) {
  const std::vector<Vec3> pts{{0.5, 0, 0}, {-0.5, 0, 0}, {0.3, 1, 0}, {0, 2, 0}, {-0.31, 1, 0}};
  Diagnostics diags;
  const auto m = synth::mirror_pairs(pts, 1e-6, &diags);
  EXPECT_EQ(m, (std::vector<int>{1, 0, 2, 3, 4}));
  std::size_t unpaired = 0;
  for (const auto& d : diags) unpaired += d.code == "unpaired_vertex";
  EXPECT_EQ(unpaired, 2u);  // vertices 2 and 4 miss by 0.01
}

TEST(Ellipsoid, IntersectAndDistance) {
  const synth::Ellipsoid e{1.0, 0.8, 1.2, {}};
  const auto hit = e.intersect({0, 0, 5}, {0, 0, -1});
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(*hit, 5.0 - 1.2, 1e-12);
  EXPECT_FALSE(e.intersect({0, 0, 5}, {0, 0, 1}).has_value());
  EXPECT_FALSE(e.intersect({3, 0, 5}, {0, 0, -1}).has_value());
  EXPECT_NEAR(e.distance({0, 0, 0}), 0.8, 1e-12);
  EXPECT_NEAR(e.distance({2, 0, 0}), 1.0, 1e-12);
  EXPECT_NEAR(e.distance({0, 0.5, 0}), 0.3, 1e-12);
  synth::Rng rng(39);
  for (int i = 0; i < 200; ++i) {
    const Vec3 d = normalized({rng.normal(), rng.normal(), rng.normal()});
    const Vec3 s{d.x * e.a, d.y * e.b, d.z * e.c};
    const Vec3 n = e.normal_at(s);
    EXPECT_NEAR(norm(n), 1.0, 1e-12);
    EXPECT_LE(e.distance(s), 1e-9);
    const double t = rng.uniform(-0.3, 0.3);  // along the normal the distance is |t| near the surface
    EXPECT_NEAR(e.distance(s + n * t), std::abs(t), 1e-9);
  }
}

TEST(AnalyticNormals, SphereCenterPixelFacesTheViewer) {
  const synth::Ellipsoid sphere{1.0, 1.0, 1.0, {}};
  const auto rig = geometry::six_view_rig(4.0, {0, 0, 0}, {33, 33, 40.0});
  const auto maps = synth::analytic_normal_maps(sphere, rig);
  ASSERT_EQ(maps.size(), 6u);
  for (std::size_t k = 0; k < rig.size(); ++k) {
    const Vec3 view = rig[k].rotation.row(2);
    EXPECT_LE(norm(maps[k].normal[16 * 33 + 16] + view), 1e-12);
    EXPECT_EQ(maps[k].normal[0], Vec3{});  // corner ray misses
    for (const Vec3& n : maps[k].normal)
      if (n != Vec3{}) EXPECT_NEAR(norm(n), 1.0, 1e-12);
  }
}

double median_angle_error(int subdiv, const synth::Ellipsoid& e, const geometry::Camera& cam) {
  SceneSpec spec;
  spec.shape = Shape::kEllipsoid;
  spec.subdiv = subdiv;
  spec.a = e.a;
  spec.b = e.b;
  spec.c = e.c;
  const auto scene = synth::make_scene(spec);
  const auto gb = raster::rasterize(scene.mesh, scene.mesh.vertices, cam);
  const std::vector<geometry::Camera> cams{cam};
  const auto maps = synth::analytic_normal_maps(e, cams);
  std::vector<double> err;
  for (std::size_t i = 0; i < gb.size(); ++i)
    if (gb.mask[i] && maps[0].normal[i] != Vec3{})
      err.push_back(std::acos(std::clamp(dot(gb.normal[i], maps[0].normal[i]), -1.0, 1.0)));
  std::nth_element(err.begin(), err.begin() + static_cast<long>(err.size() / 2), err.end());
  return err[err.size() / 2];
}

TEST(AnalyticNormals, AgreeWithRasterizedMeshAndConverge) {
  const synth::Ellipsoid e{1.0, 0.8, 1.2, {}};
  const auto cam = geometry::six_view_rig(4.0, {0, 0, 0}, {128, 128, 40.0})[1];
  const double e2 = median_angle_error(2, e, cam);
  const double e3 = median_angle_error(3, e, cam);
  const double e4 = median_angle_error(4, e, cam);
  EXPECT_LT(e3, e2);
  EXPECT_LT(e4, e3);
  EXPECT_LE(median_angle_error(5, e, cam), 0.02);
}

TEST(Landmarks, VisibleInTheirCameras) {
  SceneSpec spec;
  spec.subdiv = 3;
  const auto scene = synth::make_scene(spec);
  const synth::Ellipsoid e{1.0, 0.8, 1.2, {}};
  const auto rig = geometry::six_view_rig(4.0, {0, 0, 0}, {256, 256, 40.0});
  const auto verts = synth::default_landmark_vertices(scene.mesh, 8);
  for (std::size_t i = 0; i < scene.mesh.labels.size(); ++i)
    if (scene.mesh.labels[i] == geometry::Label::kFace)
      EXPECT_TRUE(std::find(verts.begin(), verts.end(), static_cast<int>(i)) != verts.end());
  const auto set = synth::ellipsoid_landmarks(scene.mesh, e, rig, verts);
  EXPECT_NO_THROW(set.validate(scene.mesh.vertices.size(), rig));
  ASSERT_FALSE(set.entries.empty());
  for (const auto& l : set.entries) {
    const Vec3 d = normalized(scene.mesh.vertices[static_cast<std::size_t>(l.vertex)]);
    const Vec3 p{d.x * e.a, d.y * e.b, d.z * e.c};
    const auto pr = geometry::project(rig[static_cast<std::size_t>(l.camera)], p);
    EXPECT_NEAR(pr.pixel.x, l.target.x, 1e-9);
    EXPECT_NEAR(pr.pixel.y, l.target.y, 1e-9);
    const Vec3 to_cam = normalized(rig[static_cast<std::size_t>(l.camera)].center() - p);
    EXPECT_GT(dot(e.normal_at(p), to_cam), 0.0);
  }
}

TEST(Features, ConstantAndNormalRules) {
  synth::Rng rng(40);
  const auto view = synth::random_view(rng, 8, 8, 3, 0.5);
  const auto c = synth::make_features(view.gbuffer, synth::FeatureRule::kConstant, 8, 0.73);
  const auto n = synth::make_features(view.gbuffer, synth::FeatureRule::kNormalsAsRgb, 8, 0.0);
  const auto k = synth::make_features(view.gbuffer, synth::FeatureRule::kCheckerboard, 4, 0.0);
  for (std::size_t i = 0; i < view.gbuffer.size(); ++i) {
    if (!view.gbuffer.mask[i]) continue;
    for (int ch = 0; ch < 3; ++ch) EXPECT_EQ(c.pixel(i)[ch], 0.73);
    EXPECT_NEAR(n.pixel(i)[0], 0.5 * (view.gbuffer.normal[i].x + 1.0), 1e-15);
    EXPECT_TRUE(k.pixel(i)[0] == 0.0 || k.pixel(i)[0] == 1.0);
    EXPECT_EQ(k.pixel(i)[0] + k.pixel(i)[1], 1.0);
  }
}

TEST(Rng, DeterministicAndInRange) {
  synth::Rng a(41), b(41), c(42);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
    differs = differs || x != c.uniform();
    const int k = a.uniform_int(-3, 3);
    b.uniform_int(-3, 3);
    EXPECT_GE(k, -3);
    EXPECT_LE(k, 3);
  }
  EXPECT_TRUE(differs);
  synth::Rng r1(43), r2(43);
  const auto v1 = synth::random_view(r1, 10, 10, 2, 0.5);
  const auto v2 = synth::random_view(r2, 10, 10, 2, 0.5);
  EXPECT_TRUE(v1.gbuffer == v2.gbuffer);
  EXPECT_EQ(v1.features.data, v2.features.data);
}

// One pixel, one view, one level: the hand-computed bilinear spread.
TEST(OracleFuse, SinglePixelHandComputed) {
  oracle::OracleView v;
  v.camera.fx = v.camera.fy = 1.0;
  v.camera.cx = v.camera.cy = 0.5;
  v.gbuffer = raster::GBuffer(1, 1);
  v.gbuffer.mask[0] = 1;
  v.gbuffer.face_id[0] = 0;
  v.gbuffer.bary[0] = {1.0, 0.0, 0.0};
  v.gbuffer.uv[0] = {0.3, 0.4};
  v.gbuffer.depth[0] = 2.0;
  v.gbuffer.normal[0] = {0.0, 0.0, -1.0};
  v.features = splat::FeatureMap(1, 1, 2);
  v.features.data = {0.25, -4.0};
  splat::FusionConfig cfg;
  cfg.base_res = 4;
  cfg.num_levels = 1;
  cfg.gamma = {0.5};
  const auto out = oracle::oracle_fuse(std::span(&v, 1), cfg);
  // (u, v) * 4 - 0.5 = (0.7, 1.1): texels (0,1) (1,1) (0,2) (1,2).
  std::vector<double> w(16, 0.0);
  w[1 * 4 + 0] = 0.3 * 0.9;
  w[1 * 4 + 1] = 0.7 * 0.9;
  w[2 * 4 + 0] = 0.3 * 0.1;
  w[2 * 4 + 1] = 0.7 * 0.1;
  for (std::size_t t = 0; t < 16; ++t) {
    // Facing the camera: confidence sum equals density, so W = gamma * D^2.
    EXPECT_NEAR(out.total_weight[t], 0.5 * w[t] * w[t], 1e-15) << t;
    EXPECT_NEAR(out.fused[2 * t], w[t] > 0.0 ? 0.25 : 0.0, 1e-15);
    EXPECT_NEAR(out.fused[2 * t + 1], w[t] > 0.0 ? -4.0 : 0.0, 1e-15);
  }
}

TEST(OracleFuse, RejectsOversizeInstances) {
  synth::Rng rng(44);
  const auto rv = synth::random_view(rng, 4, 4, 1, 0.5);
  std::vector<oracle::OracleView> views(1, {rv.gbuffer, rv.features, rv.camera});
  splat::FusionConfig cfg;
  cfg.base_res = 16;
  cfg.num_levels = 1;
  EXPECT_THROW(oracle::oracle_fuse(views, cfg), Error);
  cfg.base_res = 8;
  cfg.num_levels = 3;
  EXPECT_THROW(oracle::oracle_fuse(views, cfg), Error);
  cfg.num_levels = 2;
  views.resize(4, views[0]);
  EXPECT_THROW(oracle::oracle_fuse(views, cfg), Error);
}

TEST(OracleGradcheck, ExactOnQuadratics) {
  synth::Rng rng(45);
  const std::size_t n = 12;
  std::vector<double> A(n * n), b(n), x(n);
  for (double& v : A) v = rng.normal();
  for (double& v : b) v = rng.normal();
  for (double& v : x) v = rng.normal();
  const auto f = [&](std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += b[i] * y[i];
      for (std::size_t j = 0; j < n; ++j) s += 0.5 * y[i] * A[i * n + j] * y[j];
    }
    return s;
  };
  std::vector<double> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    grad[i] = b[i];
    for (std::size_t j = 0; j < n; ++j) grad[i] += 0.5 * (A[i * n + j] + A[j * n + i]) * x[j];
  }
  std::vector<std::size_t> coords(n);
  for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  EXPECT_LE(oracle::oracle_gradcheck(f, x, grad, coords, 1e-2).max_rel_err, 1e-10);
  grad[5] += 1.0;
  const auto bad = oracle::oracle_gradcheck(f, x, grad, coords, 1e-2);
  EXPECT_GT(bad.max_rel_err, 1e-3);
  EXPECT_EQ(bad.worst, 5u);
}

TEST(RelativeError, UsesFloor) {
  EXPECT_EQ(oracle::relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(oracle::relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(oracle::relative_error(0.0, 1e-12, 1e-8), 1e-4);
}

}  // namespace
