#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "uvfuse/anchor.hpp"
#include "uvfuse/checks.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/synth.hpp"

namespace uvfuse::cli {

namespace {

const std::vector<std::string> kSceneKeys = {
    "shape", "subdiv", "a", "b", "c", "grid_n", "uv_layout", "hair_above", "boundary_above", "features",
    "cells", "constant", "image", "fov", "distance", "landmark_stride", "feature_noise", "seed",
};
const std::vector<std::string> kRegionKeys = {"w_face", "w_hair", "w_boundary", "w_other"};
const std::vector<std::string> kDeformKeys = {"lambda_nml", "lambda_lmk", "lambda_lap", "lr", "iters",
                                              "reraster_every", "symmetry_weight", "targets_in_camera_space"};
const std::vector<std::string> kFusionKeys = {"gamma", "epsilon", "base_res", "num_levels", "density_tau", "mode"};
const std::vector<std::string> kPipelineKeys = {"render_view", "splat_scale"};

std::vector<std::string> concat(std::initializer_list<const std::vector<std::string>*> lists) {
  std::vector<std::string> out;
  for (const auto* l : lists) out.insert(out.end(), l->begin(), l->end());
  return out;
}

synth::SceneSpec scene_spec(const io::KeyValues& kv) {
  synth::SceneSpec s;
  const std::string shape = io::kv_string(kv, "shape", "ellipsoid");
  if (shape == "icosphere") s.shape = synth::Shape::kIcosphere;
  else if (shape == "ellipsoid") s.shape = synth::Shape::kEllipsoid;
  else if (shape == "grid") s.shape = synth::Shape::kGrid;
  else kv.fail("shape", "expected icosphere, ellipsoid or grid, got '" + shape + "'");
  s.subdiv = io::kv_int(kv, "subdiv", s.subdiv);
  s.a = io::kv_double(kv, "a", s.a);
  s.b = io::kv_double(kv, "b", s.b);
  s.c = io::kv_double(kv, "c", s.c);
  s.grid_n = io::kv_int(kv, "grid_n", s.grid_n);
  const std::string layout = io::kv_string(kv, "uv_layout", s.shape == synth::Shape::kGrid ? "planar" : "spherical");
  if (layout == "spherical") s.uv_layout = synth::UVLayout::kSpherical;
  else if (layout == "per_face_atlas") s.uv_layout = synth::UVLayout::kPerFaceAtlas;
  else if (layout == "planar") s.uv_layout = synth::UVLayout::kPlanar;
  else kv.fail("uv_layout", "expected spherical, per_face_atlas or planar, got '" + layout + "'");
  s.label_rule.hair_above_deg = io::kv_double(kv, "hair_above", s.label_rule.hair_above_deg);
  s.label_rule.boundary_above_deg = io::kv_double(kv, "boundary_above", s.label_rule.boundary_above_deg);
  const std::string features = io::kv_string(kv, "features", "checkerboard");
  if (features == "checkerboard") s.feature_rule = synth::FeatureRule::kCheckerboard;
  else if (features == "normals") s.feature_rule = synth::FeatureRule::kNormalsAsRgb;
  else if (features == "constant") s.feature_rule = synth::FeatureRule::kConstant;
  else kv.fail("features", "expected checkerboard, normals or constant, got '" + features + "'");
  s.cells = io::kv_int(kv, "cells", s.cells);
  s.constant = io::kv_double(kv, "constant", s.constant);
  s.region_weights.face = io::kv_double(kv, "w_face", s.region_weights.face);
  s.region_weights.hair = io::kv_double(kv, "w_hair", s.region_weights.hair);
  s.region_weights.boundary = io::kv_double(kv, "w_boundary", s.region_weights.boundary);
  s.region_weights.other = io::kv_double(kv, "w_other", s.region_weights.other);
  s.validate();
  return s;
}

std::vector<geometry::Camera> load_cameras(const std::vector<io::ViewEntry>& views) {
  std::vector<geometry::Camera> cams;
  for (const auto& v : views) cams.push_back(io::load_camera(v.camera));
  return cams;
}

std::string cam_name(std::size_t k) { return "cam_" + std::to_string(k) + ".txt"; }

}  // namespace

void synth(const io::KeyValues& kv, std::uint64_t seed, const fs::path& out_dir) {
  io::check_keys(kv, concat({&kSceneKeys, &kRegionKeys, &kDeformKeys, &kFusionKeys, &kPipelineKeys}));
  const synth::SceneSpec spec = scene_spec(kv);
  const int image = io::kv_int(kv, "image", 256);
  const double fov = io::kv_double(kv, "fov", 40.0);
  const double distance = io::kv_double(kv, "distance", 4.0);
  const int stride = io::kv_int(kv, "landmark_stride", 8);
  const double noise = io::kv_double(kv, "feature_noise", 0.0);
  if (image < 1) kv.fail("image", "must be >= 1");
  if (!(distance > 0.0)) kv.fail("distance", "must be > 0");
  if (noise < 0.0) kv.fail("feature_noise", "must be >= 0");
  fs::create_directories(out_dir);

  const synth::Scene target = synth::make_scene(spec);
  for (const auto& d : target.diagnostics)
    std::cerr << "synth: " << d.code << " (vertex " << d.index << "): " << d.message << "\n";
  // Ellipsoid scenes fit a unit-sphere template to the ellipsoid.
  synth::Scene templ = target;
  if (spec.shape == synth::Shape::kEllipsoid) {
    synth::SceneSpec sphere = spec;
    sphere.shape = synth::Shape::kIcosphere;
    templ = synth::make_scene(sphere);
  }

  const auto cams = geometry::six_view_rig(distance, {}, {image, image, fov});
  io::save_obj(out_dir / "mesh.obj", templ.mesh);
  io::save_labels(out_dir / "labels.txt", templ.mesh);
  io::save_obj(out_dir / "target.obj", target.mesh);
  {
    io::Tensor basis{{static_cast<std::uint32_t>(templ.model.basis.size()),
                      static_cast<std::uint32_t>(templ.mesh.vertices.size()), 3},
                     {}};
    for (const auto& field : templ.model.basis)
      for (const Vec3& v : field)
        for (int c = 0; c < 3; ++c) basis.data.push_back(static_cast<float>(v[c]));
    io::save_uvt(out_dir / "basis.uvt", basis);
  }

  std::vector<deform::NormalTarget> normals;
  const synth::Ellipsoid ell{spec.shape == synth::Shape::kEllipsoid ? spec.a : 1.0,
                             spec.shape == synth::Shape::kEllipsoid ? spec.b : 1.0,
                             spec.shape == synth::Shape::kEllipsoid ? spec.c : 1.0,
                             {}};
  if (spec.shape != synth::Shape::kGrid) normals = synth::analytic_normal_maps(ell, cams);

  synth::Rng rng(seed);
  std::vector<io::ViewEntry> views;
  for (std::size_t k = 0; k < cams.size(); ++k) {
    const auto gb = raster::rasterize(target.mesh, target.mesh.vertices, cams[k]);
    if (spec.shape == synth::Shape::kGrid) {
      deform::NormalTarget t{gb.width, gb.height, std::vector<Vec3>(gb.size())};
      for (std::size_t i = 0; i < gb.size(); ++i)
        if (gb.mask[i]) t.normal[i] = gb.normal[i];
      normals.push_back(std::move(t));
    }
    auto features = synth::make_features(gb, spec.feature_rule, spec.cells, spec.constant);
    if (noise > 0.0)
      for (std::size_t i = 0; i < gb.size(); ++i)
        if (gb.mask[i])
          for (int c = 0; c < features.channels; ++c) features.pixel(i)[c] += noise * rng.normal();
    const std::string kk = std::to_string(k);
    io::save_camera(out_dir / cam_name(k), cams[k]);
    io::save_pfm(out_dir / ("normal_" + kk + ".pfm"), io::from_normals(gb.width, gb.height, normals[k].normal));
    io::save_gbuffer(out_dir / ("gbuffer_" + kk), gb);
    io::save_uvt(out_dir / ("features_" + kk + ".uvt"), io::to_tensor(features));
    views.push_back({cam_name(k), "normal_" + kk + ".pfm", "gbuffer_" + kk, "features_" + kk + ".uvt"});
  }
  io::save_views(out_dir / "views.json", views);

  deform::LandmarkSet lm;
  const auto chosen = synth::default_landmark_vertices(templ.mesh, stride);
  if (spec.shape == synth::Shape::kGrid) {
    for (int v : chosen) {
      const auto p = geometry::project(cams[0], target.mesh.vertices[static_cast<std::size_t>(v)]);
      if (p.in_front && p.pixel.x >= 0.0 && p.pixel.y >= 0.0 && p.pixel.x <= cams[0].width &&
          p.pixel.y <= cams[0].height)
        lm.entries.push_back({v, 0, p.pixel});
    }
  } else {
    lm = synth::ellipsoid_landmarks(templ.mesh, ell, cams, chosen);
  }
  io::save_landmarks(out_dir / "landmarks.txt", lm);
}

void deform(const fs::path& mesh_path, const fs::path& labels, const fs::path& views_path, const fs::path& landmarks,
            const deform::DeformConfig& config, const fs::path& out, const fs::path& trace) {
  geometry::TriMesh mesh = io::load_obj(mesh_path);
  io::load_labels(labels, mesh);
  mesh.validate();
  const auto views = io::load_views(views_path);
  std::vector<deform::NormalView> nv;
  for (std::size_t k = 0; k < views.size(); ++k) {
    if (views[k].normal.empty()) throw Error(views_path.string() + ": view " + std::to_string(k) + " has no normal map");
    deform::NormalView v{io::load_camera(views[k].camera), io::to_normal_target(io::load_pfm(views[k].normal))};
    if (v.target.width != v.camera.width || v.target.height != v.camera.height)
      throw Error(views[k].normal.string() + ": normal map size differs from its camera");
    nv.push_back(std::move(v));
  }
  const auto lm = io::load_landmarks(landmarks);
  geometry::BlendModel model;
  model.templ = mesh;
  const auto result = deform::optimize_offsets(model, {}, nv, lm, config);
  for (const auto& d : result.diagnostics) std::cerr << "deform: " << d.code << " at " << d.index << ": " << d.message << "\n";
  geometry::TriMesh fitted = mesh;
  fitted.vertices = geometry::deformed_vertices(model, {}, result.offsets);
  io::save_obj(out, fitted);
  io::save_trace(trace, result.trace);
  if (result.aborted) throw Error("optimization aborted on a non-finite loss");
}

void splat(const fs::path& views_path, const splat::FusionConfig& config, const fs::path& out_dir) {
  const auto views = io::load_views(views_path);
  config.validate(views.size());
  std::vector<splat::UVPyramid> pyramids;
  for (std::size_t k = 0; k < views.size(); ++k) {
    if (views[k].gbuffer.empty() || views[k].features.empty())
      throw Error(views_path.string() + ": view " + std::to_string(k) + " needs gbuffer and features");
    const auto cam = io::load_camera(views[k].camera);
    const auto gb = io::load_gbuffer(views[k].gbuffer);
    const auto f = io::to_feature_map(io::load_uvt(views[k].features));
    if (gb.width != cam.width || gb.height != cam.height || f.width != gb.width || f.height != gb.height)
      throw Error(views_path.string() + ": view " + std::to_string(k) + " has mismatched image sizes");
    pyramids.push_back(splat::build_pyramid(gb, f, cam, config));
    for (const auto& d : pyramids.back().diagnostics) std::cerr << "splat: view " << k << ": " << d.message << "\n";
  }
  const auto result = splat::fuse(pyramids, config);
  for (const auto& d : result.diagnostics) std::cerr << "splat: " << d.message << "\n";
  fs::create_directories(out_dir);
  splat::FeatureMap fused(result.res, result.res, result.channels);
  fused.data = result.fused;
  io::save_uvt(out_dir / "fused.uvt", io::to_tensor(fused));
  splat::FeatureMap weight(result.res, result.res, 1);
  weight.data = result.total_weight;
  io::save_uvt(out_dir / "weight.uvt", io::to_tensor(weight));
  io::save_preview_png(out_dir / "fused.png", result.res, result.res, result.channels, result.fused);
  io::save_preview_png(out_dir / "weight.png", result.res, result.res, 1, result.total_weight);
}

void anchor(const fs::path& mesh_path, const fs::path& uvmap, const fs::path& out) {
  const geometry::TriMesh mesh = io::load_obj(mesh_path);
  const auto attrs = io::to_feature_map(io::load_uvt(uvmap));
  if (attrs.channels != anchor::kAttributeChannels)
    throw Error(uvmap.string() + ": expected " + std::to_string(anchor::kAttributeChannels) +
                " channels (r, g, b, opacity, scale)");
  // Vertex splats take the color of the texel under their first uv corner.
  std::vector<Vec3> colors(mesh.vertices.size(), Vec3{0.5, 0.5, 0.5});
  std::vector<char> seen(mesh.vertices.size(), 0);
  const int res = attrs.width;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (std::size_t k = 0; k < 3; ++k) {
      const auto v = static_cast<std::size_t>(mesh.faces[f][k]);
      if (seen[v]) continue;
      seen[v] = 1;
      const Vec2 uv = mesh.uv_corners[f][k];
      const int x = std::clamp(static_cast<int>(uv.x * res), 0, res - 1);
      const int y = std::clamp(static_cast<int>(uv.y * res), 0, res - 1);
      const double* a = attrs.pixel(static_cast<std::size_t>(y) * res + x);
      if (a[3] > 0.0) colors[v] = {std::clamp(a[0], 0.0, 1.0), std::clamp(a[1], 0.0, 1.0), std::clamp(a[2], 0.0, 1.0)};
    }
  const auto set = anchor::build_gaussians(mesh, mesh.vertices, attrs, colors);
  io::save_splats(out, set);
}

void render(const fs::path& splats, const fs::path& camera, const fs::path& out) {
  const auto set = io::load_splats(splats);
  const auto cam = io::load_camera(camera);
  const auto img = anchor::render_gaussians(set, cam);
  io::save_png(out, img.width, img.height, 4, img.data);
}

bool gradcheck(const std::string& suite, std::uint64_t seed) {
  const auto rows = checks::run_suite(suite, seed);
  bool ok = true;
  std::printf("%-26s %-12s %-12s %s\n", "check", "value", "tolerance", "result");
  for (const auto& r : rows) {
    std::printf("%-26s %-12.3e %-12.3e %s%s%s\n", r.name.c_str(), r.value, r.tolerance, r.passed ? "PASS" : "FAIL",
                r.detail.empty() ? "" : "  ", r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok;
}

void pipeline(const fs::path& spec_path, const fs::path& out_dir) {
  const io::KeyValues kv = io::load_key_values(spec_path);
  io::check_keys(kv, concat({&kSceneKeys, &kRegionKeys, &kDeformKeys, &kFusionKeys, &kPipelineKeys}));
  const auto seed = static_cast<std::uint64_t>(io::kv_int(kv, "seed", 0));
  const fs::path scene = out_dir / "scene";
  synth(kv, seed, scene);

  const deform::DeformConfig dcfg = io::deform_config(kv);
  deform(scene / "mesh.obj", scene / "labels.txt", scene / "views.json", scene / "landmarks.txt", dcfg,
         out_dir / "out.obj", out_dir / "trace.csv");

  // Splat the scene's view features through the fitted mesh.
  geometry::TriMesh fitted = io::load_obj(out_dir / "out.obj");
  const auto views = io::load_views(scene / "views.json");
  const auto cams = load_cameras(views);
  const fs::path fit = out_dir / "fit";
  std::vector<io::ViewEntry> fit_views;
  for (std::size_t k = 0; k < cams.size(); ++k) {
    const std::string kk = std::to_string(k);
    io::save_gbuffer(fit / ("gbuffer_" + kk), raster::rasterize(fitted, fitted.vertices, cams[k]));
    // Relative to fit/, so the written views file does not depend on cwd.
    fit_views.push_back({fs::path("..") / "scene" / cam_name(k), {}, "gbuffer_" + kk,
                         fs::path("..") / "scene" / ("features_" + kk + ".uvt")});
  }
  io::save_views(fit / "views.json", fit_views);

  splat::FusionConfig fcfg = io::fusion_config(kv);
  fcfg.gamma.resize(std::max(fcfg.gamma.size(), cams.size()), 1.0);
  splat(fit / "views.json", fcfg, out_dir);

  // UV attributes for anchoring: fused rgb, opacity 1 on covered texels.
  const auto fused = io::to_feature_map(io::load_uvt(out_dir / "fused.uvt"));
  const auto weight = io::to_feature_map(io::load_uvt(out_dir / "weight.uvt"));
  const double scale = io::kv_double(kv, "splat_scale", 0.01);
  splat::FeatureMap attrs(fused.width, fused.height, anchor::kAttributeChannels);
  for (std::size_t i = 0; i < fused.pixels(); ++i) {
    if (!(weight.data[i] > fcfg.epsilon)) continue;
    double* a = attrs.pixel(i);
    for (int c = 0; c < 3; ++c) a[c] = c < fused.channels ? fused.pixel(i)[c] : fused.pixel(i)[0];
    a[3] = 1.0;
    a[4] = scale;
  }
  io::save_uvt(out_dir / "attrs.uvt", io::to_tensor(attrs));
  anchor(out_dir / "out.obj", out_dir / "attrs.uvt", out_dir / "splats.uvt");

  const int view = io::kv_int(kv, "render_view", 0);
  if (view < 0 || view >= static_cast<int>(cams.size())) kv.fail("render_view", "out of range");
  render(out_dir / "splats.uvt", views[static_cast<std::size_t>(view)].camera, out_dir / "render.png");
}

}  // namespace uvfuse::cli
