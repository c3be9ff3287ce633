#include "uvfuse/checks.hpp"

#include <algorithm>
#include <cmath>

#include "uvfuse/deform.hpp"
#include "uvfuse/oracle.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/splat.hpp"
#include "uvfuse/synth.hpp"

namespace uvfuse::checks {

namespace {

struct Instance {
  std::vector<synth::RandomView> views;
  splat::FusionConfig config;
};

Instance random_instance(synth::Rng& rng, int max_res_log2, int max_views, int max_levels, int max_image) {
  Instance in;
  const int nv = rng.uniform_int(2, max_views);
  const int channels = rng.uniform_int(1, 3);
  const int w = rng.uniform_int(4, max_image);
  const int h = rng.uniform_int(4, max_image);
  const double coverage = rng.uniform(0.3, 0.9);
  for (int k = 0; k < nv; ++k) in.views.push_back(synth::random_view(rng, w, h, channels, coverage));
  in.config.base_res = 1 << rng.uniform_int(1, max_res_log2);
  in.config.num_levels = rng.uniform_int(1, max_levels);
  in.config.density_tau = rng.uniform(0.25, 2.0);
  in.config.gamma.clear();
  for (int k = 0; k < nv; ++k) in.config.gamma.push_back(rng.uniform(0.2, 1.0));
  in.config.mode = rng.uniform() < 0.5 ? splat::FusionMode::kHoleFilled : splat::FusionMode::kRawLevels;
  return in;
}

std::vector<splat::UVPyramid> pyramids(const Instance& in) {
  std::vector<splat::UVPyramid> out;
  for (const auto& v : in.views) out.push_back(splat::build_pyramid(v.gbuffer, v.features, v.camera, in.config));
  return out;
}

CheckResult finish(std::string name, double value, double tolerance, std::string detail = {}) {
  CheckResult r;
  r.name = std::move(name);
  r.value = value;
  r.tolerance = tolerance;
  r.passed = std::isfinite(value) && value <= tolerance;
  r.detail = std::move(detail);
  return r;
}

std::vector<double> flatten(const std::vector<Vec3>& v) {
  std::vector<double> out;
  out.reserve(v.size() * 3);
  for (const Vec3& p : v) {
    out.push_back(p.x);
    out.push_back(p.y);
    out.push_back(p.z);
  }
  return out;
}

std::vector<Vec3> unflatten(std::span<const double> x) {
  std::vector<Vec3> out(x.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {x[3 * i], x[3 * i + 1], x[3 * i + 2]};
  return out;
}

std::vector<std::size_t> pick_coords(synth::Rng& rng, std::size_t n, int count) {
  std::vector<std::size_t> out;
  for (int i = 0; i < count; ++i) out.push_back(static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1)));
  return out;
}

// Sphere with a small random perturbation so no two faces share a normal.
geometry::TriMesh perturbed_sphere(synth::Rng& rng, int subdiv) {
  synth::SceneSpec spec;
  spec.subdiv = subdiv;
  geometry::TriMesh mesh = synth::make_scene(spec).mesh;
  for (Vec3& v : mesh.vertices) v = v * (1.0 + 0.05 * rng.uniform(-1.0, 1.0));
  return mesh;
}

}  // namespace

CheckResult adjoint_identity(std::uint64_t seed, int instances, double tolerance) {
  synth::Rng rng(seed);
  double worst = 0.0;
  for (int it = 0; it < instances; ++it) {
    const Instance in = random_instance(rng, 6, 3, 3, 24);
    const auto pyr = pyramids(in);
    splat::FusionState state;
    const auto out = splat::fuse(pyr, in.config, &state);
    std::vector<double> g(out.fused.size());
    for (double& x : g) x = rng.normal();
    const auto back = splat::fuse_backward(state, g);

    double lhs = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) lhs += out.fused[i] * g[i];
    double rhs = 0.0;
    double ff = 0.0;
    for (std::size_t k = 0; k < in.views.size(); ++k) {
      const auto& f = in.views[k].features.data;
      for (std::size_t i = 0; i < f.size(); ++i) {
        rhs += f[i] * back[k].data[i];
        ff += f[i] * f[i];
      }
    }
    double gg = 0.0;
    for (double x : g) gg += x * x;
    const double denom = std::sqrt(ff) * std::sqrt(gg);
    if (denom > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / denom);
  }
  return finish("adjoint_identity", worst, tolerance, std::to_string(instances) + " instances");
}

CheckResult fuse_gradient(std::uint64_t seed, int coords, double h, double tolerance) {
  synth::Rng rng(seed);
  Instance in = random_instance(rng, 4, 3, 3, 12);
  const auto pyr0 = pyramids(in);
  splat::FusionState state;
  const auto out0 = splat::fuse(pyr0, in.config, &state);
  std::vector<double> g(out0.fused.size());
  for (double& x : g) x = rng.normal();
  const auto back = splat::fuse_backward(state, g);

  std::vector<double> x, grad;
  std::vector<std::size_t> covered;
  for (std::size_t k = 0; k < in.views.size(); ++k) {
    const auto& v = in.views[k];
    for (std::size_t i = 0; i < v.features.data.size(); ++i) {
      if (v.gbuffer.mask[i / static_cast<std::size_t>(v.features.channels)]) covered.push_back(x.size());
      x.push_back(v.features.data[i]);
      grad.push_back(back[k].data[i]);
    }
  }
  auto f = [&](std::span<const double> p) {
    Instance moved = in;
    std::size_t o = 0;
    for (auto& v : moved.views)
      for (double& d : v.features.data) d = p[o++];
    const auto out = splat::fuse(pyramids(moved), moved.config);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += out.fused[i] * g[i];
    return s;
  };
  std::vector<std::size_t> pick;
  for (int i = 0; i < coords && !covered.empty(); ++i)
    pick.push_back(covered[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(covered.size()) - 1))]);
  const auto r = oracle::oracle_gradcheck(f, x, grad, pick, h);
  return finish("fuse_gradient", r.max_rel_err, tolerance, std::to_string(pick.size()) + " feature coords");
}

CheckResult normal_loss_gradient(std::uint64_t seed, int coords, double h, double tolerance) {
  synth::Rng rng(seed);
  geometry::TriMesh mesh = perturbed_sphere(rng, 1);
  const auto cams = geometry::six_view_rig(3.0, {}, {32, 32, 40.0});
  std::vector<raster::GBuffer> gbs;
  std::vector<deform::NormalTarget> targets;
  for (int k = 0; k < 2; ++k) {
    gbs.push_back(raster::rasterize(mesh, mesh.vertices, cams[static_cast<std::size_t>(k)]));
    deform::NormalTarget t{32, 32, std::vector<Vec3>(32 * 32)};
    for (Vec3& n : t.normal)
      if (rng.uniform() < 0.9) n = normalized(Vec3{rng.normal(), rng.normal(), rng.normal()});
    targets.push_back(std::move(t));
  }
  const auto x = flatten(mesh.vertices);
  const auto base = deform::normal_loss(gbs, mesh, mesh.vertices, targets, {});
  const auto grad = flatten(base.grad);
  auto f = [&](std::span<const double> p) { return deform::normal_loss(gbs, mesh, unflatten(p), targets, {}).value; };
  const auto r = oracle::oracle_gradcheck(f, x, grad, pick_coords(rng, x.size(), coords), h);
  return finish("normal_loss_gradient", r.max_rel_err, tolerance);
}

CheckResult landmark_loss_gradient(std::uint64_t seed, int coords, double h, double tolerance) {
  synth::Rng rng(seed);
  std::vector<Vec3> pos;
  for (int i = 0; i < 20; ++i) {
    const Vec3 p{rng.uniform(0.1, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(2.0, 4.0)};
    pos.push_back(p);
    pos.push_back({-p.x, p.y, p.z});
  }
  // Break exact symmetry so the symmetry term is active.
  for (Vec3& p : pos) p = p + Vec3{rng.normal(), rng.normal(), rng.normal()} * 0.05;
  std::vector<int> mirror(pos.size());
  for (std::size_t i = 0; i < pos.size(); ++i) mirror[i] = static_cast<int>(i ^ 1u);

  geometry::Camera cam;
  cam.width = cam.height = 64;
  cam.fx = cam.fy = 64.0;
  cam.cx = cam.cy = 32.0;
  std::vector<geometry::Camera> cams{cam};
  deform::LandmarkSet lm;
  // Targets a few pixels from the projections: with residuals of tens of
  // pixels the loss is so large that central-difference roundoff alone
  // exceeds the tolerance on small gradient components.
  for (int i = 0; i < 15; ++i) {
    const int v = rng.uniform_int(0, static_cast<int>(pos.size()) - 1);
    const Vec2 px = geometry::project(cam, pos[static_cast<std::size_t>(v)]).pixel;
    lm.entries.push_back({v, 0, {px.x + 2.0 * rng.normal(), px.y + 2.0 * rng.normal()}});
  }
  const auto x = flatten(pos);
  const auto grad = flatten(deform::landmark_loss(pos, lm, cams, mirror, 0.1).grad);
  auto f = [&](std::span<const double> p) { return deform::landmark_loss(unflatten(p), lm, cams, mirror, 0.1).value; };
  const auto r = oracle::oracle_gradcheck(f, x, grad, pick_coords(rng, x.size(), coords), h);
  return finish("landmark_loss_gradient", r.max_rel_err, tolerance);
}

CheckResult laplacian_loss_gradient(std::uint64_t seed, int coords, double h, double tolerance) {
  synth::Rng rng(seed);
  geometry::TriMesh mesh = perturbed_sphere(rng, 1);
  for (double& w : mesh.lap_weights) w = rng.uniform(0.0, 2.0);
  const auto x = flatten(mesh.vertices);
  const auto grad = flatten(deform::laplacian_loss(mesh, mesh.vertices).grad);
  auto f = [&](std::span<const double> p) { return deform::laplacian_loss(mesh, unflatten(p)).value; };
  const auto r = oracle::oracle_gradcheck(f, x, grad, pick_coords(rng, x.size(), coords), h);
  return finish("laplacian_loss_gradient", r.max_rel_err, tolerance);
}

CheckResult fuse_oracle(std::uint64_t seed, int instances, double tolerance) {
  synth::Rng rng(seed);
  double worst = 0.0;
  for (int it = 0; it < instances; ++it) {
    const Instance in = random_instance(rng, 3, oracle::kMaxViews, oracle::kMaxLevels, 8);
    const auto out = splat::fuse(pyramids(in), in.config);
    std::vector<oracle::OracleView> ov;
    for (const auto& v : in.views) ov.push_back({v.gbuffer, v.features, v.camera});
    const auto ref = oracle::oracle_fuse(ov, in.config);
    for (std::size_t i = 0; i < ref.fused.size(); ++i) worst = std::max(worst, std::abs(ref.fused[i] - out.fused[i]));
  }
  return finish("fuse_oracle", worst, tolerance, std::to_string(instances) + " instances");
}

CheckResult tap_partition(std::uint64_t seed, int samples, double tolerance) {
  synth::Rng rng(seed);
  double worst = 0.0;
  int tested = 0;
  for (int i = 0; i < samples; ++i) {
    const int res = rng.uniform_int(1, 64);
    const Vec2 uv{rng.uniform(), rng.uniform()};
    if (!splat::in_range(uv, res)) continue;
    const auto taps = splat::splat_taps(uv, res);
    double s = 0.0;
    for (int k = 0; k < taps.count; ++k) s += taps.taps[static_cast<std::size_t>(k)].weight;
    worst = std::max(worst, std::abs(s - 1.0));
    ++tested;
  }
  return finish("tap_partition", worst, tolerance, std::to_string(tested) + " in-range samples");
}

CheckResult density_conservation(std::uint64_t seed, int instances) {
  synth::Rng rng(seed);
  double worst = 0.0;
  for (int it = 0; it < instances; ++it) {
    const int res = 1 << rng.uniform_int(1, 6);
    // Dyadic uvs on a 2^12 lattice inside the in-range band keep every
    // weight and partial sum exactly representable.
    const int q = 1 << 12;
    const int lo = q / (2 * res);
    const int hi = q - lo;
    const int w = rng.uniform_int(4, 32);
    const int h = rng.uniform_int(4, 32);
    raster::GBuffer gb(w, h);
    std::size_t count = 0;
    for (std::size_t i = 0; i < gb.size(); ++i) {
      if (rng.uniform() < 0.3) continue;
      gb.mask[i] = 1;
      gb.face_id[i] = 0;
      gb.uv[i] = {static_cast<double>(rng.uniform_int(lo, hi)) / q, static_cast<double>(rng.uniform_int(lo, hi)) / q};
      ++count;
    }
    const splat::FeatureMap f(w, h, 1, 1.0);
    const auto ls = splat::splat_level(gb, f, res);
    double total = 0.0;
    for (double d : ls.D) total += d;
    worst = std::max(worst, std::abs(total - static_cast<double>(count)));
  }
  return finish("density_conservation", worst, 0.0, std::to_string(instances) + " gbuffers, exact");
}

std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed) {
  const bool all = suite == "all";
  if (!all && suite != "adjoint" && suite != "fd" && suite != "oracle" && suite != "partition")
    throw Error("unknown suite '" + suite + "' (expected adjoint, fd, oracle, partition or all)");
  std::vector<CheckResult> out;
  if (all || suite == "adjoint") out.push_back(adjoint_identity(seed, 50, 1e-10));
  if (all || suite == "fd") {
    out.push_back(fuse_gradient(seed, 100, 1e-4, 1e-5));
    out.push_back(normal_loss_gradient(seed, 100, 1e-4, 1e-4));
    out.push_back(landmark_loss_gradient(seed, 100, 1e-4, 1e-5));
    out.push_back(laplacian_loss_gradient(seed, 100, 1e-4, 1e-6));
  }
  if (all || suite == "oracle") out.push_back(fuse_oracle(seed, 200, 1e-9));
  if (all || suite == "partition") {
    out.push_back(tap_partition(seed, 10000, 1e-12));
    out.push_back(density_conservation(seed, 100));
  }
  return out;
}

}  // namespace uvfuse::checks
