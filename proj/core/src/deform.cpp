#include "uvfuse/deform.hpp"

#include <cmath>
#include <string>

#include "uvfuse/parallel.hpp"

namespace uvfuse::deform {

using geometry::Camera;
using geometry::Label;
using geometry::TriMesh;

void DeformConfig::validate() const {
  if (!(lr > 0.0)) throw Error("lr must be > 0");
  if (iters < 1) throw Error("iters must be >= 1");
  if (reraster_every < 1) throw Error("reraster_every must be >= 1");
  if (!(lambda_nml >= 0.0) || !(lambda_lmk >= 0.0) || !(lambda_lap >= 0.0))
    throw Error("loss weights must be nonnegative");
  if (!(region_weights.face >= 0.0) || !(region_weights.hair >= 0.0) || !(region_weights.boundary >= 0.0) ||
      !(region_weights.other >= 0.0))
    throw Error("region weights must be nonnegative");
}

void LandmarkSet::validate(std::size_t num_vertices, std::span<const Camera> cameras) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Landmark& e = entries[i];
    if (e.vertex < 0 || static_cast<std::size_t>(e.vertex) >= num_vertices)
      throw Error("landmark " + std::to_string(i) + " vertex index out of range");
    if (e.camera < 0 || static_cast<std::size_t>(e.camera) >= cameras.size())
      throw Error("landmark " + std::to_string(i) + " camera index out of range");
    const Camera& cam = cameras[static_cast<std::size_t>(e.camera)];
    if (!(e.target.x >= 0.0 && e.target.x <= cam.width && e.target.y >= 0.0 && e.target.y <= cam.height))
      throw Error("landmark " + std::to_string(i) + " target lies outside the image");
  }
}

std::vector<std::uint8_t> semantic_pixel_mask(const raster::GBuffer& gbuffer, const TriMesh& mesh) {
  std::vector<std::uint8_t> face_is_facial(mesh.faces.size(), 0);
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    int facial = 0;
    for (int v : mesh.faces[f]) facial += mesh.labels[static_cast<std::size_t>(v)] == Label::kFace ? 1 : 0;
    face_is_facial[f] = facial >= 2 ? 1 : 0;
  }
  std::vector<std::uint8_t> mask(gbuffer.size(), 0);
  for (std::size_t i = 0; i < gbuffer.size(); ++i)
    if (gbuffer.mask[i]) mask[i] = face_is_facial[static_cast<std::size_t>(gbuffer.face_id[i])] ? 0 : 1;
  return mask;
}

NormalLossCache build_normal_cache(std::span<const raster::GBuffer> gbuffers, const TriMesh& mesh,
                                   std::span<const NormalTarget> targets,
                                   std::span<const std::vector<std::uint8_t>> pixel_masks) {
  if (targets.size() != gbuffers.size()) throw Error("need one target normal map per gbuffer");
  if (!pixel_masks.empty() && pixel_masks.size() != gbuffers.size())
    throw Error("need one pixel mask per gbuffer");
  NormalLossCache cache;
  const std::size_t nf = mesh.faces.size();
  cache.count.assign(nf, 0.0);
  cache.reference.assign(nf, Vec3{});
  cache.target_sum.assign(nf, Vec3{});
  cache.target_sq_sum.assign(nf, 0.0);
  for (std::size_t v = 0; v < gbuffers.size(); ++v) {
    const raster::GBuffer& gb = gbuffers[v];
    const NormalTarget& tgt = targets[v];
    if (tgt.width != gb.width || tgt.height != gb.height || tgt.normal.size() != gb.size())
      throw Error("target normal map " + std::to_string(v) + " does not match its gbuffer");
    for (std::size_t i = 0; i < gb.size(); ++i) {
      if (!gb.mask[i]) continue;
      if (!pixel_masks.empty() && !pixel_masks[v][i]) continue;
      const Vec3& t = tgt.normal[i];
      if (t == Vec3{}) continue;
      const auto f = static_cast<std::size_t>(gb.face_id[i]);
      if (cache.count[f] == 0.0) cache.reference[f] = t;
      const Vec3 d = t - cache.reference[f];
      cache.count[f] += 1.0;
      cache.target_sum[f] += d;
      cache.target_sq_sum[f] += squared_norm(d);
      cache.total_pixels += 1.0;
    }
  }
  if (cache.total_pixels == 0.0)
    cache.diagnostics.push_back({"no_normal_pixels", -1, "normal loss has no contributing pixels"});
  return cache;
}

LossResult normal_loss(const NormalLossCache& cache, const TriMesh& mesh, std::span<const Vec3> positions) {
  LossResult out;
  out.grad.assign(positions.size(), Vec3{});
  out.diagnostics = cache.diagnostics;
  if (cache.total_pixels == 0.0) return out;
  const double inv_m = 1.0 / cache.total_pixels;
  double sum = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const double cnt = cache.count[f];
    if (cnt == 0.0) continue;
    const auto& face = mesh.faces[f];
    const auto ia = static_cast<std::size_t>(face[0]);
    const auto ib = static_cast<std::size_t>(face[1]);
    const auto ic = static_cast<std::size_t>(face[2]);
    const auto tn = geometry::triangle_normal(positions[ia], positions[ib], positions[ic], false);
    if (tn.degenerate) {
      // Frozen face collapsed: its pixels drop out of the loss.
      out.diagnostics.push_back({"degenerate_face", static_cast<long>(f), "frozen face became degenerate"});
      continue;
    }
    // With d = n - r and e_p = t_p - r:
    // sum_p ||n - t_p||^2 = cnt |d|^2 - 2 d . sum e + sum |e|^2
    const Vec3 d = tn.normal - cache.reference[f];
    sum += cnt * squared_norm(d) - 2.0 * dot(d, cache.target_sum[f]) + cache.target_sq_sum[f];
    const Vec3 g = (d * cnt - cache.target_sum[f]) * (2.0 * inv_m);
    geometry::triangle_normal_vjp(positions[ia], positions[ib], positions[ic], g, out.grad[ia], out.grad[ib],
                                  out.grad[ic]);
  }
  out.value = sum * inv_m;
  return out;
}

LossResult normal_loss(std::span<const raster::GBuffer> gbuffers, const TriMesh& mesh,
                       std::span<const Vec3> positions, std::span<const NormalTarget> targets,
                       std::span<const std::vector<std::uint8_t>> pixel_masks) {
  return normal_loss(build_normal_cache(gbuffers, mesh, targets, pixel_masks), mesh, positions);
}

LossResult landmark_loss(std::span<const Vec3> positions, const LandmarkSet& landmarks,
                         std::span<const Camera> cameras, std::span<const int> mirror, double symmetry_weight) {
  LossResult out;
  out.grad.assign(positions.size(), Vec3{});

  std::size_t used = 0;
  for (const Landmark& e : landmarks.entries) {
    const auto& cam = cameras[static_cast<std::size_t>(e.camera)];
    const auto proj = geometry::project(cam, positions[static_cast<std::size_t>(e.vertex)]);
    if (proj.in_front) ++used;
  }
  if (used > 0) {
    const double inv = 1.0 / static_cast<double>(used);
    for (std::size_t i = 0; i < landmarks.entries.size(); ++i) {
      const Landmark& e = landmarks.entries[i];
      const auto& cam = cameras[static_cast<std::size_t>(e.camera)];
      const Vec3& p = positions[static_cast<std::size_t>(e.vertex)];
      const auto proj = geometry::project(cam, p);
      if (!proj.in_front) {
        out.diagnostics.push_back({"landmark_behind_camera", static_cast<long>(i), "landmark excluded"});
        continue;
      }
      const Vec2 r = proj.pixel - e.target;
      out.value += (r.x * r.x + r.y * r.y) * inv;
      const auto J = geometry::projection_jacobian(cam, p);
      out.grad[static_cast<std::size_t>(e.vertex)] += (J[0] * r.x + J[1] * r.y) * (2.0 * inv);
    }
  } else if (!landmarks.entries.empty()) {
    out.diagnostics.push_back({"no_landmarks", -1, "every landmark is behind its camera"});
  }

  if (symmetry_weight != 0.0 && !mirror.empty()) {
    if (mirror.size() != positions.size()) throw Error("mirror map does not match vertex count");
    const double scale = symmetry_weight / static_cast<double>(positions.size());
    double sym = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      const auto m = static_cast<std::size_t>(mirror[i]);
      const Vec3& pm = positions[m];
      const Vec3 r = positions[i] - Vec3{-pm.x, pm.y, pm.z};
      sym += squared_norm(r);
      out.grad[i] += r * (2.0 * scale);
      out.grad[m] -= Vec3{-r.x, r.y, r.z} * (2.0 * scale);
    }
    out.value += scale * sym;
  }
  return out;
}

LossResult laplacian_loss(const std::vector<std::vector<int>>& neighbors, std::span<const double> weights,
                          std::span<const Vec3> positions) {
  if (weights.size() != positions.size()) throw Error("laplacian weights do not match vertex count");
  const auto lap = geometry::vertex_laplacian(neighbors, positions);
  LossResult out;
  out.grad.assign(positions.size(), Vec3{});
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const double w = weights[i];
    if (w == 0.0 || neighbors[i].empty()) continue;
    const Vec3& d = lap.delta[i];
    out.value += w * squared_norm(d);
    const Vec3 g = d * (2.0 * w);
    out.grad[i] += g;
    const Vec3 share = g * (1.0 / static_cast<double>(neighbors[i].size()));
    for (int j : neighbors[i]) out.grad[static_cast<std::size_t>(j)] -= share;
  }
  for (int i : lap.isolated) out.diagnostics.push_back({"isolated_vertex", i, "vertex has no neighbors"});
  return out;
}

LossResult laplacian_loss(const TriMesh& mesh, std::span<const Vec3> positions) {
  return laplacian_loss(geometry::vertex_neighbors(mesh), mesh.lap_weights, positions);
}

namespace {

bool finite_terms(const LossTerms& t) {
  return std::isfinite(t.total) && std::isfinite(t.nml) && std::isfinite(t.lmk) && std::isfinite(t.lap);
}

NormalTarget to_world(const NormalTarget& target, const Camera& camera) {
  NormalTarget out = target;
  for (Vec3& n : out.normal)
    if (!(n == Vec3{})) n = camera.rotation.transpose_mul(n);
  return out;
}

}  // namespace

OptimizeResult optimize_offsets(const geometry::BlendModel& model, std::span<const double> coeffs,
                                std::span<const NormalView> views, const LandmarkSet& landmarks,
                                const DeformConfig& config) {
  config.validate();
  if (views.empty()) throw Error("optimize_offsets needs at least one view");
  const std::size_t n = model.templ.vertices.size();

  TriMesh mesh = model.templ;
  geometry::apply_region_weights(mesh, config.region_weights);
  const auto neighbors = geometry::vertex_neighbors(mesh);

  std::vector<Camera> cameras;
  std::vector<NormalTarget> targets;
  for (const NormalView& v : views) {
    v.camera.validate();
    cameras.push_back(v.camera);
    targets.push_back(config.targets_in_camera_space ? to_world(v.target, v.camera) : v.target);
  }
  landmarks.validate(n, cameras);

  OptimizeResult result;
  std::vector<std::uint8_t> pinned(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (mesh.lap_weights[i] == 0.0) {
      pinned[i] = 1;
      result.pinned.push_back(static_cast<int>(i));
    }

  const std::vector<Vec3> zero(n);
  const std::vector<Vec3> base = geometry::deformed_vertices(model, coeffs, zero);
  std::vector<Vec3> offsets(n);
  std::vector<Vec3> positions = base;
  std::vector<Vec3> m(n), v2(n);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  NormalLossCache cache;
  std::vector<raster::GBuffer> gbuffers(views.size());
  std::vector<std::vector<std::uint8_t>> masks(views.size());

  auto evaluate = [&](int iter, std::vector<Vec3>* grad) {
    LossTerms terms;
    terms.iter = iter;
    const bool need_nml = config.lambda_nml != 0.0;
    const bool need_lmk = config.lambda_lmk != 0.0;
    const bool need_lap = config.lambda_lap != 0.0;
    LossResult nml = need_nml ? normal_loss(cache, mesh, positions) : LossResult{};
    LossResult lmk = need_lmk ? landmark_loss(positions, landmarks, cameras, mesh.mirror, config.symmetry_weight)
                              : LossResult{};
    LossResult lap = need_lap ? laplacian_loss(neighbors, mesh.lap_weights, positions) : LossResult{};
    terms.nml = nml.value;
    terms.lmk = lmk.value;
    terms.lap = lap.value;
    terms.total = config.lambda_nml * nml.value + config.lambda_lmk * lmk.value + config.lambda_lap * lap.value;
    if (grad) {
      grad->assign(n, Vec3{});
      for (std::size_t i = 0; i < n; ++i) {
        if (need_nml) (*grad)[i] += nml.grad[i] * config.lambda_nml;
        if (need_lmk) (*grad)[i] += lmk.grad[i] * config.lambda_lmk;
        if (need_lap) (*grad)[i] += lap.grad[i] * config.lambda_lap;
      }
    }
    return terms;
  };

  std::vector<Vec3> last_finite = offsets;
  std::vector<Vec3> grad;
  for (int it = 0; it < config.iters; ++it) {
    if (it % config.reraster_every == 0) {
      parallel_for(views.size(), [&](std::size_t k) {
        gbuffers[k] = raster::rasterize(mesh, positions, cameras[k]);
        masks[k] = semantic_pixel_mask(gbuffers[k], mesh);
      });
      cache = build_normal_cache(gbuffers, mesh, targets, masks);
      result.reraster_iters.push_back(it);
    }
    const LossTerms terms = evaluate(it, &grad);
    if (!finite_terms(terms)) {
      result.aborted = true;
      result.diagnostics.push_back({"non_finite_loss", it, "optimization aborted at the last finite state"});
      result.offsets = last_finite;
      return result;
    }
    result.trace.push_back(terms);
    last_finite = offsets;

    beta1_pow *= kBeta1;
    beta2_pow *= kBeta2;
    for (std::size_t i = 0; i < n; ++i) {
      if (pinned[i]) continue;
      for (int c = 0; c < 3; ++c) {
        const double g = grad[i][c];
        m[i][c] = kBeta1 * m[i][c] + (1.0 - kBeta1) * g;
        v2[i][c] = kBeta2 * v2[i][c] + (1.0 - kBeta2) * g * g;
        const double mhat = m[i][c] / (1.0 - beta1_pow);
        const double vhat = v2[i][c] / (1.0 - beta2_pow);
        offsets[i][c] -= config.lr * mhat / (std::sqrt(vhat) + kAdamEps);
      }
      positions[i] = base[i] + offsets[i];
    }
  }

  const LossTerms final_terms = evaluate(config.iters, nullptr);
  if (!finite_terms(final_terms)) {
    result.aborted = true;
    result.diagnostics.push_back({"non_finite_loss", config.iters, "final state is not finite"});
    result.offsets = last_finite;
    return result;
  }
  result.trace.push_back(final_terms);
  result.offsets = std::move(offsets);
  for (const auto& d : cache.diagnostics) result.diagnostics.push_back(d);
  return result;
}

}  // namespace uvfuse::deform
