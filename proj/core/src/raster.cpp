#include "uvfuse/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace uvfuse::raster {

using geometry::Camera;
using geometry::TriMesh;

GBuffer::GBuffer(int w, int h) : width(w), height(h) {
  const std::size_t n = size();
  face_id.assign(n, kEmpty);
  bary.assign(n, {0.0, 0.0, 0.0});
  uv.assign(n, Vec2{});
  normal.assign(n, Vec3{});
  depth.assign(n, 0.0);
  mask.assign(n, 0);
}

std::size_t GBuffer::covered_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

namespace {

double edge(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

// For triangles with positive edge() area (clockwise on a y-down screen).
bool is_top_left(const Vec2& a, const Vec2& b) { return (a.y == b.y && b.x > a.x) || (b.y < a.y); }

bool inside(double e, bool top_left) { return e > 0.0 || (e == 0.0 && top_left); }

}  // namespace

GBuffer rasterize(const TriMesh& mesh, std::span<const Vec3> positions, const Camera& camera) {
  camera.validate();
  if (positions.size() != mesh.vertices.size())
    throw Error("positions has " + std::to_string(positions.size()) + " entries, mesh has " +
                std::to_string(mesh.vertices.size()) + " vertices");
  GBuffer gb(camera.width, camera.height);
  if (mesh.faces.empty()) return gb;

  const Vec3 eye = camera.center();
  std::vector<Vec3> cam_pts(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) cam_pts[i] = camera.to_camera(positions[i]);

  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    std::array<Vec3, 3> pc;
    std::array<Vec3, 3> pw;
    bool behind = false;
    for (int k = 0; k < 3; ++k) {
      pc[k] = cam_pts[static_cast<std::size_t>(face[k])];
      pw[k] = positions[static_cast<std::size_t>(face[k])];
      if (!(pc[k].z > geometry::kMinDepth)) behind = true;
    }
    if (behind) continue;
    const auto tn = geometry::triangle_normal(pw[0], pw[1], pw[2], false);
    if (tn.degenerate) continue;
    if (dot(tn.normal, eye - pw[0]) <= 0.0) continue;

    std::array<Vec2, 3> s;
    for (int k = 0; k < 3; ++k)
      s[k] = {camera.fx * pc[k].x / pc[k].z + camera.cx, camera.fy * pc[k].y / pc[k].z + camera.cy};

    // Work with a positively oriented copy; order[] maps back to face corners.
    std::array<int, 3> order{0, 1, 2};
    double area = edge(s[0], s[1], s[2]);
    if (area == 0.0) continue;
    if (area < 0.0) {
      std::swap(order[1], order[2]);
      area = -area;
    }
    const Vec2 a = s[static_cast<std::size_t>(order[0])];
    const Vec2 b = s[static_cast<std::size_t>(order[1])];
    const Vec2 c = s[static_cast<std::size_t>(order[2])];
    const bool tl_bc = is_top_left(b, c);
    const bool tl_ca = is_top_left(c, a);
    const bool tl_ab = is_top_left(a, b);

    const double min_x = std::min({a.x, b.x, c.x});
    const double max_x = std::max({a.x, b.x, c.x});
    const double min_y = std::min({a.y, b.y, c.y});
    const double max_y = std::max({a.y, b.y, c.y});
    const int x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    const int x1 = std::min(gb.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    const int y1 = std::min(gb.height - 1, static_cast<int>(std::floor(max_y - 0.5)));

    const auto& uvc = mesh.uv_corners[f];
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p{x + 0.5, y + 0.5};
        const double ea = edge(b, c, p);
        const double eb = edge(c, a, p);
        const double ec = edge(a, b, p);
        if (!inside(ea, tl_bc) || !inside(eb, tl_ca) || !inside(ec, tl_ab)) continue;

        std::array<double, 3> lambda{};
        lambda[static_cast<std::size_t>(order[0])] = ea / area;
        lambda[static_cast<std::size_t>(order[1])] = eb / area;
        lambda[static_cast<std::size_t>(order[2])] = ec / area;
        double inv_depth = 0.0;
        std::array<double, 3> w{};
        for (std::size_t k = 0; k < 3; ++k) {
          w[k] = lambda[k] / pc[k].z;
          inv_depth += w[k];
        }
        const double depth = 1.0 / inv_depth;
        const std::size_t idx = gb.index(x, y);
        if (gb.mask[idx] && !(depth < gb.depth[idx])) continue;

        std::array<double, 3> bc{};
        for (std::size_t k = 0; k < 3; ++k) bc[k] = w[k] * depth;
        Vec2 uv{};
        for (std::size_t k = 0; k < 3; ++k) uv = uv + uvc[k] * bc[k];
        uv.x = std::clamp(uv.x, 0.0, 1.0);
        uv.y = std::clamp(uv.y, 0.0, 1.0);

        gb.mask[idx] = 1;
        gb.face_id[idx] = static_cast<int>(f);
        gb.bary[idx] = bc;
        gb.uv[idx] = uv;
        gb.normal[idx] = tn.normal;
        gb.depth[idx] = depth;
      }
    }
  }
  return gb;
}

Vec3 surface_point(const Camera& camera, const GBuffer& gbuffer, std::size_t idx) {
  const double px = static_cast<double>(idx % static_cast<std::size_t>(gbuffer.width)) + 0.5;
  const double py = static_cast<double>(idx / static_cast<std::size_t>(gbuffer.width)) + 0.5;
  const double z = gbuffer.depth[idx];
  const Vec3 pc{(px - camera.cx) / camera.fx * z, (py - camera.cy) / camera.fy * z, z};
  return camera.rotation.transpose_mul(pc - camera.translation);
}

NormalMap render_normal_map(const GBuffer& gbuffer, const TriMesh& mesh, std::span<const Vec3> positions) {
  const auto fn = geometry::face_normals(mesh, positions, false);
  std::vector<std::uint8_t> degenerate(mesh.faces.size(), 0);
  for (int f : fn.degenerate) degenerate[static_cast<std::size_t>(f)] = 1;

  NormalMap out;
  out.width = gbuffer.width;
  out.height = gbuffer.height;
  out.normal.assign(gbuffer.size(), Vec3{});
  out.valid.assign(gbuffer.size(), 0);
  for (std::size_t i = 0; i < gbuffer.size(); ++i) {
    if (!gbuffer.mask[i]) continue;
    const int f = gbuffer.face_id[i];
    if (f < 0 || static_cast<std::size_t>(f) >= mesh.faces.size())
      throw Error("gbuffer face id " + std::to_string(f) + " does not belong to this mesh");
    if (degenerate[static_cast<std::size_t>(f)]) continue;
    out.normal[i] = fn.normals[static_cast<std::size_t>(f)];
    out.valid[i] = 1;
  }
  return out;
}

std::vector<Vec3> render_normal_map_vjp(const GBuffer& gbuffer, const TriMesh& mesh,
                                        std::span<const Vec3> positions,
                                        std::span<const Vec3> grad_normal) {
  if (grad_normal.size() != gbuffer.size()) throw Error("grad_normal does not match gbuffer size");
  std::vector<Vec3> face_grad(mesh.faces.size());
  for (std::size_t i = 0; i < gbuffer.size(); ++i) {
    if (!gbuffer.mask[i]) continue;
    face_grad[static_cast<std::size_t>(gbuffer.face_id[i])] += grad_normal[i];
  }
  std::vector<Vec3> grad(positions.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    if (face_grad[f] == Vec3{}) continue;
    const auto& face = mesh.faces[f];
    const auto ia = static_cast<std::size_t>(face[0]);
    const auto ib = static_cast<std::size_t>(face[1]);
    const auto ic = static_cast<std::size_t>(face[2]);
    geometry::triangle_normal_vjp(positions[ia], positions[ib], positions[ic], face_grad[f], grad[ia], grad[ib],
                                  grad[ic]);
  }
  return grad;
}

}  // namespace uvfuse::raster
