#include "uvfuse/anchor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "uvfuse/parallel.hpp"

namespace uvfuse::anchor {

using geometry::TriMesh;

UVIndex::UVIndex(const TriMesh& mesh, int grid) : mesh_(&mesh), grid_(grid) {
  if (grid_ <= 0)
    grid_ = std::clamp(static_cast<int>(std::ceil(std::sqrt(static_cast<double>(mesh.faces.size())))), 1, 1024);
  cells_.resize(static_cast<std::size_t>(grid_) * grid_);
  for (std::size_t f = 0; f < mesh.uv_corners.size(); ++f) {
    const auto& uv = mesh.uv_corners[f];
    const double u0 = std::min({uv[0].x, uv[1].x, uv[2].x});
    const double u1 = std::max({uv[0].x, uv[1].x, uv[2].x});
    const double v0 = std::min({uv[0].y, uv[1].y, uv[2].y});
    const double v1 = std::max({uv[0].y, uv[1].y, uv[2].y});
    const int x0 = std::clamp(static_cast<int>(std::floor(u0 * grid_)), 0, grid_ - 1);
    const int x1 = std::clamp(static_cast<int>(std::floor(u1 * grid_)), 0, grid_ - 1);
    const int y0 = std::clamp(static_cast<int>(std::floor(v0 * grid_)), 0, grid_ - 1);
    const int y1 = std::clamp(static_cast<int>(std::floor(v1 * grid_)), 0, grid_ - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) cells_[static_cast<std::size_t>(y) * grid_ + x].push_back(static_cast<int>(f));
  }
}

std::optional<SurfacePoint> UVIndex::locate(const Vec2& uv) const {
  if (!(uv.x >= 0.0 && uv.x <= 1.0 && uv.y >= 0.0 && uv.y <= 1.0)) return std::nullopt;
  const int x = std::clamp(static_cast<int>(std::floor(uv.x * grid_)), 0, grid_ - 1);
  const int y = std::clamp(static_cast<int>(std::floor(uv.y * grid_)), 0, grid_ - 1);
  constexpr double kTol = 1e-12;
  for (int f : cells_[static_cast<std::size_t>(y) * grid_ + x]) {
    const auto& c = mesh_->uv_corners[static_cast<std::size_t>(f)];
    const Vec2 e1 = c[1] - c[0];
    const Vec2 e2 = c[2] - c[0];
    const double det = e1.x * e2.y - e1.y * e2.x;
    if (std::abs(det) < 1e-300) continue;
    const Vec2 d = uv - c[0];
    const double b1 = (d.x * e2.y - d.y * e2.x) / det;
    const double b2 = (e1.x * d.y - e1.y * d.x) / det;
    const double b0 = 1.0 - b1 - b2;
    if (b0 < -kTol || b1 < -kTol || b2 < -kTol) continue;
    SurfacePoint sp;
    sp.face = f;
    sp.bary = {std::max(0.0, b0), std::max(0.0, b1), std::max(0.0, b2)};
    const double s = sp.bary[0] + sp.bary[1] + sp.bary[2];
    for (double& b : sp.bary) b /= s;
    return sp;
  }
  return std::nullopt;
}

std::optional<SurfacePoint> uv_to_surface(const UVIndex& index, const Vec2& uv) { return index.locate(uv); }

void GaussianSet::validate(const TriMesh& mesh) const {
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Splat& s = splats[i];
    const std::string where = "splat " + std::to_string(i);
    if (s.anchor.kind == AnchorKind::kVertex) {
      if (s.anchor.index < 0 || static_cast<std::size_t>(s.anchor.index) >= mesh.vertices.size())
        throw Error(where + ": vertex anchor out of range");
    } else {
      if (s.anchor.index < 0 || static_cast<std::size_t>(s.anchor.index) >= mesh.faces.size())
        throw Error(where + ": face anchor out of range");
      const auto& b = s.anchor.bary;
      if (b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0 || std::abs(b[0] + b[1] + b[2] - 1.0) > 1e-6)
        throw Error(where + ": invalid barycentric coordinates");
    }
    if (!(s.scale > 0.0)) throw Error(where + ": scale must be > 0");
    if (!(s.opacity >= 0.0 && s.opacity <= 1.0)) throw Error(where + ": opacity outside [0,1]");
    for (int c = 0; c < 3; ++c)
      if (!(s.color[c] >= 0.0 && s.color[c] <= 1.0)) throw Error(where + ": color outside [0,1]");
  }
}

namespace {

struct Frame {
  Vec3 tangent, bitangent, normal;
  Vec3 to_world(const Vec3& local) const { return tangent * local.x + bitangent * local.y + normal * local.z; }
};

Frame face_frame(const TriMesh& mesh, std::span<const Vec3> positions, int face) {
  const auto& f = mesh.faces[static_cast<std::size_t>(face)];
  const Vec3& a = positions[static_cast<std::size_t>(f[0])];
  const Vec3& b = positions[static_cast<std::size_t>(f[1])];
  const Vec3& c = positions[static_cast<std::size_t>(f[2])];
  Frame fr;
  fr.normal = normalized(cross(b - a, c - a));
  fr.tangent = normalized(b - a);
  fr.bitangent = cross(fr.normal, fr.tangent);
  return fr;
}

struct VertexFrames {
  std::vector<Frame> frames;
};

// Area-weighted vertex normal; tangent from the first incident edge.
VertexFrames vertex_frames(const TriMesh& mesh, std::span<const Vec3> positions) {
  const std::size_t n = positions.size();
  std::vector<Vec3> nsum(n);
  std::vector<int> first_nbr(n, -1);
  for (const auto& f : mesh.faces) {
    const Vec3 cr = cross(positions[static_cast<std::size_t>(f[1])] - positions[static_cast<std::size_t>(f[0])],
                          positions[static_cast<std::size_t>(f[2])] - positions[static_cast<std::size_t>(f[0])]);
    for (int k = 0; k < 3; ++k) {
      const auto v = static_cast<std::size_t>(f[k]);
      nsum[v] += cr;
      if (first_nbr[v] < 0) first_nbr[v] = f[(k + 1) % 3];
    }
  }
  VertexFrames out;
  out.frames.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Frame& fr = out.frames[i];
    fr.normal = normalized(nsum[i]);
    if (first_nbr[i] >= 0) {
      const Vec3 e = positions[static_cast<std::size_t>(first_nbr[i])] - positions[i];
      fr.tangent = normalized(e - fr.normal * dot(e, fr.normal));
    }
    fr.bitangent = cross(fr.normal, fr.tangent);
  }
  return out;
}

double mean_edge_length(std::span<const Vec3> positions, std::size_t v, const std::vector<std::vector<int>>& nbrs) {
  if (nbrs[v].empty()) return 0.0;
  double s = 0.0;
  for (int j : nbrs[v]) s += norm(positions[static_cast<std::size_t>(j)] - positions[v]);
  return s / static_cast<double>(nbrs[v].size());
}

}  // namespace

void resolve_positions(GaussianSet& set, const TriMesh& mesh, std::span<const Vec3> positions) {
  if (positions.size() != mesh.vertices.size()) throw Error("positions do not match mesh vertex count");
  bool any_vertex_offset = false;
  for (const Splat& s : set.splats)
    if (s.anchor.kind == AnchorKind::kVertex && !(s.offset == Vec3{})) any_vertex_offset = true;
  VertexFrames vf;
  if (any_vertex_offset) vf = vertex_frames(mesh, positions);

  for (Splat& s : set.splats) {
    if (s.anchor.kind == AnchorKind::kVertex) {
      const auto v = static_cast<std::size_t>(s.anchor.index);
      s.position = positions[v];
      if (!(s.offset == Vec3{})) s.position += vf.frames[v].to_world(s.offset);
    } else {
      const auto& f = mesh.faces[static_cast<std::size_t>(s.anchor.index)];
      const auto& b = s.anchor.bary;
      s.position = positions[static_cast<std::size_t>(f[0])] * b[0] + positions[static_cast<std::size_t>(f[1])] * b[1] +
                   positions[static_cast<std::size_t>(f[2])] * b[2];
      if (!(s.offset == Vec3{})) s.position += face_frame(mesh, positions, s.anchor.index).to_world(s.offset);
    }
  }
}

GaussianSet build_gaussians(const TriMesh& mesh, std::span<const Vec3> positions,
                            const splat::FeatureMap& uv_attributes, std::span<const Vec3> vertex_colors,
                            const AnchorOptions& options) {
  if (positions.size() != mesh.vertices.size()) throw Error("positions do not match mesh vertex count");
  if (vertex_colors.size() != mesh.vertices.size()) throw Error("need one color per vertex");
  if (uv_attributes.channels != kAttributeChannels)
    throw Error("uv attribute map must have 5 channels (r, g, b, opacity, scale)");
  if (uv_attributes.width != uv_attributes.height) throw Error("uv attribute map must be square");
  uv_attributes.validate();

  GaussianSet set;
  const auto nbrs = geometry::vertex_neighbors(mesh);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    Splat s;
    s.anchor = {AnchorKind::kVertex, static_cast<int>(i), {1.0, 0.0, 0.0}};
    s.scale = options.vertex_scale > 0.0 ? options.vertex_scale : 0.5 * mean_edge_length(positions, i, nbrs);
    if (!(s.scale > 0.0)) s.scale = 1e-3;
    s.opacity = options.vertex_opacity;
    s.color = vertex_colors[i];
    set.splats.push_back(s);
  }

  const UVIndex index(mesh);
  const int res = uv_attributes.width;
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      const double* a = uv_attributes.pixel(static_cast<std::size_t>(y) * res + x);
      const double opacity = a[3];
      if (!(opacity > 0.0)) continue;
      if (opacity > 1.0) throw Error("uv attribute opacity above 1 at texel " + std::to_string(y * res + x));
      const auto sp = index.locate({(x + 0.5) / res, (y + 0.5) / res});
      if (!sp) continue;
      Splat s;
      s.anchor = {AnchorKind::kSurface, sp->face, sp->bary};
      s.color = {std::clamp(a[0], 0.0, 1.0), std::clamp(a[1], 0.0, 1.0), std::clamp(a[2], 0.0, 1.0)};
      s.opacity = opacity;
      s.scale = a[4] > 0.0 ? a[4] : 1e-3;
      set.splats.push_back(s);
    }
  }
  resolve_positions(set, mesh, positions);
  return set;
}

GaussianSet drive(const GaussianSet& set, const geometry::BlendModel& model, std::span<const double> coeffs,
                  std::span<const Vec3> offsets) {
  GaussianSet out = set;
  const auto positions = geometry::deformed_vertices(model, coeffs, offsets);
  resolve_positions(out, model.templ, positions);
  return out;
}

splat::FeatureMap render_gaussians(const GaussianSet& set, const geometry::Camera& camera) {
  camera.validate();
  const int W = camera.width;
  const int H = camera.height;
  splat::FeatureMap image(W, H, 4, 0.0);

  struct Projected {
    std::size_t index;
    double depth;
    Vec2 center;
    double radius;
  };
  std::vector<Projected> visible;
  for (std::size_t i = 0; i < set.splats.size(); ++i) {
    const Splat& s = set.splats[i];
    const auto p = geometry::project(camera, s.position);
    if (!p.in_front || s.opacity <= 0.0) continue;
    visible.push_back({i, p.depth, p.pixel, s.scale * camera.fx / p.depth});
  }
  std::sort(visible.begin(), visible.end(), [](const Projected& a, const Projected& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });

  // Rows -> splats touching that row, in depth order.
  std::vector<std::vector<std::uint32_t>> rows(static_cast<std::size_t>(H));
  for (std::size_t k = 0; k < visible.size(); ++k) {
    const auto& p = visible[k];
    const int y0 = std::max(0, static_cast<int>(std::ceil(p.center.y - p.radius - 0.5)));
    const int y1 = std::min(H - 1, static_cast<int>(std::floor(p.center.y + p.radius - 0.5)));
    for (int y = y0; y <= y1; ++y) rows[static_cast<std::size_t>(y)].push_back(static_cast<std::uint32_t>(k));
  }

  parallel_for(static_cast<std::size_t>(H), [&](std::size_t y) {
    const auto& list = rows[y];
    if (list.empty()) return;
    std::vector<double> transmittance(static_cast<std::size_t>(W), 1.0);
    const double py = static_cast<double>(y) + 0.5;
    for (std::uint32_t k : list) {
      const auto& p = visible[k];
      const Splat& s = set.splats[p.index];
      const double sigma = 0.5 * p.radius;
      const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
      const int x0 = std::max(0, static_cast<int>(std::ceil(p.center.x - p.radius - 0.5)));
      const int x1 = std::min(W - 1, static_cast<int>(std::floor(p.center.x + p.radius - 0.5)));
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - p.center.x;
        const double dy = py - p.center.y;
        const double d2 = dx * dx + dy * dy;
        if (d2 > p.radius * p.radius) continue;
        const double alpha = s.opacity * std::exp(-d2 * inv2s2);
        double& T = transmittance[static_cast<std::size_t>(x)];
        double* px = image.pixel(y * static_cast<std::size_t>(W) + static_cast<std::size_t>(x));
        const double w = T * alpha;
        px[0] += w * s.color.x;
        px[1] += w * s.color.y;
        px[2] += w * s.color.z;
        T *= 1.0 - alpha;
      }
    }
    for (int x = 0; x < W; ++x)
      image.pixel(y * static_cast<std::size_t>(W) + static_cast<std::size_t>(x))[3] =
          1.0 - transmittance[static_cast<std::size_t>(x)];
  });
  return image;
}

}  // namespace uvfuse::anchor
