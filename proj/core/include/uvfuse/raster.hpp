#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "uvfuse/geometry.hpp"

namespace uvfuse::raster {

inline constexpr int kEmpty = -1;

/// Per-pixel rasterization output, row-major (index = y * width + x).
struct GBuffer {
  int width = 0;
  int height = 0;
  std::vector<int> face_id;
  std::vector<std::array<double, 3>> bary;
  std::vector<Vec2> uv;
  std::vector<Vec3> normal;
  std::vector<double> depth;
  std::vector<std::uint8_t> mask;

  GBuffer() = default;
  GBuffer(int w, int h);

  std::size_t size() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  std::size_t covered_count() const;
  bool operator==(const GBuffer&) const = default;
};

/// Rasterizes at pixel centers with a top-left fill rule, nearest depth
/// wins (ties go to the lower face index), back faces and faces with any
/// vertex at or behind the near plane are skipped. Barycentrics are
/// perspective-correct, so the interpolated 3D point reprojects onto the
/// pixel center.
GBuffer rasterize(const geometry::TriMesh& mesh, std::span<const Vec3> positions,
                  const geometry::Camera& camera);

/// World-space surface point seen at covered pixel `idx`.
Vec3 surface_point(const geometry::Camera& camera, const GBuffer& gbuffer, std::size_t idx);

struct NormalMap {
  int width = 0;
  int height = 0;
  std::vector<Vec3> normal;
  std::vector<std::uint8_t> valid;
};

/// Re-evaluates per-pixel face normals from `positions` using the frozen
/// face ids in `gbuffer`. Pixels whose face became degenerate are invalid.
NormalMap render_normal_map(const GBuffer& gbuffer, const geometry::TriMesh& mesh,
                            std::span<const Vec3> positions);

/// Vector-Jacobian product of render_normal_map: given dL/dnormal per pixel,
/// returns dL/dposition per vertex (visibility held fixed).
std::vector<Vec3> render_normal_map_vjp(const GBuffer& gbuffer, const geometry::TriMesh& mesh,
                                        std::span<const Vec3> positions,
                                        std::span<const Vec3> grad_normal);

}  // namespace uvfuse::raster
