#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "uvfuse/geometry.hpp"
#include "uvfuse/splat.hpp"

namespace uvfuse::anchor {

struct SurfacePoint {
  int face = 0;
  std::array<double, 3> bary{};
};

/// Uniform-grid index over the UV triangles of a mesh.
class UVIndex {
 public:
  explicit UVIndex(const geometry::TriMesh& mesh, int grid = 0);

  /// Face containing uv (lowest face index on shared edges) with its
  /// barycentric coordinates inside that UV triangle; nullopt in chart gaps.
  std::optional<SurfacePoint> locate(const Vec2& uv) const;

 private:
  const geometry::TriMesh* mesh_;
  int grid_;
  std::vector<std::vector<int>> cells_;
};

std::optional<SurfacePoint> uv_to_surface(const UVIndex& index, const Vec2& uv);

enum class AnchorKind { kVertex = 0, kSurface = 1 };

struct Anchor {
  AnchorKind kind = AnchorKind::kVertex;
  int index = 0;  // vertex or face
  std::array<double, 3> bary{1.0, 0.0, 0.0};
};

struct Splat {
  Anchor anchor;
  Vec3 offset;  // in the anchor's local (tangent, bitangent, normal) frame
  double scale = 0.01;
  double opacity = 1.0;
  Vec3 color;
  Vec3 position;  // resolved world position
};

struct GaussianSet {
  std::vector<Splat> splats;

  void validate(const geometry::TriMesh& mesh) const;
};

struct AnchorOptions {
  double vertex_scale = 0.0;  // <= 0: half the mean incident edge length
  double vertex_opacity = 1.0;
};

/// Channels of the UV attribute map: r, g, b, opacity, scale.
inline constexpr int kAttributeChannels = 5;

/// One splat per vertex plus one per covered texel with opacity > 0.
GaussianSet build_gaussians(const geometry::TriMesh& mesh, std::span<const Vec3> positions,
                            const splat::FeatureMap& uv_attributes, std::span<const Vec3> vertex_colors,
                            const AnchorOptions& options = {});

/// Recomputes every splat position from `positions` through its binding.
void resolve_positions(GaussianSet& set, const geometry::TriMesh& mesh, std::span<const Vec3> positions);

GaussianSet drive(const GaussianSet& set, const geometry::BlendModel& model, std::span<const double> coeffs,
                  std::span<const Vec3> offsets);

/// Front-to-back alpha compositing of isotropic discs (radius = scale * fx / z
/// pixels, Gaussian falloff with sigma = radius / 2) in strict depth order,
/// ties broken by splat index. Returns an H x W x 4 RGBA image.
splat::FeatureMap render_gaussians(const GaussianSet& set, const geometry::Camera& camera);

}  // namespace uvfuse::anchor
