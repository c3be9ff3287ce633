#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "uvfuse/error.hpp"
#include "uvfuse/math.hpp"

namespace uvfuse::geometry {

enum class Label : std::uint8_t { kFace = 0, kHair = 1, kBoundary = 2, kOther = 3 };

std::string_view label_name(Label label);
std::optional<Label> parse_label(std::string_view name);

using Face = std::array<int, 3>;
using FaceUV = std::array<Vec2, 3>;

/// Indexed triangle mesh with a per-corner UV atlas and per-vertex semantic
/// annotations. `mirror[i]` is the bilateral partner of vertex i under
/// x-negation (or i itself).
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<FaceUV> uv_corners;
  std::vector<Label> labels;
  std::vector<int> mirror;
  std::vector<double> lap_weights;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_faces() const { return faces.size(); }

  /// Fills labels/mirror/lap_weights with neutral defaults (kOther, self,
  /// 0) for any that are empty.
  void fill_default_annotations();

  /// Throws Error naming the first violated invariant.
  void validate() const;
};

/// Per-label Laplacian weight table.
struct RegionWeights {
  double face = 0.01;
  double hair = 1.0;
  double boundary = 2.0;
  double other = 0.1;

  double operator()(Label label) const;
};

/// Sets mesh.lap_weights[i] = weights(mesh.labels[i]).
void apply_region_weights(TriMesh& mesh, const RegionWeights& weights);

/// Linear blendshape model: template + sum_j coeffs_j * basis_j.
struct BlendModel {
  TriMesh templ;
  std::vector<std::vector<Vec3>> basis;

  std::size_t coeffs_dim() const { return basis.size(); }
  void validate() const;
};

/// V' = template + sum_j coeffs_j basis_j + offsets.
std::vector<Vec3> deformed_vertices(const BlendModel& model, std::span<const double> coeffs,
                                    std::span<const Vec3> offsets);

/// Sorted, de-duplicated 1-ring neighbors of each vertex under edge adjacency.
std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh);

struct LaplacianResult {
  std::vector<Vec3> delta;
  std::vector<int> isolated;
};

/// Uniform Laplacian coordinates delta_i = v_i - mean(N(i)). Isolated
/// vertices get delta = 0 and are listed in `isolated`.
LaplacianResult vertex_laplacian(const TriMesh& mesh, std::span<const Vec3> positions);
LaplacianResult vertex_laplacian(const std::vector<std::vector<int>>& neighbors,
                                 std::span<const Vec3> positions);

inline constexpr double kDegenerateArea = 1e-12;

/// Unit normal of one triangle and, optionally, the Jacobians dn/dv_k.
struct TriangleNormal {
  Vec3 normal;
  bool degenerate = false;
  std::array<Mat3, 3> jacobian{};
};

TriangleNormal triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c, bool with_jacobian);

/// Accumulates J_k^T * grad_normal into the three vertex gradients.
/// Equivalent to using triangle_normal(..., true).jacobian but cheaper.
void triangle_normal_vjp(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& grad_normal,
                         Vec3& grad_a, Vec3& grad_b, Vec3& grad_c);

struct FaceNormals {
  std::vector<Vec3> normals;
  std::vector<std::array<Mat3, 3>> jacobians;  // empty unless requested
  std::vector<int> degenerate;
};

FaceNormals face_normals(const TriMesh& mesh, std::span<const Vec3> positions,
                         bool with_jacobians = false);

/// Pinhole camera. `rotation` maps world to camera coordinates
/// (x right, y down, z forward); pixel centers sit at (i + 0.5, j + 0.5).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::identity();
  Vec3 translation{};
  int width = 1;
  int height = 1;

  void validate() const;
  Vec3 center() const { return -rotation.transpose_mul(translation); }
  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  /// World-space unit direction of the ray through continuous pixel (px, py).
  Vec3 ray_direction(double px, double py) const;
};

inline constexpr double kMinDepth = 1e-9;

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
  bool in_front = false;
};

Projection project(const Camera& camera, const Vec3& point);

/// d(pixel)/d(point) for a point in front of the camera (2x3, row-major).
std::array<Vec3, 2> projection_jacobian(const Camera& camera, const Vec3& point);

struct RigOptions {
  int width = 256;
  int height = 256;
  double fov_degrees = 40.0;
};

/// Six cameras on the horizontal circle around `look_at` at azimuths
/// 0, +60, -60, +120, -120, 180 degrees. Azimuth 0 sits on +Z and looks
/// down -Z; world +Y is up.
std::vector<Camera> six_view_rig(double distance, const Vec3& look_at, const RigOptions& options = {});

/// Azimuths (degrees) in the order returned by six_view_rig.
std::array<double, 6> six_view_azimuths();

}  // namespace uvfuse::geometry
