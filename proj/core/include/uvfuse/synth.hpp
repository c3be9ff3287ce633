#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "uvfuse/deform.hpp"
#include "uvfuse/geometry.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/splat.hpp"

namespace uvfuse::synth {

enum class Shape { kIcosphere, kEllipsoid, kGrid };
enum class UVLayout { kSpherical, kPerFaceAtlas, kPlanar };
enum class FeatureRule { kCheckerboard, kNormalsAsRgb, kConstant };

/// Latitude (degrees) thresholds: lat >= hair_above -> hair,
/// lat >= boundary_above -> boundary, otherwise face.
struct LabelRule {
  double hair_above_deg = 10.0;
  double boundary_above_deg = -10.0;
};

struct SceneSpec {
  Shape shape = Shape::kIcosphere;
  int subdiv = 3;
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  int grid_n = 4;
  UVLayout uv_layout = UVLayout::kSpherical;
  LabelRule label_rule;
  FeatureRule feature_rule = FeatureRule::kCheckerboard;
  int cells = 8;
  double constant = 0.5;
  geometry::RegionWeights region_weights;

  void validate() const;
};

struct Scene {
  geometry::TriMesh mesh;
  geometry::BlendModel model;   // basis: per-axis scaling fields (x, y, z)
  std::vector<int> seam_faces;  // faces whose UVs straddle the spherical seam
  Diagnostics diagnostics;
};

Scene make_scene(const SceneSpec& spec);

/// Icosahedron subdivided `subdiv` times, projected to the unit sphere.
void icosphere(int subdiv, std::vector<Vec3>& vertices, std::vector<geometry::Face>& faces);

/// Nearest vertex to the x-mirrored position, within `tolerance`; unpaired
/// vertices map to themselves and are reported.
std::vector<int> mirror_pairs(std::span<const Vec3> vertices, double tolerance, Diagnostics* diagnostics);

struct Ellipsoid {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  Vec3 center{};

  Vec3 normal_at(const Vec3& p) const;
  /// Nearest ray parameter > 0 where origin + s * dir hits the surface.
  std::optional<double> intersect(const Vec3& origin, const Vec3& dir) const;
  /// Euclidean distance from p to the surface.
  double distance(const Vec3& p) const;
};

/// Per-pixel exact world-space ellipsoid normals; misses are (0, 0, 0).
std::vector<deform::NormalTarget> analytic_normal_maps(const Ellipsoid& ellipsoid,
                                                       std::span<const geometry::Camera> cameras);

/// Per-pixel features from the scene's feature rule (3 channels).
splat::FeatureMap make_features(const raster::GBuffer& gbuffer, const FeatureRule rule, int cells, double constant);

/// Landmarks for a unit-sphere template targeting `ellipsoid`: each chosen
/// vertex maps to (a x, b y, c z) and is projected into every camera that
/// sees that point at less than about 72 degrees from its normal, so most
/// landmarks are constrained from two or more views.
deform::LandmarkSet ellipsoid_landmarks(const geometry::TriMesh& mesh, const Ellipsoid& ellipsoid,
                                        std::span<const geometry::Camera> cameras, std::span<const int> vertices);

/// Vertex subset used as landmarks by the synthetic scenes: every vertex
/// labeled face plus every `stride`-th vertex elsewhere.
std::vector<int> default_landmark_vertices(const geometry::TriMesh& mesh, int stride);

/// splitmix64-based generator with a portable uniform double.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi);  // [lo, hi]
  double normal();

 private:
  std::uint64_t state_;
};

/// Randomized view for property tests: a camera looking down +Z from the
/// origin and a GBuffer with random coverage, uv in [uv_lo, uv_hi]^2,
/// depths in [1, 3] and random normals biased toward the viewer (some
/// face away, giving zero confidence).
struct RandomView {
  geometry::Camera camera;
  raster::GBuffer gbuffer;
  splat::FeatureMap features;
};

RandomView random_view(Rng& rng, int width, int height, int channels, double coverage, double uv_lo = 0.0,
                       double uv_hi = 1.0);

}  // namespace uvfuse::synth
