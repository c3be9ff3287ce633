#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uvfuse/error.hpp"
#include "uvfuse/geometry.hpp"
#include "uvfuse/raster.hpp"

namespace uvfuse::deform {

struct DeformConfig {
  double lambda_nml = 1.0;
  double lambda_lmk = 0.1;
  double lambda_lap = 0.5;
  double lr = 1e-3;
  int iters = 500;
  int reraster_every = 25;
  double symmetry_weight = 0.1;
  geometry::RegionWeights region_weights;
  /// Interpret target normal maps as camera-space (x right, y down, z forward).
  bool targets_in_camera_space = false;

  void validate() const;
};

struct Landmark {
  int vertex = 0;
  int camera = 0;
  Vec2 target;
};

struct LandmarkSet {
  std::vector<Landmark> entries;

  void validate(std::size_t num_vertices, std::span<const geometry::Camera> cameras) const;
};

/// Target normal image for one camera; zero vectors mark missing pixels.
struct NormalTarget {
  int width = 0;
  int height = 0;
  std::vector<Vec3> normal;
};

struct LossResult {
  double value = 0.0;
  std::vector<Vec3> grad;
  Diagnostics diagnostics;
};

/// 1 where the frozen face is not majority-labeled `face` (at least two of
/// its vertices carry another label), 0 elsewhere or where uncovered.
std::vector<std::uint8_t> semantic_pixel_mask(const raster::GBuffer& gbuffer, const geometry::TriMesh& mesh);

/// Frozen per-face sufficient statistics of one or more views: for each
/// face, the number of contributing pixels and the sums of target normals
/// and their squared norms, both taken relative to the face's first target
/// so a face whose targets all equal its normal yields exactly zero.
/// Rebuilt on every re-rasterization.
struct NormalLossCache {
  std::vector<double> count;
  std::vector<Vec3> reference;
  std::vector<Vec3> target_sum;
  std::vector<double> target_sq_sum;
  double total_pixels = 0.0;
  Diagnostics diagnostics;
};

/// Pixels contribute when covered, inside `pixel_mask` (if non-empty), and
/// the target is present.
NormalLossCache build_normal_cache(std::span<const raster::GBuffer> gbuffers, const geometry::TriMesh& mesh,
                                   std::span<const NormalTarget> targets,
                                   std::span<const std::vector<std::uint8_t>> pixel_masks);

/// Mean squared L2 distance between rendered face normals and targets over
/// the cached pixels, with its gradient w.r.t. positions.
LossResult normal_loss(const NormalLossCache& cache, const geometry::TriMesh& mesh, std::span<const Vec3> positions);

LossResult normal_loss(std::span<const raster::GBuffer> gbuffers, const geometry::TriMesh& mesh,
                       std::span<const Vec3> positions, std::span<const NormalTarget> targets,
                       std::span<const std::vector<std::uint8_t>> pixel_masks);

/// Mean squared reprojection error of landmark vertices plus
/// symmetry_weight * mean_i ||v_i - S v_mirror(i)||^2 with S = diag(-1, 1, 1).
LossResult landmark_loss(std::span<const Vec3> positions, const LandmarkSet& landmarks,
                         std::span<const geometry::Camera> cameras, std::span<const int> mirror,
                         double symmetry_weight);

/// sum_i w_i ||delta_i||^2 using mesh.lap_weights.
LossResult laplacian_loss(const geometry::TriMesh& mesh, std::span<const Vec3> positions);
LossResult laplacian_loss(const std::vector<std::vector<int>>& neighbors, std::span<const double> weights,
                          std::span<const Vec3> positions);

struct NormalView {
  geometry::Camera camera;
  NormalTarget target;
};

struct LossTerms {
  int iter = 0;
  double total = 0.0;
  double nml = 0.0;
  double lmk = 0.0;
  double lap = 0.0;
};

struct OptimizeResult {
  std::vector<Vec3> offsets;
  /// Row i holds the losses before step i; the final row (iter == iters) is
  /// the loss of the returned offsets.
  std::vector<LossTerms> trace;
  std::vector<int> reraster_iters;
  std::vector<int> pinned;
  bool aborted = false;
  Diagnostics diagnostics;
};

/// Adam on the per-vertex offsets with blend coefficients held fixed.
/// Vertices whose region weight is exactly 0 are pinned (never updated).
OptimizeResult optimize_offsets(const geometry::BlendModel& model, std::span<const double> coeffs,
                                std::span<const NormalView> views, const LandmarkSet& landmarks,
                                const DeformConfig& config);

}  // namespace uvfuse::deform
