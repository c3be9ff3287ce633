#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "uvfuse/error.hpp"
#include "uvfuse/geometry.hpp"
#include "uvfuse/raster.hpp"

namespace uvfuse::splat {

/// Dense H x W x C image, row-major with channels fastest.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int w, int h, int c, double fill = 0.0);

  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double* pixel(std::size_t idx) { return data.data() + idx * static_cast<std::size_t>(channels); }
  const double* pixel(std::size_t idx) const { return data.data() + idx * static_cast<std::size_t>(channels); }
  void validate() const;
};

/// One bilinear tap into a res x res grid (index = y * res + x).
struct Tap {
  int index = 0;
  double weight = 0.0;
};

/// Up to four in-range taps for splatting a value at continuous uv onto
/// texel centers (i + 0.5) / res. Out-of-range taps are dropped.
struct SplatTaps {
  std::array<Tap, 4> taps{};
  int count = 0;
};

SplatTaps splat_taps(const Vec2& uv, int res);

/// True when all four bilinear neighbours of uv lie inside the grid, i.e.
/// u * res - 0.5 and v * res - 0.5 are both in [0, res - 1].
bool in_range(const Vec2& uv, int res);

struct LevelSplat {
  int res = 0;
  int channels = 0;
  std::vector<double> U;  // res * res * channels
  std::vector<double> D;  // res * res
};

/// Bilinear splat of the covered pixels' features into a res x res grid.
LevelSplat splat_level(const raster::GBuffer& gbuffer, const FeatureMap& features, int res);

/// Per-pixel max(0, n . v) with v the unit direction from the surface point
/// to the camera center; 0 for uncovered pixels.
std::vector<double> confidence_scores(const raster::GBuffer& gbuffer, const geometry::Camera& camera);

/// Confidence scores splatted with the same bilinear operator.
std::vector<double> splat_confidence(const raster::GBuffer& gbuffer, const geometry::Camera& camera, int res);

enum class FusionMode {
  kHoleFilled,  // hole-fill each view, then fuse across views
  kRawLevels,   // fuse every (view, level) pair directly
};

struct FusionConfig {
  std::vector<double> gamma{1.0, 0.8, 0.8, 0.6, 0.6, 0.7};
  double epsilon = 1e-8;
  int base_res = 256;
  int num_levels = 4;
  double density_tau = 1.0;
  FusionMode mode = FusionMode::kHoleFilled;

  /// Throws Error unless the config can drive `num_views` views.
  void validate(std::size_t num_views) const;
};

/// Pixel index and its rasterized uv; the saved footprint of a view.
struct SplatSample {
  std::uint32_t pixel = 0;
  Vec2 uv;
};

struct PyramidLevel {
  int res = 0;
  std::vector<double> U;  // feature sums, res * res * channels
  std::vector<double> D;  // density
  std::vector<double> C;  // confidence sums
};

struct UVPyramid {
  int base_res = 0;
  int channels = 0;
  int image_width = 0;
  int image_height = 0;
  std::vector<SplatSample> samples;
  std::vector<PyramidLevel> levels;
  Diagnostics diagnostics;

  int num_levels() const { return static_cast<int>(levels.size()); }
};

/// Re-splats features, density and confidence at base_res / 2^l for every
/// level. Levels whose resolution would drop below 1 are removed with a
/// diagnostic.
UVPyramid build_pyramid(const raster::GBuffer& gbuffer, const FeatureMap& features,
                        const geometry::Camera& camera, const FusionConfig& config);

/// Plain bilinear resampling of a src_res grid at the texel centers of a
/// dst_res grid, with clamp-to-edge addressing.
struct Resampler {
  int src_res = 0;
  int dst_res = 0;
  std::vector<std::array<int, 4>> index;
  std::vector<std::array<double, 4>> weight;

  Resampler(int src, int dst);
  std::vector<double> apply(std::span<const double> src) const;
};

/// Feature-independent coefficients of the coarse-to-fine hole fill. The
/// fill is linear in the per-level feature sums U_l; everything stored here
/// depends only on the densities D_l.
struct HoleFillPlan {
  int channels = 0;
  std::vector<int> res;
  std::vector<std::vector<double>> inv_density;  // 1/D where D > eps, else 0
  std::vector<std::vector<double>> alpha;        // effective blend factor per texel
  /// For level l < L-1: normalized taps into level l+1 (weights sum to 1
  /// where any tap is live, all zero otherwise).
  std::vector<std::vector<std::array<Tap, 4>>> up;
  std::vector<double> weight;  // recursively filled density at level 0

  int num_levels() const { return static_cast<int>(res.size()); }
};

HoleFillPlan plan_hole_fill(const UVPyramid& pyramid, const FusionConfig& config);

/// Applies the plan to per-level feature sums (one span per level).
std::vector<double> apply_hole_fill(const HoleFillPlan& plan, std::span<const std::vector<double>> level_sums);

/// Adjoint of apply_hole_fill: gradient w.r.t. each level's feature sums.
std::vector<std::vector<double>> hole_fill_adjoint(const HoleFillPlan& plan, std::span<const double> grad_filled);

struct HoleFillResult {
  int res = 0;
  int channels = 0;
  std::vector<double> filled;  // res * res * channels
  std::vector<double> weight;  // res * res
  Diagnostics diagnostics;
};

/// Coarse-to-fine fill: norm_l = U_l / D_l, alpha_l = min(1, D_l / tau),
/// out_l = alpha_l norm_l + (1 - alpha_l) up(out_{l+1}), where up() is a
/// density-weighted bilinear upsample so only covered coarse texels
/// contribute.
HoleFillResult hole_fill(const UVPyramid& pyramid, const FusionConfig& config);

/// Same fill applied to the confidence channel: a per-texel mean of
/// max(0, n . v) in [0, 1].
std::vector<double> filled_confidence(const UVPyramid& pyramid, const FusionConfig& config);

struct FusionResult {
  int res = 0;
  int channels = 0;
  std::vector<double> fused;         // res * res * channels
  std::vector<double> total_weight;  // sum over views and levels of W_{k,l}
  std::vector<std::uint8_t> coverage;
  Diagnostics diagnostics;
};

/// Everything fuse_backward needs; immutable once written.
struct FusionState {
  FusionConfig config;
  int res = 0;
  int channels = 0;

  struct View {
    int image_width = 0;
    int image_height = 0;
    std::vector<SplatSample> samples;
    std::vector<int> level_res;
    HoleFillPlan plan;  // kHoleFilled
    std::vector<double> fraction;  // W_k / sum W, kHoleFilled
    /// kRawLevels: per level, normalized taps base->level and W_{k,l} / sum W.
    std::vector<std::vector<std::array<Tap, 4>>> raw_taps;
    std::vector<std::vector<double>> raw_fraction;
  };
  std::vector<View> views;
};

/// Visibility-aware fusion with W_{k,l} = gamma_k * up(C_{k,l} * D_{k,l})
/// and U = sum W * U_hat / sum W on texels whose total weight exceeds
/// epsilon (0 elsewhere, recorded in `coverage`).
FusionResult fuse(std::span<const UVPyramid> views, const FusionConfig& config, FusionState* state = nullptr);

/// Exact adjoint of fuse with respect to the per-view pixel features.
std::vector<FeatureMap> fuse_backward(const FusionState& state, std::span<const double> grad_out);

}  // namespace uvfuse::splat
