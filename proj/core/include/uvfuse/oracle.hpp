#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "uvfuse/geometry.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/splat.hpp"

namespace uvfuse::oracle {

/// Largest instance oracle_fuse accepts.
inline constexpr int kMaxRes = 8;
inline constexpr int kMaxViews = 3;
inline constexpr int kMaxLevels = 2;

struct OracleView {
  raster::GBuffer gbuffer;
  splat::FeatureMap features;
  geometry::Camera camera;
};

struct OracleFusion {
  std::vector<double> fused;         // res * res * channels
  std::vector<double> total_weight;  // res * res
};

/// Brute-force reference for splat::fuse: every quantity is recomputed per
/// texel with scalar loops and tent-function weights. Throws Error on
/// instances larger than kMaxRes / kMaxViews / kMaxLevels.
OracleFusion oracle_fuse(std::span<const OracleView> views, const splat::FusionConfig& config);

using ScalarFn = std::function<double(std::span<const double>)>;

struct GradcheckResult {
  double max_rel_err = 0.0;
  std::size_t worst = 0;  // coordinate with the largest error
};

/// Relative error used throughout: |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

/// Compares analytic_grad[i] with the central difference
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every i in `coords`.
GradcheckResult oracle_gradcheck(const ScalarFn& f, std::span<const double> x, std::span<const double> analytic_grad,
                                 std::span<const std::size_t> coords, double h, double floor = 1e-8);

}  // namespace uvfuse::oracle
