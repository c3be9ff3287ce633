#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uvfuse::checks {

/// One row of the invariant table: the measured value must not exceed
/// `tolerance` (or, for exact checks, must equal 0).
struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

/// <F f, g> against <f, F^T g> on random fusion instances (res <= 64,
/// 2-3 views, 1-3 levels, both fusion modes).
CheckResult adjoint_identity(std::uint64_t seed, int instances, double tolerance);

/// Fused output against central differences on random feature coordinates.
CheckResult fuse_gradient(std::uint64_t seed, int coords, double h, double tolerance);

CheckResult normal_loss_gradient(std::uint64_t seed, int coords, double h, double tolerance);
CheckResult landmark_loss_gradient(std::uint64_t seed, int coords, double h, double tolerance);
CheckResult laplacian_loss_gradient(std::uint64_t seed, int coords, double h, double tolerance);

/// splat::fuse against oracle::oracle_fuse on tiny random instances.
CheckResult fuse_oracle(std::uint64_t seed, int instances, double tolerance);

/// Tap weights of in-range samples sum to 1; the density of a GBuffer with
/// dyadic in-range uvs sums exactly to the covered pixel count.
CheckResult tap_partition(std::uint64_t seed, int samples, double tolerance);
CheckResult density_conservation(std::uint64_t seed, int instances);

/// Suites: "adjoint", "fd", "oracle", "partition" or "all". Throws Error on
/// an unknown suite name.
std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed);

}  // namespace uvfuse::checks
