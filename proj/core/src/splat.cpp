#include "uvfuse/splat.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uvfuse/parallel.hpp"

namespace uvfuse::splat {

FeatureMap::FeatureMap(int w, int h, int c, double fill)
    : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

void FeatureMap::validate() const {
  if (width < 1 || height < 1 || channels < 1) throw Error("feature map dimensions must be >= 1");
  if (data.size() != pixels() * static_cast<std::size_t>(channels))
    throw Error("feature map payload has " + std::to_string(data.size()) + " values, expected " +
                std::to_string(pixels() * static_cast<std::size_t>(channels)));
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!std::isfinite(data[i])) throw Error("non-finite feature value at flat index " + std::to_string(i));
}

SplatTaps splat_taps(const Vec2& uv, int res) {
  SplatTaps out;
  const double x = uv.x * res - 0.5;
  const double y = uv.y * res - 0.5;
  const double x0 = std::floor(x);
  const double y0 = std::floor(y);
  const double fx = x - x0;
  const double fy = y - y0;
  const int ix = static_cast<int>(x0);
  const int iy = static_cast<int>(y0);
  const std::array<int, 4> xs{ix, ix + 1, ix, ix + 1};
  const std::array<int, 4> ys{iy, iy, iy + 1, iy + 1};
  const std::array<double, 4> ws{(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  for (std::size_t k = 0; k < 4; ++k) {
    if (xs[k] < 0 || xs[k] >= res || ys[k] < 0 || ys[k] >= res) continue;
    out.taps[static_cast<std::size_t>(out.count++)] = {ys[k] * res + xs[k], ws[k]};
  }
  return out;
}

bool in_range(const Vec2& uv, int res) {
  const double x = uv.x * res - 0.5;
  const double y = uv.y * res - 0.5;
  return x >= 0.0 && y >= 0.0 && x <= res - 1 && y <= res - 1;
}

namespace {

void check_res(int res) {
  if (res < 1) throw Error("uv resolution must be >= 1, got " + std::to_string(res));
}

void check_features(const raster::GBuffer& gbuffer, const FeatureMap& features) {
  if (features.width != gbuffer.width || features.height != gbuffer.height)
    throw Error("feature map is " + std::to_string(features.width) + "x" + std::to_string(features.height) +
                " but gbuffer is " + std::to_string(gbuffer.width) + "x" + std::to_string(gbuffer.height));
  features.validate();
}

std::vector<SplatSample> collect_samples(const raster::GBuffer& gbuffer) {
  std::vector<SplatSample> samples;
  for (std::size_t i = 0; i < gbuffer.size(); ++i)
    if (gbuffer.mask[i]) samples.push_back({static_cast<std::uint32_t>(i), gbuffer.uv[i]});
  return samples;
}

void splat_into(std::span<const SplatSample> samples, const FeatureMap& features, int res,
                std::vector<double>& U, std::vector<double>& D) {
  const auto nc = static_cast<std::size_t>(features.channels);
  U.assign(static_cast<std::size_t>(res) * res * nc, 0.0);
  D.assign(static_cast<std::size_t>(res) * res, 0.0);
  for (const SplatSample& s : samples) {
    const SplatTaps taps = splat_taps(s.uv, res);
    const double* f = features.pixel(s.pixel);
    for (int k = 0; k < taps.count; ++k) {
      const Tap& t = taps.taps[static_cast<std::size_t>(k)];
      const auto ti = static_cast<std::size_t>(t.index);
      D[ti] += t.weight;
      double* u = U.data() + ti * nc;
      for (std::size_t c = 0; c < nc; ++c) u[c] += t.weight * f[c];
    }
  }
}

std::vector<double> splat_scalar(std::span<const SplatSample> samples, std::span<const double> values, int res) {
  std::vector<double> out(static_cast<std::size_t>(res) * res, 0.0);
  for (const SplatSample& s : samples) {
    const double v = values[s.pixel];
    if (v == 0.0) continue;
    const SplatTaps taps = splat_taps(s.uv, res);
    for (int k = 0; k < taps.count; ++k) {
      const Tap& t = taps.taps[static_cast<std::size_t>(k)];
      out[static_cast<std::size_t>(t.index)] += t.weight * v;
    }
  }
  return out;
}

}  // namespace

LevelSplat splat_level(const raster::GBuffer& gbuffer, const FeatureMap& features, int res) {
  check_res(res);
  check_features(gbuffer, features);
  LevelSplat out;
  out.res = res;
  out.channels = features.channels;
  const auto samples = collect_samples(gbuffer);
  splat_into(samples, features, res, out.U, out.D);
  return out;
}

std::vector<double> confidence_scores(const raster::GBuffer& gbuffer, const geometry::Camera& camera) {
  std::vector<double> scores(gbuffer.size(), 0.0);
  const Vec3 eye = camera.center();
  for (std::size_t i = 0; i < gbuffer.size(); ++i) {
    if (!gbuffer.mask[i]) continue;
    const Vec3 view = normalized(eye - raster::surface_point(camera, gbuffer, i));
    scores[i] = std::max(0.0, dot(gbuffer.normal[i], view));
  }
  return scores;
}

std::vector<double> splat_confidence(const raster::GBuffer& gbuffer, const geometry::Camera& camera, int res) {
  check_res(res);
  const auto samples = collect_samples(gbuffer);
  return splat_scalar(samples, confidence_scores(gbuffer, camera), res);
}

void FusionConfig::validate(std::size_t num_views) const {
  if (gamma.size() < num_views)
    throw Error("fusion config has " + std::to_string(gamma.size()) + " view weights for " +
                std::to_string(num_views) + " views");
  bool any_positive = false;
  for (std::size_t k = 0; k < num_views; ++k) {
    if (!(gamma[k] >= 0.0)) throw Error("view weight gamma_" + std::to_string(k) + " must be >= 0");
    any_positive = any_positive || gamma[k] > 0.0;
  }
  if (num_views > 0 && !any_positive) throw Error("at least one view weight must be positive");
  if (!(epsilon > 0.0)) throw Error("epsilon must be > 0");
  if (base_res < 1) throw Error("base_res must be >= 1");
  if (num_levels < 1) throw Error("num_levels must be >= 1");
  if (!(density_tau > 0.0)) throw Error("density_tau must be > 0");
}

UVPyramid build_pyramid(const raster::GBuffer& gbuffer, const FeatureMap& features, const geometry::Camera& camera,
                        const FusionConfig& config) {
  config.validate(0);
  check_features(gbuffer, features);
  UVPyramid pyr;
  pyr.base_res = config.base_res;
  pyr.channels = features.channels;
  pyr.image_width = gbuffer.width;
  pyr.image_height = gbuffer.height;
  pyr.samples = collect_samples(gbuffer);
  if (pyr.samples.empty())
    pyr.diagnostics.push_back({"empty_view", -1, "gbuffer has no covered pixels"});

  int levels = config.num_levels;
  while (levels > 1 && (config.base_res >> (levels - 1)) < 1) --levels;
  if (levels != config.num_levels)
    pyr.diagnostics.push_back({"levels_reduced", levels,
                               "num_levels reduced from " + std::to_string(config.num_levels) + " to " +
                                   std::to_string(levels) + " for base_res " + std::to_string(config.base_res)});

  const auto scores = confidence_scores(gbuffer, camera);
  pyr.levels.resize(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) {
    PyramidLevel& level = pyr.levels[static_cast<std::size_t>(l)];
    level.res = config.base_res >> l;
    splat_into(pyr.samples, features, level.res, level.U, level.D);
    level.C = splat_scalar(pyr.samples, scores, level.res);
  }
  return pyr;
}

Resampler::Resampler(int src, int dst) : src_res(src), dst_res(dst) {
  check_res(src);
  check_res(dst);
  const auto n = static_cast<std::size_t>(dst) * dst;
  index.resize(n);
  weight.resize(n);
  auto axis = [&](int i, int& a, int& b, double& fa) {
    const double x = (i + 0.5) / dst * src - 0.5;
    const double x0 = std::floor(x);
    const double f = x - x0;
    a = std::clamp(static_cast<int>(x0), 0, src - 1);
    b = std::clamp(static_cast<int>(x0) + 1, 0, src - 1);
    fa = 1.0 - f;
  };
  for (int y = 0; y < dst; ++y) {
    int ya, yb;
    double wy;
    axis(y, ya, yb, wy);
    for (int x = 0; x < dst; ++x) {
      int xa, xb;
      double wx;
      axis(x, xa, xb, wx);
      const auto t = static_cast<std::size_t>(y) * dst + x;
      index[t] = {ya * src + xa, ya * src + xb, yb * src + xa, yb * src + xb};
      weight[t] = {wx * wy, (1.0 - wx) * wy, wx * (1.0 - wy), (1.0 - wx) * (1.0 - wy)};
    }
  }
}

std::vector<double> Resampler::apply(std::span<const double> src) const {
  std::vector<double> out(index.size(), 0.0);
  for (std::size_t t = 0; t < index.size(); ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += weight[t][k] * src[static_cast<std::size_t>(index[t][k])];
    out[t] = s;
  }
  return out;
}

HoleFillPlan plan_hole_fill(const UVPyramid& pyramid, const FusionConfig& config) {
  HoleFillPlan plan;
  plan.channels = pyramid.channels;
  const int L = pyramid.num_levels();
  if (L < 1) throw Error("pyramid has no levels");
  plan.res.resize(static_cast<std::size_t>(L));
  plan.inv_density.resize(static_cast<std::size_t>(L));
  plan.alpha.resize(static_cast<std::size_t>(L));
  plan.up.resize(static_cast<std::size_t>(L > 1 ? L - 1 : 0));

  const double eps = config.epsilon;
  const double tau = config.density_tau;
  std::vector<double> coarse_weight;
  for (int l = L - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const PyramidLevel& level = pyramid.levels[lu];
    plan.res[lu] = level.res;
    const auto n = static_cast<std::size_t>(level.res) * level.res;
    auto& inv = plan.inv_density[lu];
    auto& alpha = plan.alpha[lu];
    inv.assign(n, 0.0);
    alpha.assign(n, 0.0);
    std::vector<double> weight(n, 0.0);
    for (std::size_t t = 0; t < n; ++t)
      if (level.D[t] > eps) inv[t] = 1.0 / level.D[t];

    if (l == L - 1) {
      for (std::size_t t = 0; t < n; ++t) {
        if (inv[t] == 0.0) continue;
        alpha[t] = 1.0;
        weight[t] = level.D[t];
      }
    } else {
      const PyramidLevel& coarse = pyramid.levels[lu + 1];
      const Resampler rs(coarse.res, level.res);
      auto& up = plan.up[lu];
      up.assign(n, {});
      for (std::size_t t = 0; t < n; ++t) {
        std::array<double, 4> a{};
        double total = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
          const double cw = coarse_weight[static_cast<std::size_t>(rs.index[t][k])];
          a[k] = rs.weight[t][k] * cw;
          total += a[k];
        }
        const bool covered = inv[t] != 0.0;
        if (total > 0.0) {
          for (std::size_t k = 0; k < 4; ++k) up[t][k] = {rs.index[t][k], a[k] / total};
          alpha[t] = covered ? std::min(1.0, level.D[t] / tau) : 0.0;
          weight[t] = alpha[t] * (covered ? level.D[t] : 0.0) + (1.0 - alpha[t]) * total;
        } else if (covered) {
          alpha[t] = 1.0;
          weight[t] = level.D[t];
        }
      }
    }
    coarse_weight = std::move(weight);
  }
  plan.weight = std::move(coarse_weight);
  return plan;
}

std::vector<double> apply_hole_fill(const HoleFillPlan& plan, std::span<const std::vector<double>> level_sums) {
  const int L = plan.num_levels();
  if (static_cast<int>(level_sums.size()) != L) throw Error("hole fill expects one feature sum per level");
  const auto nc = static_cast<std::size_t>(plan.channels);
  std::vector<double> coarse;
  for (int l = L - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto n = plan.inv_density[lu].size();
    if (level_sums[lu].size() != n * nc) throw Error("level " + std::to_string(l) + " feature sum has wrong size");
    std::vector<double> out(n * nc, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double a = plan.alpha[lu][t];
      const double inv = plan.inv_density[lu][t];
      double* o = out.data() + t * nc;
      if (a != 0.0 && inv != 0.0) {
        const double* u = level_sums[lu].data() + t * nc;
        for (std::size_t c = 0; c < nc; ++c) o[c] = a * inv * u[c];
      }
      if (l < L - 1 && a != 1.0) {
        for (const Tap& tap : plan.up[lu][t]) {
          if (tap.weight == 0.0) continue;
          const double w = (1.0 - a) * tap.weight;
          const double* src = coarse.data() + static_cast<std::size_t>(tap.index) * nc;
          for (std::size_t c = 0; c < nc; ++c) o[c] += w * src[c];
        }
      }
    }
    coarse = std::move(out);
  }
  return coarse;
}

std::vector<std::vector<double>> hole_fill_adjoint(const HoleFillPlan& plan, std::span<const double> grad_filled) {
  const int L = plan.num_levels();
  const auto nc = static_cast<std::size_t>(plan.channels);
  std::vector<std::vector<double>> grad_sums(static_cast<std::size_t>(L));
  if (grad_filled.size() != plan.inv_density[0].size() * nc) throw Error("hole fill gradient has wrong size");
  std::vector<double> g_out(grad_filled.begin(), grad_filled.end());
  for (int l = 0; l < L; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    const auto n = plan.inv_density[lu].size();
    auto& gs = grad_sums[lu];
    gs.assign(n * nc, 0.0);
    std::vector<double> g_coarse;
    if (l < L - 1) g_coarse.assign(plan.inv_density[lu + 1].size() * nc, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double a = plan.alpha[lu][t];
      const double inv = plan.inv_density[lu][t];
      const double* g = g_out.data() + t * nc;
      if (a != 0.0 && inv != 0.0) {
        double* dst = gs.data() + t * nc;
        for (std::size_t c = 0; c < nc; ++c) dst[c] = a * inv * g[c];
      }
      if (l < L - 1 && a != 1.0) {
        for (const Tap& tap : plan.up[lu][t]) {
          if (tap.weight == 0.0) continue;
          const double w = (1.0 - a) * tap.weight;
          double* dst = g_coarse.data() + static_cast<std::size_t>(tap.index) * nc;
          for (std::size_t c = 0; c < nc; ++c) dst[c] += w * g[c];
        }
      }
    }
    g_out = std::move(g_coarse);
  }
  return grad_sums;
}

namespace {

std::vector<std::vector<double>> feature_sums(const UVPyramid& pyramid) {
  std::vector<std::vector<double>> sums;
  sums.reserve(pyramid.levels.size());
  for (const auto& level : pyramid.levels) sums.push_back(level.U);
  return sums;
}

bool any_density(const UVPyramid& pyramid, double eps) {
  for (const auto& level : pyramid.levels)
    for (double d : level.D)
      if (d > eps) return true;
  return false;
}

}  // namespace

HoleFillResult hole_fill(const UVPyramid& pyramid, const FusionConfig& config) {
  HoleFillResult out;
  out.res = pyramid.levels.empty() ? 0 : pyramid.levels[0].res;
  out.channels = pyramid.channels;
  const HoleFillPlan plan = plan_hole_fill(pyramid, config);
  const auto sums = feature_sums(pyramid);
  out.filled = apply_hole_fill(plan, sums);
  out.weight = plan.weight;
  if (!any_density(pyramid, config.epsilon))
    out.diagnostics.push_back({"no_coverage", -1, "density is zero at every pyramid level"});
  return out;
}

std::vector<double> filled_confidence(const UVPyramid& pyramid, const FusionConfig& config) {
  HoleFillPlan plan = plan_hole_fill(pyramid, config);
  plan.channels = 1;
  std::vector<std::vector<double>> sums;
  for (const auto& level : pyramid.levels) sums.push_back(level.C);
  return apply_hole_fill(plan, sums);
}

namespace {

void check_compatible(std::span<const UVPyramid> views) {
  for (std::size_t k = 1; k < views.size(); ++k) {
    if (views[k].base_res != views[0].base_res || views[k].num_levels() != views[0].num_levels() ||
        views[k].channels != views[0].channels)
      throw Error("view " + std::to_string(k) + " pyramid does not match view 0 (base_res, levels, channels)");
  }
}

// gamma * C_l * D_l resampled to the base grid.
std::vector<double> level_weight(const PyramidLevel& level, int base_res, double gamma) {
  std::vector<double> cd(level.D.size());
  for (std::size_t t = 0; t < cd.size(); ++t) cd[t] = gamma * level.C[t] * level.D[t];
  if (level.res == base_res) return cd;
  return Resampler(level.res, base_res).apply(cd);
}

}  // namespace

FusionResult fuse(std::span<const UVPyramid> views, const FusionConfig& config, FusionState* state) {
  if (views.empty()) throw Error("fuse needs at least one view");
  config.validate(views.size());
  check_compatible(views);

  const int res = views[0].levels.at(0).res;
  const auto nc = static_cast<std::size_t>(views[0].channels);
  const auto n = static_cast<std::size_t>(res) * res;
  const int L = views[0].num_levels();
  const double eps = config.epsilon;

  // Per-view numerators and weights; each slot written by one task.
  struct Partial {
    std::vector<double> num;  // sum over this view's terms of W * U_hat
    std::vector<double> den;  // sum over this view's terms of W
    FusionState::View record;
    std::vector<std::vector<double>> raw_weight;
  };
  std::vector<Partial> partial(views.size());

  parallel_for(views.size(), [&](std::size_t k) {
    const UVPyramid& pyr = views[k];
    const double gamma = config.gamma[k];
    Partial& p = partial[k];
    p.num.assign(n * nc, 0.0);
    p.den.assign(n, 0.0);
    p.record.image_width = pyr.image_width;
    p.record.image_height = pyr.image_height;
    for (const auto& level : pyr.levels) p.record.level_res.push_back(level.res);

    if (config.mode == FusionMode::kHoleFilled) {
      HoleFillPlan plan = plan_hole_fill(pyr, config);
      const auto filled = apply_hole_fill(plan, feature_sums(pyr));
      std::vector<double> w(n, 0.0);
      for (const auto& level : pyr.levels) {
        const auto lw = level_weight(level, res, gamma);
        for (std::size_t t = 0; t < n; ++t) w[t] += lw[t];
      }
      for (std::size_t t = 0; t < n; ++t) {
        if (!(plan.weight[t] > 0.0)) w[t] = 0.0;
        p.den[t] = w[t];
        for (std::size_t c = 0; c < nc; ++c) p.num[t * nc + c] = w[t] * filled[t * nc + c];
      }
      p.record.plan = std::move(plan);
      p.raw_weight.push_back(std::move(w));
    } else {
      p.record.raw_taps.resize(static_cast<std::size_t>(L));
      for (int l = 0; l < L; ++l) {
        const auto lu = static_cast<std::size_t>(l);
        const PyramidLevel& level = pyr.levels[lu];
        const Resampler rs(level.res, res);
        auto w = level_weight(level, res, gamma);
        auto& taps = p.record.raw_taps[lu];
        taps.assign(n, {});
        for (std::size_t t = 0; t < n; ++t) {
          double total = 0.0;
          std::array<double, 4> b{};
          for (std::size_t k2 = 0; k2 < 4; ++k2) {
            const auto s = static_cast<std::size_t>(rs.index[t][k2]);
            b[k2] = level.D[s] > eps ? rs.weight[t][k2] : 0.0;
            total += b[k2] * level.D[s];
          }
          if (!(total > 0.0)) {
            w[t] = 0.0;
            continue;
          }
          for (std::size_t k2 = 0; k2 < 4; ++k2) taps[t][k2] = {rs.index[t][k2], b[k2] / total};
          p.den[t] += w[t];
          for (const Tap& tap : taps[t]) {
            if (tap.weight == 0.0) continue;
            const double* u = level.U.data() + static_cast<std::size_t>(tap.index) * nc;
            for (std::size_t c = 0; c < nc; ++c) p.num[t * nc + c] += w[t] * tap.weight * u[c];
          }
        }
        p.raw_weight.push_back(std::move(w));
      }
    }
    if (state) p.record.samples = pyr.samples;
  });

  FusionResult out;
  out.res = res;
  out.channels = static_cast<int>(nc);
  out.fused.assign(n * nc, 0.0);
  out.total_weight.assign(n, 0.0);
  out.coverage.assign(n, 0);
  std::vector<double> num(n * nc, 0.0);
  for (const Partial& p : partial) {
    for (std::size_t t = 0; t < n; ++t) out.total_weight[t] += p.den[t];
    for (std::size_t i = 0; i < num.size(); ++i) num[i] += p.num[i];
  }
  std::size_t uncovered = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (!(out.total_weight[t] > eps)) {
      ++uncovered;
      continue;
    }
    out.coverage[t] = 1;
    const double inv = 1.0 / out.total_weight[t];
    for (std::size_t c = 0; c < nc; ++c) out.fused[t * nc + c] = num[t * nc + c] * inv;
  }
  if (uncovered == n) out.diagnostics.push_back({"no_coverage", -1, "no texel has total weight above epsilon"});

  if (state) {
    state->config = config;
    state->res = res;
    state->channels = static_cast<int>(nc);
    state->views.clear();
    for (Partial& p : partial) {
      auto to_fraction = [&](std::vector<double>& w) {
        for (std::size_t t = 0; t < n; ++t) w[t] = out.coverage[t] ? w[t] / out.total_weight[t] : 0.0;
      };
      if (config.mode == FusionMode::kHoleFilled) {
        to_fraction(p.raw_weight[0]);
        p.record.fraction = std::move(p.raw_weight[0]);
      } else {
        for (auto& w : p.raw_weight) to_fraction(w);
        p.record.raw_fraction = std::move(p.raw_weight);
      }
      state->views.push_back(std::move(p.record));
    }
  }
  return out;
}

std::vector<FeatureMap> fuse_backward(const FusionState& state, std::span<const double> grad_out) {
  const auto nc = static_cast<std::size_t>(state.channels);
  const auto n = static_cast<std::size_t>(state.res) * state.res;
  if (grad_out.size() != n * nc)
    throw Error("gradient has " + std::to_string(grad_out.size()) + " values, fused map has " +
                std::to_string(n * nc));

  std::vector<FeatureMap> grads(state.views.size());
  parallel_for(state.views.size(), [&](std::size_t k) {
    const FusionState::View& view = state.views[k];
    const std::size_t L = view.level_res.size();
    std::vector<std::vector<double>> g_sums(L);

    if (state.config.mode == FusionMode::kHoleFilled) {
      std::vector<double> g_filled(n * nc, 0.0);
      for (std::size_t t = 0; t < n; ++t) {
        const double f = view.fraction[t];
        if (f == 0.0) continue;
        for (std::size_t c = 0; c < nc; ++c) g_filled[t * nc + c] = f * grad_out[t * nc + c];
      }
      g_sums = hole_fill_adjoint(view.plan, g_filled);
    } else {
      for (std::size_t l = 0; l < L; ++l) {
        const auto nl = static_cast<std::size_t>(view.level_res[l]) * static_cast<std::size_t>(view.level_res[l]);
        auto& gs = g_sums[l];
        gs.assign(nl * nc, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
          const double f = view.raw_fraction[l][t];
          if (f == 0.0) continue;
          for (const Tap& tap : view.raw_taps[l][t]) {
            if (tap.weight == 0.0) continue;
            double* dst = gs.data() + static_cast<std::size_t>(tap.index) * nc;
            for (std::size_t c = 0; c < nc; ++c) dst[c] += f * tap.weight * grad_out[t * nc + c];
          }
        }
      }
    }

    FeatureMap g(view.image_width, view.image_height, static_cast<int>(nc));
    for (const SplatSample& s : view.samples) {
      double* dst = g.pixel(s.pixel);
      for (std::size_t l = 0; l < L; ++l) {
        const SplatTaps taps = splat_taps(s.uv, view.level_res[l]);
        for (int i = 0; i < taps.count; ++i) {
          const Tap& tap = taps.taps[static_cast<std::size_t>(i)];
          const double* src = g_sums[l].data() + static_cast<std::size_t>(tap.index) * nc;
          for (std::size_t c = 0; c < nc; ++c) dst[c] += tap.weight * src[c];
        }
      }
    }
    grads[k] = std::move(g);
  });
  return grads;
}

}  // namespace uvfuse::splat
