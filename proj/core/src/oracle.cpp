#include "uvfuse/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uvfuse::oracle {

namespace {

double tent(double x) { return std::max(0.0, 1.0 - std::abs(x)); }

// Weight of an observation at uv on texel (i, j) of a res x res grid.
double splat_weight(const Vec2& uv, int res, int i, int j) {
  return tent(uv.x * res - 0.5 - i) * tent(uv.y * res - 0.5 - j);
}

// Clamp-to-edge bilinear weight of source texel s when sampling a src grid
// at destination texel t of a dst grid, along one axis.
double resample_axis(int src, int dst, int t, int s) {
  const double x = (t + 0.5) * src / dst - 0.5;
  double w = 0.0;
  const int lo = static_cast<int>(std::floor(x)) - 1;
  for (int p = lo; p <= lo + 3; ++p)
    if (std::clamp(p, 0, src - 1) == s) w += tent(x - p);
  return w;
}

struct Level {
  int res = 0;
  std::vector<double> U, D, C;
};

}  // namespace

OracleFusion oracle_fuse(std::span<const OracleView> views, const splat::FusionConfig& config) {
  if (views.empty() || static_cast<int>(views.size()) > kMaxViews)
    throw Error("oracle_fuse takes 1 to " + std::to_string(kMaxViews) + " views");
  if (config.base_res > kMaxRes) throw Error("oracle_fuse res above " + std::to_string(kMaxRes));
  if (config.num_levels > kMaxLevels) throw Error("oracle_fuse levels above " + std::to_string(kMaxLevels));
  config.validate(views.size());

  const int R = config.base_res;
  int L = config.num_levels;
  while (L > 1 && (R >> (L - 1)) < 1) --L;
  const int C = views[0].features.channels;
  const double eps = config.epsilon;
  const int n = R * R;

  OracleFusion out;
  out.fused.assign(static_cast<std::size_t>(n * C), 0.0);
  out.total_weight.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<double> numer(static_cast<std::size_t>(n * C), 0.0);

  for (std::size_t k = 0; k < views.size(); ++k) {
    const OracleView& v = views[k];
    const auto& gb = v.gbuffer;
    const auto& cam = v.camera;
    if (v.features.channels != C) throw Error("oracle_fuse views disagree on channel count");

    // Camera center c = -R^T t, written out explicitly.
    double eye[3];
    for (int a = 0; a < 3; ++a) {
      eye[a] = 0.0;
      for (int b = 0; b < 3; ++b) eye[a] -= cam.rotation(b, a) * cam.translation[b];
    }

    std::vector<double> score(gb.size(), 0.0);
    for (std::size_t p = 0; p < gb.size(); ++p) {
      if (!gb.mask[p]) continue;
      const double z = gb.depth[p];
      const double px = static_cast<double>(p % static_cast<std::size_t>(gb.width)) + 0.5;
      const double py = static_cast<double>(p / static_cast<std::size_t>(gb.width)) + 0.5;
      const double xc[3] = {(px - cam.cx) / cam.fx * z - cam.translation.x,
                            (py - cam.cy) / cam.fy * z - cam.translation.y, z - cam.translation.z};
      double dir[3];
      double len = 0.0;
      for (int a = 0; a < 3; ++a) {
        double w = 0.0;
        for (int b = 0; b < 3; ++b) w += cam.rotation(b, a) * xc[b];
        dir[a] = eye[a] - w;
        len += dir[a] * dir[a];
      }
      len = std::sqrt(len);
      double s = 0.0;
      for (int a = 0; a < 3; ++a) s += gb.normal[p][a] * dir[a] / len;
      score[p] = std::max(0.0, s);
    }

    std::vector<Level> levels(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) {
      Level& lv = levels[static_cast<std::size_t>(l)];
      lv.res = R >> l;
      const int m = lv.res * lv.res;
      lv.U.assign(static_cast<std::size_t>(m * C), 0.0);
      lv.D.assign(static_cast<std::size_t>(m), 0.0);
      lv.C.assign(static_cast<std::size_t>(m), 0.0);
      for (int j = 0; j < lv.res; ++j)
        for (int i = 0; i < lv.res; ++i) {
          const int t = j * lv.res + i;
          for (std::size_t p = 0; p < gb.size(); ++p) {
            if (!gb.mask[p]) continue;
            const double w = splat_weight(gb.uv[p], lv.res, i, j);
            if (w == 0.0) continue;
            lv.D[static_cast<std::size_t>(t)] += w;
            lv.C[static_cast<std::size_t>(t)] += w * score[p];
            for (int c = 0; c < C; ++c)
              lv.U[static_cast<std::size_t>(t * C + c)] += w * v.features.data[p * static_cast<std::size_t>(C) + static_cast<std::size_t>(c)];
          }
        }
    }

    // Resampling weight from coarse texel s (grid src) to fine texel t (grid dst).
    auto rs = [](int src, int dst, int t, int s) {
      return resample_axis(src, dst, t % dst, s % src) * resample_axis(src, dst, t / dst, s / src);
    };

    // Per-level W_{k,l} = gamma_k * up(C_l * D_l) on the base grid.
    std::vector<std::vector<double>> W(static_cast<std::size_t>(L), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int l = 0; l < L; ++l) {
      const Level& lv = levels[static_cast<std::size_t>(l)];
      for (int t = 0; t < n; ++t) {
        double w = 0.0;
        for (int s = 0; s < lv.res * lv.res; ++s) {
          const double cd = lv.C[static_cast<std::size_t>(s)] * lv.D[static_cast<std::size_t>(s)];
          w += (lv.res == R ? (s == t ? 1.0 : 0.0) : rs(lv.res, R, t, s)) * cd;
        }
        W[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)] = config.gamma[k] * w;
      }
    }

    if (config.mode == splat::FusionMode::kHoleFilled) {
      // Coarse-to-fine: filled value and filled weight per texel.
      std::vector<double> out_c, wf_c;
      for (int l = L - 1; l >= 0; --l) {
        const Level& lv = levels[static_cast<std::size_t>(l)];
        const int m = lv.res * lv.res;
        std::vector<double> out_l(static_cast<std::size_t>(m * C), 0.0);
        std::vector<double> wf_l(static_cast<std::size_t>(m), 0.0);
        for (int t = 0; t < m; ++t) {
          const double D = lv.D[static_cast<std::size_t>(t)];
          const bool covered = D > eps;
          double alpha = 0.0;
          double total = 0.0;
          const int cres = l < L - 1 ? levels[static_cast<std::size_t>(l + 1)].res : 0;
          if (l < L - 1)
            for (int s = 0; s < cres * cres; ++s) total += rs(cres, lv.res, t, s) * wf_c[static_cast<std::size_t>(s)];
          if (l == L - 1) {
            alpha = covered ? 1.0 : 0.0;
            wf_l[static_cast<std::size_t>(t)] = covered ? D : 0.0;
          } else if (total > 0.0) {
            alpha = covered ? std::min(1.0, D / config.density_tau) : 0.0;
            wf_l[static_cast<std::size_t>(t)] = alpha * (covered ? D : 0.0) + (1.0 - alpha) * total;
          } else if (covered) {
            alpha = 1.0;
            wf_l[static_cast<std::size_t>(t)] = D;
          }
          for (int c = 0; c < C; ++c) {
            double val = covered ? alpha * lv.U[static_cast<std::size_t>(t * C + c)] / D : 0.0;
            if (l < L - 1 && total > 0.0) {
              double up = 0.0;
              for (int s = 0; s < cres * cres; ++s)
                up += rs(cres, lv.res, t, s) * wf_c[static_cast<std::size_t>(s)] * out_c[static_cast<std::size_t>(s * C + c)];
              val += (1.0 - alpha) * up / total;
            }
            out_l[static_cast<std::size_t>(t * C + c)] = val;
          }
        }
        out_c = std::move(out_l);
        wf_c = std::move(wf_l);
      }
      for (int t = 0; t < n; ++t) {
        double w = 0.0;
        for (int l = 0; l < L; ++l) w += W[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
        if (!(wf_c[static_cast<std::size_t>(t)] > 0.0)) w = 0.0;
        out.total_weight[static_cast<std::size_t>(t)] += w;
        for (int c = 0; c < C; ++c) numer[static_cast<std::size_t>(t * C + c)] += w * out_c[static_cast<std::size_t>(t * C + c)];
      }
    } else {
      // Each level's normalized features, upsampled with density weighting
      // over the texels whose density exceeds epsilon.
      for (int l = 0; l < L; ++l) {
        const Level& lv = levels[static_cast<std::size_t>(l)];
        for (int t = 0; t < n; ++t) {
          double den = 0.0;
          for (int s = 0; s < lv.res * lv.res; ++s) {
            const double D = lv.D[static_cast<std::size_t>(s)];
            if (!(D > eps)) continue;
            den += (lv.res == R ? (s == t ? 1.0 : 0.0) : rs(lv.res, R, t, s)) * D;
          }
          if (!(den > 0.0)) continue;
          const double w = W[static_cast<std::size_t>(l)][static_cast<std::size_t>(t)];
          out.total_weight[static_cast<std::size_t>(t)] += w;
          for (int c = 0; c < C; ++c) {
            double num = 0.0;
            for (int s = 0; s < lv.res * lv.res; ++s) {
              if (!(lv.D[static_cast<std::size_t>(s)] > eps)) continue;
              num += (lv.res == R ? (s == t ? 1.0 : 0.0) : rs(lv.res, R, t, s)) * lv.U[static_cast<std::size_t>(s * C + c)];
            }
            numer[static_cast<std::size_t>(t * C + c)] += w * num / den;
          }
        }
      }
    }
  }

  for (int t = 0; t < n; ++t) {
    const double w = out.total_weight[static_cast<std::size_t>(t)];
    if (!(w > eps)) continue;
    for (int c = 0; c < C; ++c)
      out.fused[static_cast<std::size_t>(t * C + c)] = numer[static_cast<std::size_t>(t * C + c)] / w;
  }
  return out;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradcheckResult oracle_gradcheck(const ScalarFn& f, std::span<const double> x, std::span<const double> analytic_grad,
                                 std::span<const std::size_t> coords, double h, double floor) {
  if (analytic_grad.size() != x.size()) throw Error("gradient and point sizes differ");
  if (!(h > 0.0)) throw Error("finite-difference step must be > 0");
  GradcheckResult r;
  std::vector<double> p(x.begin(), x.end());
  for (std::size_t i : coords) {
    if (i >= x.size()) throw Error("gradcheck coordinate " + std::to_string(i) + " out of range");
    p[i] = x[i] + h;
    const double fp = f(p);
    p[i] = x[i] - h;
    const double fm = f(p);
    p[i] = x[i];
    const double err = relative_error(analytic_grad[i], (fp - fm) / (2.0 * h), floor);
    if (err > r.max_rel_err) {
      r.max_rel_err = err;
      r.worst = i;
    }
  }
  return r;
}

}  // namespace uvfuse::oracle
