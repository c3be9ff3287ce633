#include "uvfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace uvfuse::synth {

using geometry::Face;
using geometry::FaceUV;
using geometry::Label;
using geometry::TriMesh;

void SceneSpec::validate() const {
  if (subdiv < 0) throw Error("subdiv must be >= 0");
  if (subdiv > 7) throw Error("subdiv above 7 is not supported");
  if (!(a > 0.0) || !(b > 0.0) || !(c > 0.0)) throw Error("ellipsoid semi-axes must be > 0");
  if (grid_n < 1) throw Error("grid n must be >= 1");
  if (cells < 1) throw Error("checkerboard cells must be >= 1");
  if (shape == Shape::kGrid && uv_layout == UVLayout::kSpherical)
    throw Error("grid scenes use the planar or per-face-atlas uv layout");
  if (shape != Shape::kGrid && uv_layout == UVLayout::kPlanar)
    throw Error("planar uv layout is only defined for grid scenes");
}

void icosphere(int subdiv, std::vector<Vec3>& vertices, std::vector<Face>& faces) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
              {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : vertices) v = normalized(v);
  faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
           {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
           {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdiv; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int i, int j) {
      const auto key = std::minmax(i, j);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      const Vec3& a = vertices[static_cast<std::size_t>(i)];
      const Vec3& b = vertices[static_cast<std::size_t>(j)];
      vertices.push_back(normalized((a + b) * 0.5));
      const int idx = static_cast<int>(vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
}

std::vector<int> mirror_pairs(std::span<const Vec3> vertices, double tolerance, Diagnostics* diagnostics) {
  const std::size_t n = vertices.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return vertices[static_cast<std::size_t>(i)].x < vertices[static_cast<std::size_t>(j)].x;
  });
  std::vector<double> xs(n);
  for (std::size_t k = 0; k < n; ++k) xs[k] = vertices[static_cast<std::size_t>(order[k])].x;

  std::vector<int> mirror(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 target{-vertices[i].x, vertices[i].y, vertices[i].z};
    auto lo = std::lower_bound(xs.begin(), xs.end(), target.x - tolerance);
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (auto it = lo; it != xs.end() && *it <= target.x + tolerance; ++it) {
      const int j = order[static_cast<std::size_t>(it - xs.begin())];
      const double d = norm(vertices[static_cast<std::size_t>(j)] - target);
      if (d < best_d || (d == best_d && j < best)) {
        best_d = d;
        best = j;
      }
    }
    if (best >= 0 && best_d <= tolerance) {
      mirror[i] = best;
    } else {
      mirror[i] = static_cast<int>(i);
      if (diagnostics)
        diagnostics->push_back({"unpaired_vertex", static_cast<long>(i), "no mirror partner within tolerance"});
    }
  }
  // Break any non-involutive pairing (possible only with near-duplicates).
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = static_cast<std::size_t>(mirror[i]);
    if (static_cast<std::size_t>(mirror[m]) != i) {
      mirror[i] = static_cast<int>(i);
      if (diagnostics)
        diagnostics->push_back({"unpaired_vertex", static_cast<long>(i), "mirror pairing is not mutual"});
    }
  }
  return mirror;
}

namespace {

double latitude_deg(const Vec3& unit_dir) {
  return std::asin(std::clamp(unit_dir.y, -1.0, 1.0)) * 180.0 / kPi;
}

Label label_for(double lat_deg, const LabelRule& rule) {
  if (lat_deg >= rule.hair_above_deg) return Label::kHair;
  if (lat_deg >= rule.boundary_above_deg) return Label::kBoundary;
  return Label::kFace;
}

// u = 0.5 + atan2(x, z) / 2pi, v = 0.5 - asin(y) / pi; the seam sits at
// azimuth +-180 degrees (u = 0 / 1).
void spherical_uvs(const std::vector<Vec3>& dirs, const std::vector<Face>& faces, std::vector<FaceUV>& uvs,
                   std::vector<int>& seam_faces) {
  uvs.resize(faces.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    std::array<double, 3> u{};
    std::array<double, 3> v{};
    std::array<bool, 3> pole{};
    for (int k = 0; k < 3; ++k) {
      const Vec3& d = dirs[static_cast<std::size_t>(faces[f][k])];
      pole[k] = std::abs(d.x) < 1e-12 && std::abs(d.z) < 1e-12;
      u[k] = pole[k] ? 0.0 : 0.5 + std::atan2(d.x, d.z) / (2.0 * kPi);
      v[k] = 0.5 - std::asin(std::clamp(d.y, -1.0, 1.0)) / kPi;
    }
    double lo = 1.0;
    double hi = 0.0;
    for (int k = 0; k < 3; ++k)
      if (!pole[k]) {
        lo = std::min(lo, u[k]);
        hi = std::max(hi, u[k]);
      }
    if (hi - lo > 0.5) {
      seam_faces.push_back(static_cast<int>(f));
      for (int k = 0; k < 3; ++k)
        if (!pole[k] && u[k] < 0.5) u[k] = 1.0;
    }
    for (int k = 0; k < 3; ++k) {
      if (!pole[k]) continue;
      double s = 0.0;
      int cnt = 0;
      for (int j = 0; j < 3; ++j)
        if (!pole[j]) {
          s += u[j];
          ++cnt;
        }
      u[k] = cnt ? s / cnt : 0.5;
    }
    for (int k = 0; k < 3; ++k) uvs[f][static_cast<std::size_t>(k)] = {std::clamp(u[k], 0.0, 1.0), std::clamp(v[k], 0.0, 1.0)};
  }
}

void atlas_uvs(std::size_t num_faces, std::vector<FaceUV>& uvs) {
  const int g = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(num_faces)))));
  const double s = 1.0 / g;
  const double m = 0.1 * s;
  uvs.resize(num_faces);
  for (std::size_t f = 0; f < num_faces; ++f) {
    const double x0 = static_cast<double>(static_cast<int>(f) % g) * s;
    const double y0 = static_cast<double>(static_cast<int>(f) / g) * s;
    uvs[f] = {Vec2{x0 + m, y0 + m}, Vec2{x0 + s - m, y0 + m}, Vec2{x0 + m, y0 + s - m}};
  }
}

}  // namespace

Scene make_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  TriMesh& mesh = scene.mesh;
  std::vector<Vec3> dirs;
  std::vector<double> lat;

  if (spec.shape == Shape::kGrid) {
    const int n = spec.grid_n;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) mesh.vertices.push_back({-1.0 + 2.0 * i / n, -1.0 + 2.0 * j / n, 0.0});
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int v00 = j * (n + 1) + i;
        const int v10 = v00 + 1;
        const int v01 = v00 + n + 1;
        const int v11 = v01 + 1;
        mesh.faces.push_back({v00, v10, v11});
        mesh.faces.push_back({v00, v11, v01});
      }
    for (const Vec3& p : mesh.vertices) lat.push_back(90.0 * p.y);
    if (spec.uv_layout == UVLayout::kPlanar) {
      for (const Face& f : mesh.faces) {
        FaceUV uv;
        for (int k = 0; k < 3; ++k) {
          const Vec3& p = mesh.vertices[static_cast<std::size_t>(f[k])];
          uv[static_cast<std::size_t>(k)] = {0.5 * (p.x + 1.0), 0.5 * (p.y + 1.0)};
        }
        mesh.uv_corners.push_back(uv);
      }
    } else {
      atlas_uvs(mesh.faces.size(), mesh.uv_corners);
    }
  } else {
    const int subdiv = spec.subdiv;
    icosphere(subdiv, dirs, mesh.faces);
    const Vec3 axes = spec.shape == Shape::kEllipsoid ? Vec3{spec.a, spec.b, spec.c} : Vec3{1.0, 1.0, 1.0};
    for (const Vec3& d : dirs) {
      mesh.vertices.push_back({d.x * axes.x, d.y * axes.y, d.z * axes.z});
      lat.push_back(latitude_deg(d));
    }
    if (spec.uv_layout == UVLayout::kSpherical)
      spherical_uvs(dirs, mesh.faces, mesh.uv_corners, scene.seam_faces);
    else
      atlas_uvs(mesh.faces.size(), mesh.uv_corners);
  }

  mesh.labels.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) mesh.labels[i] = label_for(lat[i], spec.label_rule);
  mesh.mirror = mirror_pairs(mesh.vertices, 1e-6, &scene.diagnostics);
  geometry::apply_region_weights(mesh, spec.region_weights);
  mesh.validate();

  scene.model.templ = mesh;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<Vec3> field(mesh.vertices.size());
    for (std::size_t i = 0; i < field.size(); ++i) field[i][axis] = mesh.vertices[i][axis];
    scene.model.basis.push_back(std::move(field));
  }
  return scene;
}

Vec3 Ellipsoid::normal_at(const Vec3& p) const {
  const Vec3 q = p - center;
  return normalized(Vec3{q.x / (a * a), q.y / (b * b), q.z / (c * c)});
}

std::optional<double> Ellipsoid::intersect(const Vec3& origin, const Vec3& dir) const {
  const Vec3 o = origin - center;
  const Vec3 os{o.x / a, o.y / b, o.z / c};
  const Vec3 ds{dir.x / a, dir.y / b, dir.z / c};
  const double A = dot(ds, ds);
  const double B = 2.0 * dot(os, ds);
  const double C = dot(os, os) - 1.0;
  const double disc = B * B - 4.0 * A * C;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double q = -0.5 * (B + (B >= 0.0 ? sq : -sq));
  double s0 = q / A;
  double s1 = C / q;
  if (s0 > s1) std::swap(s0, s1);
  if (s0 > 0.0) return s0;
  if (s1 > 0.0) return s1;
  return std::nullopt;
}

double Ellipsoid::distance(const Vec3& p) const {
  const Vec3 q0 = p - center;
  const std::array<double, 3> ax{a, b, c};
  const std::array<double, 3> q{std::abs(q0.x), std::abs(q0.y), std::abs(q0.z)};

  // Closest points satisfy x_i (t + a_i^2) = a_i^2 q_i. Evaluate every
  // critical point family and keep the nearest.
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](const std::array<double, 3>& x) {
    double d2 = 0.0;
    for (int i = 0; i < 3; ++i) d2 += (x[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(i)]) *
                                      (x[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(i)]);
    best = std::min(best, std::sqrt(d2));
  };

  double t_lo = -std::numeric_limits<double>::infinity();
  bool any_active = false;
  for (std::size_t i = 0; i < 3; ++i)
    if (q[i] > 0.0) {
      t_lo = std::max(t_lo, -ax[i] * ax[i]);
      any_active = true;
    }
  if (!any_active) {
    // Center point: nearest surface point lies on the shortest axis.
    return std::min({a, b, c});
  }
  auto F = [&](double t) {
    double s = -1.0;
    for (std::size_t i = 0; i < 3; ++i)
      if (q[i] > 0.0) {
        const double r = ax[i] * q[i] / (t + ax[i] * ax[i]);
        s += r * r;
      }
    return s;
  };
  double lo = t_lo;
  double hi = std::max({a, b, c}) * std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]) + 1.0;
  while (F(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 300; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (F(mid) > 0.0 ? lo : hi) = mid;
  }
  const double t = 0.5 * (lo + hi);
  std::array<double, 3> x{};
  for (std::size_t i = 0; i < 3; ++i) x[i] = q[i] > 0.0 ? ax[i] * ax[i] * q[i] / (t + ax[i] * ax[i]) : 0.0;
  consider(x);

  // Degenerate family: an inactive axis k with t = -a_k^2.
  for (std::size_t k = 0; k < 3; ++k) {
    if (q[k] > 0.0) continue;
    const double tk = -ax[k] * ax[k];
    std::array<double, 3> y{};
    double used = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < 3; ++i) {
      if (i == k) continue;
      if (q[i] == 0.0) continue;
      const double den = tk + ax[i] * ax[i];
      if (den <= 0.0) {
        ok = false;
        break;
      }
      y[i] = ax[i] * ax[i] * q[i] / den;
      used += y[i] * y[i] / (ax[i] * ax[i]);
    }
    if (!ok || used > 1.0) continue;
    y[k] = ax[k] * std::sqrt(1.0 - used);
    consider(y);
  }
  return best;
}

std::vector<deform::NormalTarget> analytic_normal_maps(const Ellipsoid& ellipsoid,
                                                       std::span<const geometry::Camera> cameras) {
  std::vector<deform::NormalTarget> maps;
  for (const auto& cam : cameras) {
    cam.validate();
    deform::NormalTarget t;
    t.width = cam.width;
    t.height = cam.height;
    t.normal.assign(static_cast<std::size_t>(cam.width) * cam.height, Vec3{});
    const Vec3 eye = cam.center();
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const Vec3 dir = cam.ray_direction(x + 0.5, y + 0.5);
        const auto s = ellipsoid.intersect(eye, dir);
        if (!s) continue;
        t.normal[static_cast<std::size_t>(y) * cam.width + x] = ellipsoid.normal_at(eye + dir * *s);
      }
    maps.push_back(std::move(t));
  }
  return maps;
}

splat::FeatureMap make_features(const raster::GBuffer& gbuffer, const FeatureRule rule, int cells, double constant) {
  splat::FeatureMap f(gbuffer.width, gbuffer.height, 3, 0.0);
  for (std::size_t i = 0; i < gbuffer.size(); ++i) {
    if (!gbuffer.mask[i]) continue;
    double* px = f.pixel(i);
    switch (rule) {
      case FeatureRule::kCheckerboard: {
        const int cu = std::min(cells - 1, static_cast<int>(gbuffer.uv[i].x * cells));
        const int cv = std::min(cells - 1, static_cast<int>(gbuffer.uv[i].y * cells));
        const double k = static_cast<double>((cu + cv) % 2);
        px[0] = k;
        px[1] = 1.0 - k;
        px[2] = 0.5;
        break;
      }
      case FeatureRule::kNormalsAsRgb:
        for (int c = 0; c < 3; ++c) px[c] = 0.5 * (gbuffer.normal[i][c] + 1.0);
        break;
      case FeatureRule::kConstant:
        for (int c = 0; c < 3; ++c) px[c] = constant;
        break;
    }
  }
  return f;
}

constexpr double kLandmarkMinCos = 0.3;

deform::LandmarkSet ellipsoid_landmarks(const TriMesh& mesh, const Ellipsoid& ellipsoid,
                                        std::span<const geometry::Camera> cameras, std::span<const int> vertices) {
  deform::LandmarkSet set;
  for (int v : vertices) {
    const Vec3& p = mesh.vertices[static_cast<std::size_t>(v)];
    const Vec3 target = ellipsoid.center + Vec3{ellipsoid.a * p.x, ellipsoid.b * p.y, ellipsoid.c * p.z};
    const Vec3 n = ellipsoid.normal_at(target);
    for (std::size_t k = 0; k < cameras.size(); ++k) {
      const auto proj = geometry::project(cameras[k], target);
      if (!proj.in_front || proj.pixel.x < 0.0 || proj.pixel.y < 0.0 || proj.pixel.x > cameras[k].width ||
          proj.pixel.y > cameras[k].height)
        continue;
      if (dot(n, normalized(cameras[k].center() - target)) > kLandmarkMinCos)
        set.entries.push_back({v, static_cast<int>(k), proj.pixel});
    }
  }
  return set;
}

std::vector<int> default_landmark_vertices(const TriMesh& mesh, int stride) {
  std::vector<int> out;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    if (mesh.labels[i] == Label::kFace || (stride > 0 && i % static_cast<std::size_t>(stride) == 0))
      out.push_back(static_cast<int>(i));
  return out;
}

std::uint64_t Rng::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

int Rng::uniform_int(int lo, int hi) {
  return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
}

double Rng::normal() {
  // Box-Muller; u1 in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

RandomView random_view(Rng& rng, int width, int height, int channels, double coverage, double uv_lo, double uv_hi) {
  RandomView rv;
  auto& cam = rv.camera;
  cam.width = width;
  cam.height = height;
  cam.fx = cam.fy = static_cast<double>(width);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;

  rv.gbuffer = raster::GBuffer(width, height);
  rv.features = splat::FeatureMap(width, height, channels, 0.0);
  auto& gb = rv.gbuffer;
  for (std::size_t i = 0; i < gb.size(); ++i) {
    for (int c = 0; c < channels; ++c) rv.features.pixel(i)[c] = rng.normal();
    if (rng.uniform() >= coverage) continue;
    gb.mask[i] = 1;
    gb.face_id[i] = 0;
    gb.bary[i] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    gb.uv[i] = {rng.uniform(uv_lo, uv_hi), rng.uniform(uv_lo, uv_hi)};
    gb.depth[i] = rng.uniform(1.0, 3.0);
    const Vec3 p = raster::surface_point(cam, gb, i);
    const Vec3 view = normalized(-p);
    gb.normal[i] = normalized(view + Vec3{rng.normal(), rng.normal(), rng.normal()} * 0.6);
  }
  return rv;
}

}  // namespace uvfuse::synth
