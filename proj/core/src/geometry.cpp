#include "uvfuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace uvfuse::geometry {

std::string_view label_name(Label label) {
  switch (label) {
    case Label::kFace: return "face";
    case Label::kHair: return "hair";
    case Label::kBoundary: return "boundary";
    case Label::kOther: return "other";
  }
  return "other";
}

std::optional<Label> parse_label(std::string_view name) {
  if (name == "face") return Label::kFace;
  if (name == "hair") return Label::kHair;
  if (name == "boundary") return Label::kBoundary;
  if (name == "other") return Label::kOther;
  return std::nullopt;
}

void TriMesh::fill_default_annotations() {
  const std::size_t n = vertices.size();
  if (labels.empty()) labels.assign(n, Label::kOther);
  if (mirror.empty()) {
    mirror.resize(n);
    for (std::size_t i = 0; i < n; ++i) mirror[i] = static_cast<int>(i);
  }
  if (lap_weights.empty()) lap_weights.assign(n, 0.0);
}

void TriMesh::validate() const {
  const auto n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (int k = 0; k < 3; ++k) {
      if (face[k] < 0 || face[k] >= n)
        throw Error("face " + std::to_string(f) + " references vertex " + std::to_string(face[k]) +
                    " outside [0, " + std::to_string(n) + ")");
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
      throw Error("face " + std::to_string(f) + " repeats a vertex");
  }
  if (uv_corners.size() != faces.size())
    throw Error("uv_corners has " + std::to_string(uv_corners.size()) + " entries for " +
                std::to_string(faces.size()) + " faces");
  for (std::size_t f = 0; f < uv_corners.size(); ++f)
    for (const Vec2& uv : uv_corners[f])
      if (!(uv.x >= 0.0 && uv.x <= 1.0 && uv.y >= 0.0 && uv.y <= 1.0))
        throw Error("face " + std::to_string(f) + " has a uv corner outside [0,1]^2");
  if (labels.size() != vertices.size() || mirror.size() != vertices.size() ||
      lap_weights.size() != vertices.size())
    throw Error("per-vertex annotations must have " + std::to_string(n) + " entries");
  for (int i = 0; i < n; ++i) {
    const int m = mirror[static_cast<std::size_t>(i)];
    if (m < 0 || m >= n) throw Error("mirror of vertex " + std::to_string(i) + " out of range");
    if (mirror[static_cast<std::size_t>(m)] != i)
      throw Error("mirror map is not an involution at vertex " + std::to_string(i));
    if (!(lap_weights[static_cast<std::size_t>(i)] >= 0.0))
      throw Error("negative laplacian weight at vertex " + std::to_string(i));
  }
  for (std::size_t i = 0; i < vertices.size(); ++i)
    if (!is_finite(vertices[i])) throw Error("non-finite vertex " + std::to_string(i));
}

double RegionWeights::operator()(Label label) const {
  switch (label) {
    case Label::kFace: return face;
    case Label::kHair: return hair;
    case Label::kBoundary: return boundary;
    case Label::kOther: return other;
  }
  return other;
}

void apply_region_weights(TriMesh& mesh, const RegionWeights& weights) {
  mesh.fill_default_annotations();
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) mesh.lap_weights[i] = weights(mesh.labels[i]);
}

void BlendModel::validate() const {
  templ.validate();
  for (std::size_t j = 0; j < basis.size(); ++j)
    if (basis[j].size() != templ.vertices.size())
      throw Error("basis field " + std::to_string(j) + " has " + std::to_string(basis[j].size()) +
                  " entries, expected " + std::to_string(templ.vertices.size()));
}

std::vector<Vec3> deformed_vertices(const BlendModel& model, std::span<const double> coeffs,
                                    std::span<const Vec3> offsets) {
  const std::size_t n = model.templ.vertices.size();
  if (coeffs.size() != model.coeffs_dim())
    throw Error("coeffs has " + std::to_string(coeffs.size()) + " entries, model expects " +
                std::to_string(model.coeffs_dim()));
  if (offsets.size() != n)
    throw Error("offsets has " + std::to_string(offsets.size()) + " entries, mesh has " +
                std::to_string(n) + " vertices");
  std::vector<Vec3> out(model.templ.vertices);
  for (std::size_t j = 0; j < coeffs.size(); ++j) {
    const double c = coeffs[j];
    if (c == 0.0) continue;
    const auto& field = model.basis[j];
    if (field.size() != n) throw Error("basis field " + std::to_string(j) + " has wrong size");
    for (std::size_t i = 0; i < n; ++i) out[i] += field[i] * c;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] += offsets[i];
  return out;
}

std::vector<std::vector<int>> vertex_neighbors(const TriMesh& mesh) {
  std::vector<std::vector<int>> nbrs(mesh.vertices.size());
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      nbrs[static_cast<std::size_t>(a)].push_back(b);
      nbrs[static_cast<std::size_t>(b)].push_back(a);
    }
  }
  for (auto& list : nbrs) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return nbrs;
}

LaplacianResult vertex_laplacian(const std::vector<std::vector<int>>& neighbors,
                                 std::span<const Vec3> positions) {
  if (positions.size() != neighbors.size())
    throw Error("positions has " + std::to_string(positions.size()) + " entries, mesh has " +
                std::to_string(neighbors.size()) + " vertices");
  LaplacianResult result;
  result.delta.resize(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const auto& ring = neighbors[i];
    if (ring.empty()) {
      result.isolated.push_back(static_cast<int>(i));
      continue;
    }
    Vec3 mean;
    for (int j : ring) mean += positions[static_cast<std::size_t>(j)];
    mean *= 1.0 / static_cast<double>(ring.size());
    result.delta[i] = positions[i] - mean;
  }
  return result;
}

LaplacianResult vertex_laplacian(const TriMesh& mesh, std::span<const Vec3> positions) {
  return vertex_laplacian(vertex_neighbors(mesh), positions);
}

namespace {

// [v]_x such that [v]_x w = v x w.
Mat3 skew(const Vec3& v) { return Mat3{{0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0}}; }

}  // namespace

TriangleNormal triangle_normal(const Vec3& a, const Vec3& b, const Vec3& c, bool with_jacobian) {
  TriangleNormal out;
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 cr = cross(e1, e2);
  const double len = norm(cr);
  if (0.5 * len <= kDegenerateArea) {
    out.degenerate = true;
    return out;
  }
  out.normal = cr / len;
  if (!with_jacobian) return out;

  // n = c/|c|, dn/dc = (I - n n^T)/|c|; dc/db = -[e2]_x, dc/dc = [e1]_x.
  Mat3 proj = Mat3::identity();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) proj(i, j) = (proj(i, j) - out.normal[i] * out.normal[j]) / len;
  Mat3 dcdb = skew(e2);
  for (double& v : dcdb.m) v = -v;
  const Mat3 dcdc = skew(e1);
  out.jacobian[1] = proj * dcdb;
  out.jacobian[2] = proj * dcdc;
  for (std::size_t k = 0; k < 9; ++k) out.jacobian[0].m[k] = -(out.jacobian[1].m[k] + out.jacobian[2].m[k]);
  return out;
}

void triangle_normal_vjp(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& grad_normal,
                         Vec3& grad_a, Vec3& grad_b, Vec3& grad_c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 cr = cross(e1, e2);
  const double len = norm(cr);
  if (0.5 * len <= kDegenerateArea) return;
  const Vec3 n = cr / len;
  const Vec3 h = (grad_normal - n * dot(n, grad_normal)) / len;
  const Vec3 gb = cross(e2, h);
  const Vec3 gc = cross(h, e1);
  grad_b += gb;
  grad_c += gc;
  grad_a -= gb + gc;
}

FaceNormals face_normals(const TriMesh& mesh, std::span<const Vec3> positions, bool with_jacobians) {
  if (positions.size() != mesh.vertices.size())
    throw Error("positions has " + std::to_string(positions.size()) + " entries, mesh has " +
                std::to_string(mesh.vertices.size()) + " vertices");
  FaceNormals out;
  out.normals.resize(mesh.faces.size());
  if (with_jacobians) out.jacobians.resize(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& face = mesh.faces[f];
    const TriangleNormal tn =
        triangle_normal(positions[static_cast<std::size_t>(face[0])], positions[static_cast<std::size_t>(face[1])],
                        positions[static_cast<std::size_t>(face[2])], with_jacobians);
    out.normals[f] = tn.normal;
    if (with_jacobians) out.jacobians[f] = tn.jacobian;
    if (tn.degenerate) out.degenerate.push_back(static_cast<int>(f));
  }
  return out;
}

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("camera focal lengths must be positive");
  if (width < 1 || height < 1) throw Error("camera resolution must be at least 1x1");
  const Mat3 rrt = rotation * rotation.transposed();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(rrt(i, j) - (i == j ? 1.0 : 0.0)) > 1e-9)
        throw Error("camera rotation is not orthonormal");
  if (!is_finite(translation) || !std::isfinite(cx) || !std::isfinite(cy))
    throw Error("camera has non-finite parameters");
}

Vec3 Camera::ray_direction(double px, double py) const {
  const Vec3 d_cam{(px - cx) / fx, (py - cy) / fy, 1.0};
  return normalized(rotation.transpose_mul(d_cam));
}

Projection project(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.to_camera(point);
  Projection p;
  p.depth = pc.z;
  if (!(pc.z > kMinDepth)) return p;
  p.in_front = true;
  p.pixel = {camera.fx * pc.x / pc.z + camera.cx, camera.fy * pc.y / pc.z + camera.cy};
  return p;
}

std::array<Vec3, 2> projection_jacobian(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.to_camera(point);
  const double iz = 1.0 / pc.z;
  const Vec3 du_dcam{camera.fx * iz, 0.0, -camera.fx * pc.x * iz * iz};
  const Vec3 dv_dcam{0.0, camera.fy * iz, -camera.fy * pc.y * iz * iz};
  return {camera.rotation.transpose_mul(du_dcam), camera.rotation.transpose_mul(dv_dcam)};
}

std::array<double, 6> six_view_azimuths() { return {0.0, 60.0, -60.0, 120.0, -120.0, 180.0}; }

std::vector<Camera> six_view_rig(double distance, const Vec3& look_at, const RigOptions& options) {
  if (!(distance > 0.0)) throw Error("rig distance must be positive");
  const double focal = 0.5 * options.width / std::tan(0.5 * options.fov_degrees * kPi / 180.0);
  std::vector<Camera> rig;
  for (double az_deg : six_view_azimuths()) {
    const double az = az_deg * kPi / 180.0;
    // sin(pi) is not exactly 0; pin the back camera to the exact antipode.
    const Vec3 offset = az_deg == 180.0 ? Vec3{0.0, 0.0, -distance}
                                        : Vec3{distance * std::sin(az), 0.0, distance * std::cos(az)};
    const Vec3 center = look_at + offset;
    const Vec3 forward = normalized(look_at - center);
    const Vec3 right = normalized(cross(forward, Vec3{0.0, 1.0, 0.0}));
    const Vec3 down = cross(forward, right);
    Camera cam;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * options.width;
    cam.cy = 0.5 * options.height;
    cam.width = options.width;
    cam.height = options.height;
    cam.rotation = Mat3{{right.x, right.y, right.z, down.x, down.y, down.z, forward.x, forward.y, forward.z}};
    cam.translation = -(cam.rotation * center);
    rig.push_back(cam);
  }
  return rig;
}

}  // namespace uvfuse::geometry
