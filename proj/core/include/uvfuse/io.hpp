#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "uvfuse/anchor.hpp"
#include "uvfuse/deform.hpp"
#include "uvfuse/geometry.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/splat.hpp"

namespace uvfuse::io {

namespace fs = std::filesystem;

/// Dense float tensor. On disk: "UVT1", u32 ndim, ndim x u32 dims, then
/// f32 values, all little-endian, row-major with the last dim fastest.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t size() const;
};

std::vector<std::uint8_t> encode_uvt(const Tensor& t);
/// Throws Error naming the byte offset of the first problem.
Tensor decode_uvt(const std::vector<std::uint8_t>& bytes, const std::string& name = "uvt");
void save_uvt(const fs::path& path, const Tensor& t);
Tensor load_uvt(const fs::path& path);

Tensor to_tensor(const splat::FeatureMap& map);
splat::FeatureMap to_feature_map(const Tensor& t);

/// `v`, `vt` and `f v/vt` records; one vt per face corner on save.
void save_obj(const fs::path& path, const geometry::TriMesh& mesh);
geometry::TriMesh parse_obj(const std::string& text, const std::string& name = "obj");
geometry::TriMesh load_obj(const fs::path& path);

/// One `vertex_index label mirror_index weight` line per vertex.
void save_labels(const fs::path& path, const geometry::TriMesh& mesh);
void parse_labels(const std::string& text, geometry::TriMesh& mesh, const std::string& name = "labels");
void load_labels(const fs::path& path, geometry::TriMesh& mesh);

/// One `vertex camera u v` line per landmark.
void save_landmarks(const fs::path& path, const deform::LandmarkSet& set);
deform::LandmarkSet parse_landmarks(const std::string& text, const std::string& name = "landmarks");
deform::LandmarkSet load_landmarks(const fs::path& path);

/// key=value text (fx, fy, cx, cy, width, height, r00..r22, tx, ty, tz);
/// a JSON object with the same keys is also accepted.
void save_camera(const fs::path& path, const geometry::Camera& camera);
geometry::Camera parse_camera(const std::string& text, const std::string& name = "camera");
geometry::Camera load_camera(const fs::path& path);

/// Portable float map, rows stored bottom-to-top, little-endian (scale < 0).
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<float> data;  // top-to-bottom rows
};

std::vector<std::uint8_t> encode_pfm(const FloatImage& img);
FloatImage decode_pfm(const std::vector<std::uint8_t>& bytes, const std::string& name = "pfm");
void save_pfm(const fs::path& path, const FloatImage& img);
FloatImage load_pfm(const fs::path& path);

deform::NormalTarget to_normal_target(const FloatImage& img);
FloatImage from_normals(int width, int height, const std::vector<Vec3>& normals);

/// 8-bit PNG (1 gray or 3/4 color channels), values in [0, 1].
void save_png(const fs::path& path, int width, int height, int channels, const std::vector<double>& values);
/// RGB preview of the first three channels, each min-max normalized.
void save_preview_png(const fs::path& path, int width, int height, int channels, const std::vector<double>& values);

/// Flat key=value file: '#' comments and blank lines ignored. Keeps the
/// source name and line of each key so value errors can be located.
struct KeyValues {
  std::string source;
  std::map<std::string, std::string> values;
  std::map<std::string, std::size_t> lines;

  /// "source:LINE: key 'k'" (or without LINE for keys set in code).
  std::string where(const std::string& key) const;
  /// Throws Error prefixed by where(key).
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;
};
KeyValues parse_key_values(const std::string& text, const std::string& name);
KeyValues load_key_values(const fs::path& path);

/// Helpers that throw Error naming the key on malformed values.
double kv_double(const KeyValues& kv, const std::string& key, double fallback);
int kv_int(const KeyValues& kv, const std::string& key, int fallback);
std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback);
std::vector<double> kv_doubles(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback);

/// Fields of FusionConfig: gamma (comma list), epsilon, base_res,
/// num_levels, density_tau, mode (hole_filled | raw_levels).
splat::FusionConfig fusion_config(const KeyValues& kv);
/// Fields of DeformConfig plus w_face, w_hair, w_boundary, w_other and
/// targets_in_camera_space (0/1).
deform::DeformConfig deform_config(const KeyValues& kv);
/// Rejects keys outside `allowed`.
void check_keys(const KeyValues& kv, const std::vector<std::string>& allowed);

/// views.json: {"views": [{"camera": ..., "normal": ..., "gbuffer": ...,
/// "features": ...}]}; relative paths resolve against the file's folder.
struct ViewEntry {
  fs::path camera;
  fs::path normal;
  fs::path gbuffer;
  fs::path features;
};
std::vector<ViewEntry> load_views(const fs::path& path);
void save_views(const fs::path& path, const std::vector<ViewEntry>& views);

/// GBuffer as a folder of UVT files: face_id, bary, uv, normal, depth, mask.
void save_gbuffer(const fs::path& dir, const raster::GBuffer& gb);
raster::GBuffer load_gbuffer(const fs::path& dir);

/// Splats as an N x 16 UVT: kind, index, b0, b1, b2, offset(3), scale,
/// opacity, color(3), position(3).
inline constexpr std::uint32_t kSplatColumns = 16;
void save_splats(const fs::path& path, const anchor::GaussianSet& set);
anchor::GaussianSet load_splats(const fs::path& path);

/// CSV with header iter,total,nml,lmk,lap.
void save_trace(const fs::path& path, const std::vector<deform::LossTerms>& trace);

std::string read_text(const fs::path& path);
std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const fs::path& path, const std::string& text);

/// `%.9g` formatting used by every text writer.
std::string format_g9(double v);

}  // namespace uvfuse::io
