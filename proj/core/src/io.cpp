#include "uvfuse/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

namespace uvfuse::io {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string g17(double v) { return fmt("%.17g", v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

[[noreturn]] void line_error(const std::string& name, std::size_t line, const std::string& what) {
  throw Error(name + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, const std::string& name, std::size_t line) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    line_error(name, line, "expected a finite number, got '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& name, std::size_t line) {
  long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) line_error(name, line, "expected an integer, got '" + s + "'");
  return v;
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    const std::string raw = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    ++line;
    fn(raw, line);
    if (end == std::string::npos) break;
    pos = end + 1;
  }
}

}  // namespace

std::string format_g9(double v) { return fmt("%.9g", v); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  const std::string s = read_text(path);
  return {s.begin(), s.end()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---------------------------------------------------------------- UVT

std::size_t Tensor::size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_uvt(const Tensor& t) {
  if (t.size() != t.data.size())
    throw Error("tensor dims describe " + std::to_string(t.size()) + " values, data has " +
                std::to_string(t.data.size()));
  std::vector<std::uint8_t> out{'U', 'V', 'T', '1'};
  put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  out.reserve(out.size() + 4 * t.data.size());
  for (float v : t.data) put_f32(out, v);
  return out;
}

Tensor decode_uvt(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  auto fail = [&](std::size_t offset, const std::string& what) -> void {
    throw Error(name + ": byte " + std::to_string(offset) + ": " + what);
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "UVT1", 4) != 0) fail(0, "bad magic (expected UVT1)");
  if (bytes.size() < 8) fail(4, "truncated header (missing ndim)");
  const std::uint32_t ndim = get_u32(bytes.data() + 4);
  if (ndim > 16) fail(4, "ndim " + std::to_string(ndim) + " exceeds 16");
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header) fail(8, "truncated header (dims)");
  Tensor t;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < ndim; ++i) {
    t.dims.push_back(get_u32(bytes.data() + 8 + 4 * i));
    count *= t.dims.back();
    if (count > (std::size_t{1} << 34)) fail(8 + 4 * i, "tensor too large");
  }
  const std::size_t expected = header + 4 * count;
  if (bytes.size() < expected)
    fail(bytes.size(), "truncated payload (expected " + std::to_string(expected) + " bytes)");
  if (bytes.size() > expected) fail(expected, "trailing bytes after payload");
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t off = header + 4 * i;
    t.data[i] = get_f32(bytes.data() + off);
    if (!std::isfinite(t.data[i])) fail(off, "non-finite value");
  }
  return t;
}

void save_uvt(const fs::path& path, const Tensor& t) { write_bytes(path, encode_uvt(t)); }
Tensor load_uvt(const fs::path& path) { return decode_uvt(read_bytes(path), path.string()); }

Tensor to_tensor(const splat::FeatureMap& map) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(map.height), static_cast<std::uint32_t>(map.width),
            static_cast<std::uint32_t>(map.channels)};
  t.data.reserve(map.data.size());
  for (double v : map.data) t.data.push_back(static_cast<float>(v));
  return t;
}

splat::FeatureMap to_feature_map(const Tensor& t) {
  if (t.dims.size() != 3 && t.dims.size() != 2) throw Error("feature map tensor must be H x W x C or H x W");
  const int c = t.dims.size() == 3 ? static_cast<int>(t.dims[2]) : 1;
  splat::FeatureMap m(static_cast<int>(t.dims[1]), static_cast<int>(t.dims[0]), c);
  for (std::size_t i = 0; i < t.data.size(); ++i) m.data[i] = t.data[i];
  return m;
}

// ---------------------------------------------------------------- OBJ

void save_obj(const fs::path& path, const geometry::TriMesh& mesh) {
  std::string s;
  for (const Vec3& v : mesh.vertices)
    s += "v " + format_g9(v.x) + " " + format_g9(v.y) + " " + format_g9(v.z) + "\n";
  for (const auto& uv : mesh.uv_corners)
    for (const Vec2& c : uv) s += "vt " + format_g9(c.x) + " " + format_g9(c.y) + "\n";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    s += "f";
    for (int k = 0; k < 3; ++k) {
      s += " " + std::to_string(mesh.faces[f][static_cast<std::size_t>(k)] + 1);
      if (!mesh.uv_corners.empty()) s += "/" + std::to_string(3 * f + static_cast<std::size_t>(k) + 1);
    }
    s += "\n";
  }
  write_text(path, s);
}

geometry::TriMesh parse_obj(const std::string& text, const std::string& name) {
  geometry::TriMesh mesh;
  std::vector<Vec2> vts;
  bool any_missing_uv = false;
  bool any_uv = false;
  for_each_line(text, [&](const std::string& raw, std::size_t line) {
    auto tok = split_ws(raw.substr(0, raw.find('#')));
    if (tok.empty()) return;
    if (tok[0] == "v") {
      if (tok.size() < 4) line_error(name, line, "vertex needs 3 coordinates");
      mesh.vertices.push_back({parse_double(tok[1], name, line), parse_double(tok[2], name, line),
                               parse_double(tok[3], name, line)});
    } else if (tok[0] == "vt") {
      if (tok.size() < 3) line_error(name, line, "texture coordinate needs 2 values");
      vts.push_back({parse_double(tok[1], name, line), parse_double(tok[2], name, line)});
    } else if (tok[0] == "f") {
      if (tok.size() != 4) line_error(name, line, "only triangular faces are supported");
      geometry::Face face{};
      geometry::FaceUV uv{};
      bool has_uv = true;
      for (std::size_t k = 0; k < 3; ++k) {
        const std::string& t = tok[k + 1];
        const auto slash = t.find('/');
        const long vi = parse_long(t.substr(0, slash), name, line);
        if (vi < 1 || vi > static_cast<long>(mesh.vertices.size()))
          line_error(name, line, "vertex index " + std::to_string(vi) + " out of range");
        face[k] = static_cast<int>(vi - 1);
        std::string vt_str;
        if (slash != std::string::npos) {
          const auto slash2 = t.find('/', slash + 1);
          vt_str = t.substr(slash + 1, slash2 == std::string::npos ? std::string::npos : slash2 - slash - 1);
        }
        if (vt_str.empty()) {
          has_uv = false;
          continue;
        }
        const long ti = parse_long(vt_str, name, line);
        if (ti < 1 || ti > static_cast<long>(vts.size()))
          line_error(name, line, "texture index " + std::to_string(ti) + " out of range");
        uv[k] = vts[static_cast<std::size_t>(ti - 1)];
      }
      if (has_uv) any_uv = true;
      else any_missing_uv = true;
      if (any_uv && any_missing_uv) line_error(name, line, "faces mix records with and without texture indices");
      if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
        line_error(name, line, "face repeats a vertex");
      for (const Vec2& c : uv)
        if (!(c.x >= 0.0 && c.x <= 1.0 && c.y >= 0.0 && c.y <= 1.0))
          line_error(name, line, "texture coordinate outside [0,1]^2");
      mesh.faces.push_back(face);
      mesh.uv_corners.push_back(uv);
    }
    // Other records (vn, o, g, s, usemtl, mtllib) are ignored.
  });
  mesh.fill_default_annotations();
  mesh.validate();
  return mesh;
}

geometry::TriMesh load_obj(const fs::path& path) { return parse_obj(read_text(path), path.string()); }

// ---------------------------------------------------------------- labels

void save_labels(const fs::path& path, const geometry::TriMesh& mesh) {
  std::string s;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    s += std::to_string(i) + " " + std::string(geometry::label_name(mesh.labels[i])) + " " +
         std::to_string(mesh.mirror[i]) + " " + format_g9(mesh.lap_weights[i]) + "\n";
  write_text(path, s);
}

void parse_labels(const std::string& text, geometry::TriMesh& mesh, const std::string& name) {
  const std::size_t n = mesh.vertices.size();
  std::vector<geometry::Label> labels(n, geometry::Label::kOther);
  std::vector<int> mirror(n);
  std::vector<double> weights(n, 0.0);
  std::vector<char> seen(n, 0);
  for_each_line(text, [&](const std::string& raw, std::size_t line) {
    auto tok = split_ws(raw.substr(0, raw.find('#')));
    if (tok.empty()) return;
    if (tok.size() != 4) line_error(name, line, "expected 'vertex_index label mirror_index weight'");
    const long i = parse_long(tok[0], name, line);
    if (i < 0 || i >= static_cast<long>(n)) line_error(name, line, "vertex index out of range");
    const auto idx = static_cast<std::size_t>(i);
    if (seen[idx]) line_error(name, line, "vertex " + tok[0] + " listed twice");
    seen[idx] = 1;
    const auto label = geometry::parse_label(tok[1]);
    if (!label) line_error(name, line, "unknown label '" + tok[1] + "'");
    labels[idx] = *label;
    const long m = parse_long(tok[2], name, line);
    if (m < 0 || m >= static_cast<long>(n)) line_error(name, line, "mirror index out of range");
    mirror[idx] = static_cast<int>(m);
    weights[idx] = parse_double(tok[3], name, line);
    if (weights[idx] < 0.0) line_error(name, line, "weight must be >= 0");
  });
  for (std::size_t i = 0; i < n; ++i)
    if (!seen[i]) throw Error(name + ": vertex " + std::to_string(i) + " has no entry");
  for (std::size_t i = 0; i < n; ++i)
    if (mirror[static_cast<std::size_t>(mirror[i])] != static_cast<int>(i))
      throw Error(name + ": mirror map is not an involution at vertex " + std::to_string(i));
  mesh.labels = std::move(labels);
  mesh.mirror = std::move(mirror);
  mesh.lap_weights = std::move(weights);
}

void load_labels(const fs::path& path, geometry::TriMesh& mesh) { parse_labels(read_text(path), mesh, path.string()); }

// ---------------------------------------------------------------- landmarks

void save_landmarks(const fs::path& path, const deform::LandmarkSet& set) {
  std::string s;
  for (const auto& e : set.entries)
    s += std::to_string(e.vertex) + " " + std::to_string(e.camera) + " " + g17(e.target.x) + " " + g17(e.target.y) +
         "\n";
  write_text(path, s);
}

deform::LandmarkSet parse_landmarks(const std::string& text, const std::string& name) {
  deform::LandmarkSet set;
  for_each_line(text, [&](const std::string& raw, std::size_t line) {
    auto tok = split_ws(raw.substr(0, raw.find('#')));
    if (tok.empty()) return;
    if (tok.size() != 4) line_error(name, line, "expected 'vertex camera u v'");
    const long v = parse_long(tok[0], name, line);
    const long c = parse_long(tok[1], name, line);
    if (v < 0 || c < 0) line_error(name, line, "indices must be >= 0");
    set.entries.push_back(
        {static_cast<int>(v), static_cast<int>(c), {parse_double(tok[2], name, line), parse_double(tok[3], name, line)}});
  });
  return set;
}

deform::LandmarkSet load_landmarks(const fs::path& path) { return parse_landmarks(read_text(path), path.string()); }

// ---------------------------------------------------------------- camera

namespace {

const char* const kCameraKeys[] = {"fx",  "fy",  "cx",  "cy",  "width", "height", "r00", "r01", "r02",
                                   "r10", "r11", "r12", "r20", "r21", "r22",   "tx",     "ty",  "tz"};

geometry::Camera camera_from(const std::map<std::string, double>& kv, const std::string& name) {
  for (const char* k : kCameraKeys)
    if (!kv.count(k)) throw Error(name + ": missing camera key '" + k + "'");
  for (const auto& [k, v] : kv)
    if (std::find_if(std::begin(kCameraKeys), std::end(kCameraKeys), [&](const char* c) { return k == c; }) ==
        std::end(kCameraKeys))
      throw Error(name + ": unknown camera key '" + k + "'");
  geometry::Camera cam;
  cam.fx = kv.at("fx");
  cam.fy = kv.at("fy");
  cam.cx = kv.at("cx");
  cam.cy = kv.at("cy");
  const double w = kv.at("width");
  const double h = kv.at("height");
  if (w != std::floor(w) || h != std::floor(h) || w < 1 || h < 1 || w > 1e6 || h > 1e6)
    throw Error(name + ": width and height must be positive integers");
  cam.width = static_cast<int>(w);
  cam.height = static_cast<int>(h);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = kv.at("r" + std::to_string(r) + std::to_string(c));
  cam.translation = {kv.at("tx"), kv.at("ty"), kv.at("tz")};
  try {
    cam.validate();
  } catch (const Error& e) {
    throw Error(name + ": " + e.what());
  }
  return cam;
}

}  // namespace

void save_camera(const fs::path& path, const geometry::Camera& cam) {
  std::string s;
  s += "fx=" + g17(cam.fx) + "\nfy=" + g17(cam.fy) + "\ncx=" + g17(cam.cx) + "\ncy=" + g17(cam.cy) + "\n";
  s += "width=" + std::to_string(cam.width) + "\nheight=" + std::to_string(cam.height) + "\n";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      s += "r" + std::to_string(r) + std::to_string(c) + "=" + g17(cam.rotation(r, c)) + "\n";
  s += "tx=" + g17(cam.translation.x) + "\nty=" + g17(cam.translation.y) + "\ntz=" + g17(cam.translation.z) + "\n";
  write_text(path, s);
}

geometry::Camera parse_camera(const std::string& text, const std::string& name) {
  std::map<std::string, double> values;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(name + ": byte " + std::to_string(e.byte) + ": invalid JSON");
    }
    if (!j.is_object()) throw Error(name + ": camera JSON must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!it.value().is_number()) throw Error(name + ": camera key '" + it.key() + "' must be a number");
      values[it.key()] = it.value().get<double>();
    }
  } else {
    const KeyValues kv = parse_key_values(text, name);
    for (const auto& [k, v] : kv.values) values[k] = kv_double(kv, k, 0.0);
  }
  return camera_from(values, name);
}

geometry::Camera load_camera(const fs::path& path) { return parse_camera(read_text(path), path.string()); }

// ---------------------------------------------------------------- PFM

std::vector<std::uint8_t> encode_pfm(const FloatImage& img) {
  if (img.channels != 1 && img.channels != 3) throw Error("PFM supports 1 or 3 channels");
  const std::string header = std::string(img.channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n-1.0\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto row = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.channels);
  for (int y = img.height - 1; y >= 0; --y)
    for (std::size_t i = 0; i < row; ++i) put_f32(out, img.data[static_cast<std::size_t>(y) * row + i]);
  return out;
}

FloatImage decode_pfm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 0;
  auto fail = [&](std::size_t off, const std::string& what) -> void {
    throw Error(name + ": byte " + std::to_string(off) + ": " + what);
  };
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) fail(start, "truncated header");
    return std::make_pair(std::string(bytes.begin() + static_cast<long>(start), bytes.begin() + static_cast<long>(pos)), start);
  };
  FloatImage img;
  const auto [magic, moff] = token();
  if (magic == "PF") img.channels = 3;
  else if (magic == "Pf") img.channels = 1;
  else fail(moff, "bad magic (expected PF or Pf)");
  const auto [ws, woff] = token();
  const auto [hs, hoff] = token();
  const auto [ss, soff] = token();
  long w = 0, h = 0;
  double scale = 0.0;
  try {
    w = parse_long(ws, name, 2);
    h = parse_long(hs, name, 2);
    scale = parse_double(ss, name, 3);
  } catch (const Error&) {
    fail(woff, "malformed size or scale");
  }
  if (w < 1 || h < 1 || w > 1 << 16 || h > 1 << 16) fail(woff, "invalid image size");
  if (scale >= 0.0) fail(soff, "big-endian PFM (positive scale) is not supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(pos, "missing separator after scale");
  ++pos;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  const auto row = static_cast<std::size_t>(w) * static_cast<std::size_t>(img.channels);
  const std::size_t expected = pos + 4 * row * static_cast<std::size_t>(h);
  if (bytes.size() < expected) fail(bytes.size(), "truncated payload (expected " + std::to_string(expected) + " bytes)");
  if (bytes.size() > expected) fail(expected, "trailing bytes after payload");
  img.data.resize(row * static_cast<std::size_t>(h));
  for (long y = h - 1; y >= 0; --y)
    for (std::size_t i = 0; i < row; ++i) {
      const float v = get_f32(bytes.data() + pos);
      if (!std::isfinite(v)) fail(pos, "non-finite value");
      img.data[static_cast<std::size_t>(y) * row + i] = v;
      pos += 4;
    }
  return img;
}

void save_pfm(const fs::path& path, const FloatImage& img) { write_bytes(path, encode_pfm(img)); }
FloatImage load_pfm(const fs::path& path) { return decode_pfm(read_bytes(path), path.string()); }

deform::NormalTarget to_normal_target(const FloatImage& img) {
  if (img.channels != 3) throw Error("normal map must have 3 channels");
  deform::NormalTarget t;
  t.width = img.width;
  t.height = img.height;
  t.normal.resize(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height));
  for (std::size_t i = 0; i < t.normal.size(); ++i)
    t.normal[i] = {img.data[3 * i], img.data[3 * i + 1], img.data[3 * i + 2]};
  return t;
}

FloatImage from_normals(int width, int height, const std::vector<Vec3>& normals) {
  FloatImage img{width, height, 3, {}};
  img.data.reserve(normals.size() * 3);
  for (const Vec3& n : normals) {
    img.data.push_back(static_cast<float>(n.x));
    img.data.push_back(static_cast<float>(n.y));
    img.data.push_back(static_cast<float>(n.z));
  }
  return img;
}

// ---------------------------------------------------------------- PNG

void save_png(const fs::path& path, int width, int height, int channels, const std::vector<double>& values) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  switch (channels) {
    case 1: image.format = PNG_FORMAT_GRAY; break;
    case 3: image.format = PNG_FORMAT_RGB; break;
    case 4: image.format = PNG_FORMAT_RGBA; break;
    default: throw Error("PNG output supports 1, 3 or 4 channels");
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels);
  if (values.size() != n) throw Error("PNG value count does not match the image size");
  std::vector<std::uint8_t> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::isfinite(values[i]) ? std::clamp(values[i], 0.0, 1.0) : 0.0;
    px[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr))
    throw Error("cannot write PNG " + path.string() + ": " + image.message);
}

void save_preview_png(const fs::path& path, int width, int height, int channels, const std::vector<double>& values) {
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (values.size() != n * static_cast<std::size_t>(channels)) throw Error("preview value count mismatch");
  std::vector<double> rgb(n * 3, 0.0);
  for (int c = 0; c < std::min(channels, 3); ++c) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, values[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)]);
      hi = std::max(hi, values[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)]);
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = values[i * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)];
      rgb[i * 3 + static_cast<std::size_t>(c)] = span > 0.0 ? (v - lo) / span : 0.0;
    }
  }
  // Fewer than three channels: replicate the last one.
  for (int c = channels; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) rgb[i * 3 + static_cast<std::size_t>(c)] = rgb[i * 3 + static_cast<std::size_t>(channels - 1)];
  save_png(path, width, height, 3, rgb);
}

// ---------------------------------------------------------------- key=value

std::string KeyValues::where(const std::string& key) const {
  const auto it = lines.find(key);
  std::string loc = source;
  if (it != lines.end()) loc += ":" + std::to_string(it->second);
  return (loc.empty() ? "" : loc + ": ") + "key '" + key + "'";
}

void KeyValues::fail(const std::string& key, const std::string& what) const { throw Error(where(key) + ": " + what); }

KeyValues parse_key_values(const std::string& text, const std::string& name) {
  KeyValues kv;
  kv.source = name;
  for_each_line(text, [&](const std::string& raw, std::size_t line) {
    const std::string s = trim(raw.substr(0, raw.find('#')));
    if (s.empty()) return;
    const auto eq = s.find('=');
    if (eq == std::string::npos) line_error(name, line, "expected key=value");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) line_error(name, line, "empty key");
    if (!kv.values.emplace(key, value).second) line_error(name, line, "duplicate key '" + key + "'");
    kv.lines[key] = line;
  });
  return kv;
}

KeyValues load_key_values(const fs::path& path) { return parse_key_values(read_text(path), path.string()); }

double kv_double(const KeyValues& kv, const std::string& key, double fallback) {
  const auto it = kv.values.find(key);
  if (it == kv.values.end()) return fallback;
  double v = 0.0;
  const auto& s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    kv.fail(key, "expected a finite number, got '" + s + "'");
  return v;
}

int kv_int(const KeyValues& kv, const std::string& key, int fallback) {
  const auto it = kv.values.find(key);
  if (it == kv.values.end()) return fallback;
  int v = 0;
  const auto& s = it->second;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    kv.fail(key, "expected an integer, got '" + s + "'");
  return v;
}

std::string kv_string(const KeyValues& kv, const std::string& key, const std::string& fallback) {
  const auto it = kv.values.find(key);
  return it == kv.values.end() ? fallback : it->second;
}

std::vector<double> kv_doubles(const KeyValues& kv, const std::string& key, const std::vector<double>& fallback) {
  const auto it = kv.values.find(key);
  if (it == kv.values.end()) return fallback;
  std::vector<double> out;
  std::string item;
  std::istringstream in(it->second);
  while (std::getline(in, item, ',')) {
    KeyValues one = kv;
    one.values = {{key, trim(item)}};
    out.push_back(kv_double(one, key, 0.0));
  }
  if (out.empty()) kv.fail(key, "empty list");
  return out;
}

void check_keys(const KeyValues& kv, const std::vector<std::string>& allowed) {
  for (const auto& [k, v] : kv.values)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) kv.fail(k, "unknown key");
}

splat::FusionConfig fusion_config(const KeyValues& kv) {
  splat::FusionConfig c;
  c.gamma = kv_doubles(kv, "gamma", c.gamma);
  c.epsilon = kv_double(kv, "epsilon", c.epsilon);
  c.base_res = kv_int(kv, "base_res", c.base_res);
  c.num_levels = kv_int(kv, "num_levels", c.num_levels);
  c.density_tau = kv_double(kv, "density_tau", c.density_tau);
  const std::string mode = kv_string(kv, "mode", "hole_filled");
  if (mode == "hole_filled") c.mode = splat::FusionMode::kHoleFilled;
  else if (mode == "raw_levels") c.mode = splat::FusionMode::kRawLevels;
  else kv.fail("mode", "expected hole_filled or raw_levels, got '" + mode + "'");
  return c;
}

deform::DeformConfig deform_config(const KeyValues& kv) {
  deform::DeformConfig c;
  c.lambda_nml = kv_double(kv, "lambda_nml", c.lambda_nml);
  c.lambda_lmk = kv_double(kv, "lambda_lmk", c.lambda_lmk);
  c.lambda_lap = kv_double(kv, "lambda_lap", c.lambda_lap);
  c.lr = kv_double(kv, "lr", c.lr);
  c.iters = kv_int(kv, "iters", c.iters);
  c.reraster_every = kv_int(kv, "reraster_every", c.reraster_every);
  c.symmetry_weight = kv_double(kv, "symmetry_weight", c.symmetry_weight);
  c.region_weights.face = kv_double(kv, "w_face", c.region_weights.face);
  c.region_weights.hair = kv_double(kv, "w_hair", c.region_weights.hair);
  c.region_weights.boundary = kv_double(kv, "w_boundary", c.region_weights.boundary);
  c.region_weights.other = kv_double(kv, "w_other", c.region_weights.other);
  c.targets_in_camera_space = kv_int(kv, "targets_in_camera_space", 0) != 0;
  c.validate();
  return c;
}

// ---------------------------------------------------------------- views.json

std::vector<ViewEntry> load_views(const fs::path& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": byte " + std::to_string(e.byte) + ": invalid JSON");
  }
  if (!j.is_object() || !j.contains("views") || !j["views"].is_array())
    throw Error(path.string() + ": expected an object with a \"views\" array");
  const fs::path base = path.parent_path();
  std::vector<ViewEntry> out;
  std::size_t idx = 0;
  for (const auto& v : j["views"]) {
    if (!v.is_object()) throw Error(path.string() + ": view " + std::to_string(idx) + " is not an object");
    ViewEntry e;
    auto field = [&](const char* key, fs::path& dst) {
      if (!v.contains(key)) return;
      if (!v[key].is_string())
        throw Error(path.string() + ": view " + std::to_string(idx) + " field '" + key + "' must be a string");
      const fs::path p = v[key].get<std::string>();
      dst = p.is_absolute() ? p : base / p;
    };
    field("camera", e.camera);
    field("normal", e.normal);
    field("gbuffer", e.gbuffer);
    field("features", e.features);
    if (e.camera.empty()) throw Error(path.string() + ": view " + std::to_string(idx) + " has no camera");
    out.push_back(std::move(e));
    ++idx;
  }
  return out;
}

void save_views(const fs::path& path, const std::vector<ViewEntry>& views) {
  nlohmann::ordered_json j;
  j["views"] = nlohmann::ordered_json::array();
  for (const auto& v : views) {
    nlohmann::ordered_json e;
    e["camera"] = v.camera.generic_string();
    if (!v.normal.empty()) e["normal"] = v.normal.generic_string();
    if (!v.gbuffer.empty()) e["gbuffer"] = v.gbuffer.generic_string();
    if (!v.features.empty()) e["features"] = v.features.generic_string();
    j["views"].push_back(e);
  }
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------- GBuffer

void save_gbuffer(const fs::path& dir, const raster::GBuffer& gb) {
  fs::create_directories(dir);
  const auto h = static_cast<std::uint32_t>(gb.height);
  const auto w = static_cast<std::uint32_t>(gb.width);
  Tensor face{{h, w}, {}}, bary{{h, w, 3}, {}}, uv{{h, w, 2}, {}}, normal{{h, w, 3}, {}}, depth{{h, w}, {}},
      mask{{h, w}, {}};
  for (std::size_t i = 0; i < gb.size(); ++i) {
    face.data.push_back(static_cast<float>(gb.face_id[i]));
    for (double b : gb.bary[i]) bary.data.push_back(static_cast<float>(b));
    uv.data.push_back(static_cast<float>(gb.uv[i].x));
    uv.data.push_back(static_cast<float>(gb.uv[i].y));
    for (int c = 0; c < 3; ++c) normal.data.push_back(static_cast<float>(gb.normal[i][c]));
    depth.data.push_back(static_cast<float>(gb.depth[i]));
    mask.data.push_back(gb.mask[i] ? 1.0f : 0.0f);
  }
  save_uvt(dir / "face_id.uvt", face);
  save_uvt(dir / "bary.uvt", bary);
  save_uvt(dir / "uv.uvt", uv);
  save_uvt(dir / "normal.uvt", normal);
  save_uvt(dir / "depth.uvt", depth);
  save_uvt(dir / "mask.uvt", mask);
}

raster::GBuffer load_gbuffer(const fs::path& dir) {
  const Tensor mask = load_uvt(dir / "mask.uvt");
  if (mask.dims.size() != 2) throw Error((dir / "mask.uvt").string() + ": expected H x W");
  const int h = static_cast<int>(mask.dims[0]);
  const int w = static_cast<int>(mask.dims[1]);
  auto load = [&](const char* file, std::uint32_t c) {
    Tensor t = load_uvt(dir / file);
    const bool ok = c == 0 ? t.dims == std::vector<std::uint32_t>{mask.dims[0], mask.dims[1]}
                           : t.dims == std::vector<std::uint32_t>{mask.dims[0], mask.dims[1], c};
    if (!ok) throw Error((dir / file).string() + ": dims do not match mask.uvt");
    return t;
  };
  const Tensor face = load("face_id.uvt", 0), bary = load("bary.uvt", 3), uv = load("uv.uvt", 2),
               normal = load("normal.uvt", 3), depth = load("depth.uvt", 0);
  raster::GBuffer gb(w, h);
  for (std::size_t i = 0; i < gb.size(); ++i) {
    gb.mask[i] = mask.data[i] != 0.0f ? 1 : 0;
    gb.face_id[i] = static_cast<int>(face.data[i]);
    gb.bary[i] = {bary.data[3 * i], bary.data[3 * i + 1], bary.data[3 * i + 2]};
    gb.uv[i] = {uv.data[2 * i], uv.data[2 * i + 1]};
    gb.normal[i] = {normal.data[3 * i], normal.data[3 * i + 1], normal.data[3 * i + 2]};
    gb.depth[i] = depth.data[i];
    if (gb.mask[i] && (gb.face_id[i] < 0 || !(gb.depth[i] > 0.0)))
      throw Error(dir.string() + ": covered pixel " + std::to_string(i) + " has no face or non-positive depth");
  }
  return gb;
}

// ---------------------------------------------------------------- splats

void save_splats(const fs::path& path, const anchor::GaussianSet& set) {
  Tensor t{{static_cast<std::uint32_t>(set.splats.size()), kSplatColumns}, {}};
  for (const auto& s : set.splats) {
    const double row[kSplatColumns] = {static_cast<double>(s.anchor.kind),
                                       static_cast<double>(s.anchor.index),
                                       s.anchor.bary[0], s.anchor.bary[1], s.anchor.bary[2],
                                       s.offset.x, s.offset.y, s.offset.z, s.scale, s.opacity,
                                       s.color.x, s.color.y, s.color.z, s.position.x, s.position.y, s.position.z};
    for (double v : row) t.data.push_back(static_cast<float>(v));
  }
  save_uvt(path, t);
}

anchor::GaussianSet load_splats(const fs::path& path) {
  const Tensor t = load_uvt(path);
  if (t.dims.size() != 2 || t.dims[1] != kSplatColumns)
    throw Error(path.string() + ": expected N x " + std::to_string(kSplatColumns) + " splat table");
  anchor::GaussianSet set;
  for (std::uint32_t r = 0; r < t.dims[0]; ++r) {
    const float* p = t.data.data() + static_cast<std::size_t>(r) * kSplatColumns;
    anchor::Splat s;
    if (p[0] != 0.0f && p[0] != 1.0f) throw Error(path.string() + ": row " + std::to_string(r) + " has bad anchor kind");
    s.anchor.kind = p[0] == 0.0f ? anchor::AnchorKind::kVertex : anchor::AnchorKind::kSurface;
    s.anchor.index = static_cast<int>(p[1]);
    s.anchor.bary = {p[2], p[3], p[4]};
    s.offset = {p[5], p[6], p[7]};
    s.scale = p[8];
    s.opacity = p[9];
    s.color = {p[10], p[11], p[12]};
    s.position = {p[13], p[14], p[15]};
    if (!(s.scale > 0.0) || !(s.opacity >= 0.0 && s.opacity <= 1.0))
      throw Error(path.string() + ": row " + std::to_string(r) + " has invalid scale or opacity");
    set.splats.push_back(s);
  }
  return set;
}

void save_trace(const fs::path& path, const std::vector<deform::LossTerms>& trace) {
  std::string s = "iter,total,nml,lmk,lap\n";
  for (const auto& t : trace)
    s += std::to_string(t.iter) + "," + g17(t.total) + "," + g17(t.nml) + "," + g17(t.lmk) + "," + g17(t.lap) + "\n";
  write_text(path, s);
}

}  // namespace uvfuse::io
