#include <gtest/gtest.h>

#include <unistd.h>

#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "uvfuse/error.hpp"
#include "uvfuse/io.hpp"
#include "uvfuse/raster.hpp"
#include "uvfuse/synth.hpp"

namespace {

using namespace uvfuse;
namespace fs = std::filesystem;

const fs::path kFixtures = UVFUSE_FIXTURE_DIR;

fs::path fixture(const std::string& name) { return kFixtures / name; }

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("uvfuse_io_") + std::to_string(getpid()) + "_" +
                                         info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Message of the Error thrown by f, or "" when nothing is thrown.
template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

geometry::TriMesh triangle() {
  geometry::TriMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m.uv_corners = {{Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}}};
  m.fill_default_annotations();
  return m;
}

synth::Scene small_scene() {
  synth::SceneSpec spec;
  spec.subdiv = 2;
  return synth::make_scene(spec);
}

// ---------------------------------------------------------------- UVT

TEST(Uvt, RoundTripIsBitIdentical) {
  io::Tensor t{{3, 4, 2}, {}};
  for (std::size_t i = 0; i < t.size(); ++i) t.data.push_back(static_cast<float>(std::sin(0.37 * i) * 1e3));
  t.data[5] = -0.0f;
  t.data[6] = std::numeric_limits<float>::denorm_min();
  const auto bytes = io::encode_uvt(t);
  EXPECT_EQ(bytes.size(), 4u + 4u + 3u * 4u + t.size() * 4u);
  const io::Tensor back = io::decode_uvt(bytes);
  EXPECT_EQ(back.dims, t.dims);
  ASSERT_EQ(back.data.size(), t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i)
    EXPECT_EQ(std::memcmp(&back.data[i], &t.data[i], sizeof(float)), 0) << i;
  EXPECT_EQ(io::encode_uvt(back), bytes);
}

TEST(Uvt, LayoutIsLittleEndian) {
  const auto bytes = io::encode_uvt(io::Tensor{{1}, {1.0f}});
  const std::vector<std::uint8_t> expected{'U', 'V', 'T', '1', 1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f};
  EXPECT_EQ(bytes, expected);
}

TEST(Uvt, FeatureMapRoundTrip) {
  splat::FeatureMap m(5, 3, 2);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = 0.25 * static_cast<double>(i);
  const splat::FeatureMap back = io::to_feature_map(io::to_tensor(m));
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.channels, 2);
  EXPECT_EQ(back.data, m.data);
}

class UvtAdversarial : public ::testing::TestWithParam<std::string> {};

TEST_P(UvtAdversarial, RejectedWithByteOffset) {
  const fs::path p = fixture(GetParam());
  const std::string msg = error_of([&] { io::load_uvt(p); });
  EXPECT_NE(msg.find(p.string() + ": byte "), std::string::npos) << msg;
}

INSTANTIATE_TEST_SUITE_P(Fixtures, UvtAdversarial,
                         ::testing::Values("bad_magic.uvt", "truncated_payload.uvt", "truncated_header.uvt",
                                           "nan_payload.uvt", "inf_payload.uvt", "trailing_bytes.uvt",
                                           "too_many_dims.uvt"));

// ---------------------------------------------------------------- PFM

TEST(Pfm, RoundTripOfRenderedNormalsIsExact) {
  const auto scene = small_scene();
  const auto cams = geometry::six_view_rig(3.0, {0, 0, 0}, {32, 24, 40.0});
  const auto gb = raster::rasterize(scene.mesh, scene.mesh.vertices, cams[1]);
  const io::FloatImage img = io::from_normals(gb.width, gb.height, gb.normal);
  const io::FloatImage back = io::decode_pfm(io::encode_pfm(img));
  EXPECT_EQ(back.width, 32);
  EXPECT_EQ(back.height, 24);
  EXPECT_EQ(back.channels, 3);
  EXPECT_EQ(back.data, img.data);
  const auto target = io::to_normal_target(back);
  ASSERT_EQ(target.normal.size(), gb.size());
  for (std::size_t i = 0; i < gb.size(); ++i)
    for (int c = 0; c < 3; ++c)
      EXPECT_EQ(target.normal[i][c], static_cast<double>(static_cast<float>(gb.normal[i][c])));
}

TEST(Pfm, RowsStoredBottomToTop) {
  io::FloatImage img{1, 2, 1, {1.0f, 2.0f}};
  const auto bytes = io::encode_pfm(img);
  const std::string header = "Pf\n1 2\n-1.0\n";
  ASSERT_EQ(bytes.size(), header.size() + 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + header.size(), 4);
  EXPECT_EQ(first, 2.0f);
}

class PfmAdversarial : public ::testing::TestWithParam<std::string> {};

TEST_P(PfmAdversarial, RejectedWithByteOffset) {
  const fs::path p = fixture(GetParam());
  const std::string msg = error_of([&] { io::load_pfm(p); });
  EXPECT_NE(msg.find(p.string() + ": byte "), std::string::npos) << msg;
}

INSTANTIATE_TEST_SUITE_P(Fixtures, PfmAdversarial,
                         ::testing::Values("bad_magic.pfm", "big_endian.pfm", "truncated.pfm", "nan.pfm",
                                           "bad_size.pfm"));

// ---------------------------------------------------------------- OBJ

TEST(Obj, SlashFaceReadsPositionsAndUVs) {
  const std::string text =
      "# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0.1 0.2\nvt 0.3 0.4\nvt 0.5 0.6\nf 1/1 2/2 3/3\n";
  const auto m = io::parse_obj(text);
  ASSERT_EQ(m.num_vertices(), 3u);
  ASSERT_EQ(m.num_faces(), 1u);
  EXPECT_EQ(m.faces[0], (geometry::Face{0, 1, 2}));
  EXPECT_EQ(m.uv_corners[0][0].x, 0.1);
  EXPECT_EQ(m.uv_corners[0][1].y, 0.4);
  EXPECT_EQ(m.uv_corners[0][2].x, 0.5);
}

TEST(Obj, SaveLoadRoundTripKeepsNineDigits) {
  TempDir dir;
  const auto scene = small_scene();
  io::save_obj(dir.path() / "m.obj", scene.mesh);
  const auto back = io::load_obj(dir.path() / "m.obj");
  ASSERT_EQ(back.num_vertices(), scene.mesh.num_vertices());
  ASSERT_EQ(back.faces, scene.mesh.faces);
  for (std::size_t i = 0; i < back.num_vertices(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double a = scene.mesh.vertices[i][c];
      EXPECT_LE(std::abs(back.vertices[i][c] - a), 1e-9 * std::max(1.0, std::abs(a)));
    }
  for (std::size_t f = 0; f < back.num_faces(); ++f)
    for (int k = 0; k < 3; ++k) {
      EXPECT_NEAR(back.uv_corners[f][k].x, scene.mesh.uv_corners[f][k].x, 1e-9);
      EXPECT_NEAR(back.uv_corners[f][k].y, scene.mesh.uv_corners[f][k].y, 1e-9);
    }
  // A second pass reproduces the file byte for byte.
  io::save_obj(dir.path() / "m2.obj", back);
  EXPECT_EQ(io::read_text(dir.path() / "m.obj"), io::read_text(dir.path() / "m2.obj"));
}

class ObjAdversarial : public ::testing::TestWithParam<std::string> {};

TEST_P(ObjAdversarial, RejectedWithLine) {
  const fs::path p = fixture(GetParam());
  const std::string msg = error_of([&] { io::load_obj(p); });
  EXPECT_EQ(msg.rfind(p.string() + ":", 0), 0u) << msg;
  const std::string rest = msg.substr(p.string().size() + 1);
  EXPECT_TRUE(!rest.empty() && std::isdigit(static_cast<unsigned char>(rest[0]))) << msg;
}

INSTANTIATE_TEST_SUITE_P(Fixtures, ObjAdversarial,
                         ::testing::Values("quad_face.obj", "vertex_out_of_range.obj", "bad_number.obj",
                                           "uv_out_of_range.obj", "nan_vertex.obj"));

// ---------------------------------------------------------------- labels, landmarks

TEST(Labels, RoundTrip) {
  TempDir dir;
  auto scene = small_scene();
  io::save_labels(dir.path() / "l.txt", scene.mesh);
  geometry::TriMesh copy = scene.mesh;
  copy.labels.clear();
  copy.mirror.clear();
  copy.lap_weights.clear();
  io::load_labels(dir.path() / "l.txt", copy);
  EXPECT_EQ(copy.labels, scene.mesh.labels);
  EXPECT_EQ(copy.mirror, scene.mesh.mirror);
  for (std::size_t i = 0; i < copy.num_vertices(); ++i)
    EXPECT_NEAR(copy.lap_weights[i], scene.mesh.lap_weights[i], 1e-9 * std::max(1.0, scene.mesh.lap_weights[i]));
}

class LabelAdversarial : public ::testing::TestWithParam<std::string> {};

TEST_P(LabelAdversarial, Rejected) {
  const fs::path p = fixture(GetParam());
  auto m = triangle();
  const std::string msg = error_of([&] { io::load_labels(p, m); });
  EXPECT_EQ(msg.rfind(p.string() + ":", 0), 0u) << msg;
}

INSTANTIATE_TEST_SUITE_P(Fixtures, LabelAdversarial,
                         ::testing::Values("unknown_label.txt", "mirror_not_involution.txt", "missing_vertex.txt"));

TEST(Landmarks, RoundTripAndBadRow) {
  TempDir dir;
  deform::LandmarkSet set{{{0, 1, {10.25, -3.5}}, {7, 0, {0.1, 200.0}}}};
  io::save_landmarks(dir.path() / "lm.txt", set);
  const auto back = io::load_landmarks(dir.path() / "lm.txt");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.entries[1].vertex, 7);
  EXPECT_EQ(back.entries[0].camera, 1);
  EXPECT_EQ(back.entries[0].target.x, 10.25);
  EXPECT_EQ(back.entries[1].target.y, 200.0);

  const fs::path p = fixture("landmark_bad_row.txt");
  const std::string msg = error_of([&] { io::load_landmarks(p); });
  EXPECT_EQ(msg.rfind(p.string() + ":2:", 0), 0u) << msg;
}

// ---------------------------------------------------------------- cameras

TEST(Camera, KeyValueRoundTripIsExact) {
  TempDir dir;
  const auto cams = geometry::six_view_rig(2.7, {0.1, -0.2, 0.3}, {64, 48, 35.0});
  for (const auto& cam : cams) {
    io::save_camera(dir.path() / "c.txt", cam);
    const auto back = io::load_camera(dir.path() / "c.txt");
    EXPECT_EQ(back.width, cam.width);
    EXPECT_EQ(back.height, cam.height);
    EXPECT_NEAR(back.fx, cam.fx, 1e-9 * cam.fx);
    EXPECT_NEAR(back.cx, cam.cx, 1e-9 * cam.cx);
    for (int r = 0; r < 3; ++r) {
      EXPECT_NEAR(back.translation[r], cam.translation[r], 1e-8);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(back.rotation(r, c), cam.rotation(r, c), 1e-8);
    }
  }
}

TEST(Camera, JsonAccepted) {
  const std::string json =
      R"({"fx": 50, "fy": 50, "cx": 16, "cy": 16, "width": 32, "height": 32,
          "r00": 1, "r01": 0, "r02": 0, "r10": 0, "r11": 1, "r12": 0, "r20": 0, "r21": 0, "r22": 1,
          "tx": 0, "ty": 0, "tz": 3})";
  const auto cam = io::parse_camera(json);
  EXPECT_EQ(cam.width, 32);
  EXPECT_EQ(cam.fx, 50.0);
  EXPECT_EQ(cam.translation.z, 3.0);
}

class CameraAdversarial : public ::testing::TestWithParam<std::string> {};

TEST_P(CameraAdversarial, RejectedNamingFile) {
  const fs::path p = fixture(GetParam());
  const std::string msg = error_of([&] { io::load_camera(p); });
  EXPECT_EQ(msg.rfind(p.string(), 0), 0u) << msg;
}

INSTANTIATE_TEST_SUITE_P(Fixtures, CameraAdversarial,
                         ::testing::Values("camera_missing_key.txt", "camera_not_orthonormal.txt",
                                           "camera_unknown_key.txt", "camera_bad.json"));

// ---------------------------------------------------------------- key=value

TEST(KeyValues, CommentsBlankLinesAndLocations) {
  const auto kv = io::parse_key_values("# head\n\n a = 1.5 # tail\nb=x\n", "cfg");
  EXPECT_EQ(kv.values.size(), 2u);
  EXPECT_EQ(io::kv_double(kv, "a", 0.0), 1.5);
  EXPECT_EQ(io::kv_string(kv, "b", ""), "x");
  EXPECT_EQ(io::kv_int(kv, "missing", 7), 7);
  EXPECT_EQ(kv.where("b"), "cfg:4: key 'b'");
}

TEST(KeyValues, DuplicateAndMissingEquals) {
  const fs::path dup = fixture("duplicate_key.txt");
  EXPECT_EQ(error_of([&] { io::load_key_values(dup); }).rfind(dup.string() + ":2:", 0), 0u);
  const fs::path eq = fixture("missing_equals.txt");
  EXPECT_EQ(error_of([&] { io::load_key_values(eq); }).rfind(eq.string() + ":2:", 0), 0u);
}

TEST(KeyValues, ConfigErrorsNameFileLineAndKey) {
  const fs::path f = fixture("fusion_bad_mode.txt");
  const auto fkv = io::load_key_values(f);
  EXPECT_EQ(error_of([&] { io::fusion_config(fkv); }).rfind(f.string() + ":2: key 'mode'", 0), 0u);
  const fs::path d = fixture("deform_bad_number.txt");
  const auto dkv = io::load_key_values(d);
  EXPECT_EQ(error_of([&] { io::deform_config(dkv); }).rfind(d.string() + ":2: key 'lr'", 0), 0u);
}

TEST(KeyValues, UnknownKeyRejected) {
  const auto kv = io::parse_key_values("iters=3\nspeed=9\n", "cfg");
  EXPECT_EQ(error_of([&] { io::check_keys(kv, {"iters"}); }), "cfg:2: key 'speed': unknown key");
  EXPECT_EQ(error_of([&] { io::check_keys(kv, {"iters", "speed"}); }), "");
}

TEST(KeyValues, ListsAndIntegers) {
  const auto kv = io::parse_key_values("gamma=1, 0.5,0.25\nn=3.5\ne=\n", "cfg");
  EXPECT_EQ(io::kv_doubles(kv, "gamma", {}), (std::vector<double>{1.0, 0.5, 0.25}));
  EXPECT_NE(error_of([&] { io::kv_int(kv, "n", 0); }).find("cfg:2: key 'n'"), std::string::npos);
  EXPECT_NE(error_of([&] { io::kv_doubles(kv, "e", {}); }).find("cfg:3: key 'e'"), std::string::npos);
  const auto nan = io::parse_key_values("x=nan\n", "c");
  EXPECT_NE(error_of([&] { io::kv_double(nan, "x", 0.0); }), "");
}

TEST(KeyValues, ConfigDefaultsAndOverrides) {
  const auto kv = io::parse_key_values("mode=raw_levels\nnum_levels=2\ngamma=1,0.5\niters=9\nw_face=0.2\n", "c");
  const auto f = io::fusion_config(kv);
  EXPECT_EQ(f.mode, splat::FusionMode::kRawLevels);
  EXPECT_EQ(f.num_levels, 2);
  EXPECT_EQ(f.gamma, (std::vector<double>{1.0, 0.5}));
  const auto d = io::deform_config(kv);
  EXPECT_EQ(d.iters, 9);
  EXPECT_EQ(d.region_weights.face, 0.2);
  EXPECT_EQ(d.lr, deform::DeformConfig{}.lr);
}

// ---------------------------------------------------------------- views.json

TEST(Views, RelativePathsResolveAgainstFolder) {
  TempDir dir;
  fs::create_directories(dir.path() / "sub");
  io::write_text(dir.path() / "sub" / "views.json",
                 R"({"views": [{"camera": "cam0.txt", "normal": "n0.pfm", "features": "../f0.uvt"}]})");
  const auto views = io::load_views(dir.path() / "sub" / "views.json");
  ASSERT_EQ(views.size(), 1u);
  EXPECT_EQ(fs::weakly_canonical(views[0].camera), fs::weakly_canonical(dir.path() / "sub" / "cam0.txt"));
  EXPECT_EQ(fs::weakly_canonical(views[0].features), fs::weakly_canonical(dir.path() / "f0.uvt"));
  EXPECT_TRUE(views[0].gbuffer.empty());
}

TEST(Views, SaveLoadRoundTrip) {
  TempDir dir;
  io::save_views(dir.path() / "v.json", {{"a.txt", "a.pfm", "gb", "a.uvt"}, {"b.txt", {}, {}, {}}});
  const auto views = io::load_views(dir.path() / "v.json");
  ASSERT_EQ(views.size(), 2u);
  EXPECT_EQ(views[0].gbuffer.filename(), "gb");
  EXPECT_EQ(views[1].camera.filename(), "b.txt");
  EXPECT_TRUE(views[1].normal.empty());
}

TEST(Views, MalformedRejected) {
  for (const char* name : {"views_bad_field.json", "views_truncated.json"}) {
    const fs::path p = fixture(name);
    const std::string msg = error_of([&] { io::load_views(p); });
    EXPECT_EQ(msg.rfind(p.string(), 0), 0u) << msg;
  }
}

// ---------------------------------------------------------------- gbuffer, splats, trace, png

TEST(GBuffer, RoundTripRoundsOnceThenIsExact) {
  TempDir dir;
  const auto scene = small_scene();
  const auto cams = geometry::six_view_rig(3.0, {0, 0, 0}, {24, 20, 40.0});
  const auto gb = raster::rasterize(scene.mesh, scene.mesh.vertices, cams[0]);
  ASSERT_GT(gb.covered_count(), 0u);
  io::save_gbuffer(dir.path() / "a", gb);
  const auto once = io::load_gbuffer(dir.path() / "a");
  EXPECT_EQ(once.face_id, gb.face_id);
  EXPECT_EQ(once.mask, gb.mask);
  for (std::size_t i = 0; i < gb.size(); ++i) {
    EXPECT_EQ(once.depth[i], static_cast<double>(static_cast<float>(gb.depth[i])));
    EXPECT_EQ(once.uv[i].x, static_cast<double>(static_cast<float>(gb.uv[i].x)));
  }
  io::save_gbuffer(dir.path() / "b", once);
  EXPECT_EQ(io::load_gbuffer(dir.path() / "b"), once);
}

TEST(GBuffer, MismatchedShapesRejected) {
  TempDir dir;
  io::save_gbuffer(dir.path() / "g", raster::GBuffer(4, 3));
  io::save_uvt(dir.path() / "g" / "depth.uvt", io::Tensor{{3, 5}, std::vector<float>(15, 0.0f)});
  EXPECT_NE(error_of([&] { io::load_gbuffer(dir.path() / "g"); }), "");
}

TEST(Splats, RoundTrip) {
  TempDir dir;
  anchor::GaussianSet set;
  anchor::Splat a;
  a.anchor = {anchor::AnchorKind::kVertex, 2, {1.0, 0.0, 0.0}};
  a.offset = {0.0, 0.0, 0.125};
  a.scale = 0.5;
  a.opacity = 0.75;
  a.color = {0.25, 0.5, 1.0};
  a.position = {1.0, 2.0, 3.0};
  anchor::Splat b = a;
  b.anchor = {anchor::AnchorKind::kSurface, 0, {0.25, 0.25, 0.5}};
  set.splats = {a, b};
  io::save_splats(dir.path() / "s.uvt", set);
  EXPECT_EQ(io::load_uvt(dir.path() / "s.uvt").dims, (std::vector<std::uint32_t>{2, io::kSplatColumns}));
  const auto back = io::load_splats(dir.path() / "s.uvt");
  ASSERT_EQ(back.splats.size(), 2u);
  EXPECT_EQ(back.splats[0].anchor.kind, anchor::AnchorKind::kVertex);
  EXPECT_EQ(back.splats[0].anchor.index, 2);
  EXPECT_EQ(back.splats[1].anchor.kind, anchor::AnchorKind::kSurface);
  EXPECT_EQ(back.splats[1].anchor.bary, b.anchor.bary);
  EXPECT_EQ(back.splats[1].offset.z, 0.125);
  EXPECT_EQ(back.splats[1].scale, 0.5);
  EXPECT_EQ(back.splats[1].opacity, 0.75);
  EXPECT_EQ(back.splats[1].color.y, 0.5);
  EXPECT_EQ(back.splats[1].position.z, 3.0);
}

TEST(Trace, HeaderAndRows) {
  TempDir dir;
  io::save_trace(dir.path() / "t.csv", {{0, 3.0, 1.0, 1.5, 0.5}, {1, 0.25, 0.125, 0.0625, 0.0625}});
  EXPECT_EQ(io::read_text(dir.path() / "t.csv"), "iter,total,nml,lmk,lap\n0,3,1,1.5,0.5\n1,0.25,0.125,0.0625,0.0625\n");
}

TEST(Format, NineSignificantDigits) {
  EXPECT_EQ(io::format_g9(0.1), "0.1");
  EXPECT_EQ(io::format_g9(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(io::format_g9(123456789012.0), "1.23456789e+11");
  EXPECT_EQ(io::format_g9(-2.0), "-2");
}

TEST(Png, DeterministicAndChannelChecked) {
  TempDir dir;
  std::vector<double> values(4 * 3 * 3);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i % 7) / 6.0;
  io::save_png(dir.path() / "a.png", 4, 3, 3, values);
  io::save_png(dir.path() / "b.png", 4, 3, 3, values);
  const auto a = io::read_bytes(dir.path() / "a.png");
  ASSERT_GE(a.size(), 8u);
  EXPECT_EQ(a[1], 'P');
  EXPECT_EQ(a, io::read_bytes(dir.path() / "b.png"));
  EXPECT_NE(error_of([&] { io::save_png(dir.path() / "c.png", 4, 3, 2, values); }), "");
  EXPECT_NE(error_of([&] { io::save_png(dir.path() / "d.png", 5, 3, 3, values); }), "");
}

}  // namespace
