#include <gtest/gtest.h>

#include <fstream>

#include "cmi/data_model.hpp"
#include "cmi/error.hpp"
#include "cmi/synth.hpp"
#include "test_util.hpp"

using namespace cmi;
using cmi::testing::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected cmi::Error";
  return ErrorKind::kIo;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// rgb/depth/gt images for one entry named `id` in dir.
ManifestEntry write_entry(const std::filesystem::path& dir, const std::string& id, int64_t h,
                          int64_t w) {
  ManifestEntry e;
  e.id = id;
  e.rgb_path = dir / (id + "_rgb.png");
  e.depth_path = dir / (id + "_depth.png");
  e.gt_path = dir / (id + "_gt.png");
  write_rgb8(torch::rand({3, h, w}), e.rgb_path);
  write_gray8(torch::rand({1, h, w}), e.depth_path);
  write_gray8((torch::rand({1, h, w}) > 0.5).to(torch::kFloat32), *e.gt_path);
  return e;
}

}  // namespace

TEST(Manifest, EmptyFileGivesEmptyManifest) {
  TempDir dir("manifest");
  write_text(dir / "m.jsonl", "");
  auto m = parse_manifest(dir / "m.jsonl");
  EXPECT_EQ(m.size(), 0u);
}

TEST(Manifest, PreservesFileOrder) {
  TempDir dir("manifest");
  for (auto id : {"c", "a", "b"}) write_entry(dir.path(), id, 8, 8);
  write_text(dir / "m.jsonl",
             R"({"rgb":"c_rgb.png","depth":"c_depth.png","gt":"c_gt.png","id":"c"}
{"rgb":"a_rgb.png","depth":"a_depth.png","id":"a"}

{"rgb":"b_rgb.png","depth":"b_depth.png","gt":"b_gt.png","id":"b"}
)");
  auto m = parse_manifest(dir / "m.jsonl");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.entries[0].id, "c");
  EXPECT_EQ(m.entries[1].id, "a");
  EXPECT_EQ(m.entries[2].id, "b");
  EXPECT_FALSE(m.entries[1].gt_path.has_value());
  EXPECT_EQ(m.entries[0].rgb_path, dir.path() / "c_rgb.png");
}

TEST(Manifest, MissingDepthNamesFieldAndLine) {
  TempDir dir("manifest");
  write_entry(dir.path(), "a", 8, 8);
  write_text(dir / "m.jsonl",
             "{\"rgb\":\"a_rgb.png\",\"depth\":\"a_depth.png\",\"id\":\"a\"}\n"
             "{\"rgb\":\"a_rgb.png\",\"id\":\"b\"}\n");
  auto parse = [&] { parse_manifest(dir / "m.jsonl"); };
  EXPECT_EQ(kind_of(parse), ErrorKind::kData);
  const auto msg = message_of(parse);
  EXPECT_NE(msg.find("depth"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
}

TEST(Manifest, MalformedLineReportsLineNumber) {
  TempDir dir("manifest");
  write_text(dir / "m.jsonl", "{\"rgb\": oops}\n");
  const auto msg = message_of([&] { parse_manifest(dir / "m.jsonl", false); });
  EXPECT_NE(msg.find(":1:"), std::string::npos) << msg;
}

TEST(Manifest, DuplicateIdRejected) {
  TempDir dir("manifest");
  write_text(dir / "m.jsonl",
             "{\"rgb\":\"x.png\",\"depth\":\"y.png\",\"id\":\"a\"}\n"
             "{\"rgb\":\"x.png\",\"depth\":\"y.png\",\"id\":\"a\"}\n");
  auto parse = [&] { parse_manifest(dir / "m.jsonl", false); };
  EXPECT_EQ(kind_of(parse), ErrorKind::kData);
  EXPECT_NE(message_of(parse).find("duplicate"), std::string::npos);
}

TEST(Manifest, MissingFileDetectedEagerly) {
  TempDir dir("manifest");
  write_text(dir / "m.jsonl", "{\"rgb\":\"x.png\",\"depth\":\"y.png\",\"id\":\"a\"}\n");
  EXPECT_NE(message_of([&] { parse_manifest(dir / "m.jsonl"); }).find("x.png"),
            std::string::npos);
  EXPECT_NO_THROW(parse_manifest(dir / "m.jsonl", false));
}

TEST(Manifest, WriteThenParseRoundTrips) {
  TempDir dir("manifest");
  DatasetManifest m;
  m.entries.push_back(write_entry(dir.path(), "one", 8, 8));
  m.entries.push_back(write_entry(dir.path(), "two", 8, 8));
  m.entries.back().gt_path.reset();
  write_manifest(m, dir / "m.jsonl");
  auto back = parse_manifest(dir / "m.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries[0].rgb_path, m.entries[0].rgb_path);
  EXPECT_EQ(back.entries[0].gt_path, m.entries[0].gt_path);
  EXPECT_FALSE(back.entries[1].gt_path.has_value());
}

TEST(LoadSample, EightBitMaxDepthIsOne) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 40, 30);
  write_gray8(torch::ones({1, 40, 30}), e.depth_path);
  auto s = load_sample(e, {352, 352});
  EXPECT_FLOAT_EQ(s.depth[0][100][100].item<float>(), 1.0f);
  EXPECT_EQ(s.source_size, (std::array<int64_t, 2>{40, 30}));
}

TEST(LoadSample, SixteenBitDepthScaledByFullRange) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 8, 8);
  write_gray16(torch::full({1, 8, 8}, 0.5), e.depth_path);
  auto s = load_sample(e, {8, 8});
  EXPECT_NEAR(s.depth[0][3][3].item<float>(), 32768.0 / 65535.0, 1e-6);
}

TEST(LoadSample, GtThresholdBoundary) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 4, 4);
  auto g = torch::zeros({1, 4, 4});
  g[0][0][0] = 127.0 / 255.0;
  g[0][0][1] = 128.0 / 255.0;
  write_gray8(g, *e.gt_path);
  auto s = load_sample(e, {4, 4});
  EXPECT_EQ(s.gt[0][0][0].item<float>(), 0.0f);
  EXPECT_EQ(s.gt[0][0][1].item<float>(), 1.0f);
}

TEST(LoadSample, ShapesAndRangesAtTarget) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 50, 70);
  auto s = load_sample(e, {352, 352});
  EXPECT_EQ(s.rgb.sizes(), (std::vector<int64_t>{3, 352, 352}));
  EXPECT_EQ(s.depth.sizes(), (std::vector<int64_t>{1, 352, 352}));
  EXPECT_EQ(s.gt.sizes(), (std::vector<int64_t>{1, 352, 352}));
  EXPECT_TRUE(((s.gt == 0) | (s.gt == 1)).all().item<bool>());
  EXPECT_GE(s.rgb.min().item<float>(), 0.0f);
  EXPECT_LE(s.rgb.max().item<float>(), 1.0f);
}

TEST(LoadSample, RgbChannelOrderPreserved) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 4, 4);
  auto rgb = torch::zeros({3, 4, 4});
  rgb[0].fill_(1.0);  // pure red
  write_rgb8(rgb, e.rgb_path);
  auto s = load_sample(e, {4, 4});
  EXPECT_FLOAT_EQ(s.rgb[0][1][1].item<float>(), 1.0f);
  EXPECT_FLOAT_EQ(s.rgb[2][1][1].item<float>(), 0.0f);
}

TEST(LoadSample, Deterministic) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 37, 41);
  auto a = load_sample(e, {64, 64});
  auto b = load_sample(e, {64, 64});
  EXPECT_TRUE(torch::equal(a.rgb, b.rgb));
  EXPECT_TRUE(torch::equal(a.depth, b.depth));
  EXPECT_TRUE(torch::equal(a.gt, b.gt));
}

TEST(LoadSample, ErrorsAreClassified) {
  TempDir dir("load");
  auto e = write_entry(dir.path(), "s", 8, 8);
  // depth stored as 3 channels
  write_rgb8(torch::rand({3, 8, 8}), e.depth_path);
  EXPECT_NE(message_of([&] { load_sample(e, {8, 8}); }).find("format"), std::string::npos);

  auto missing = write_entry(dir.path(), "m", 8, 8);
  std::filesystem::remove(missing.rgb_path);
  const auto msg = message_of([&] { load_sample(missing, {8, 8}); });
  EXPECT_NE(msg.find(missing.rgb_path.string()), std::string::npos) << msg;

  auto nogt = write_entry(dir.path(), "n", 8, 8);
  nogt.gt_path.reset();
  EXPECT_EQ(kind_of([&] { load_sample(nogt, {8, 8}, true); }), ErrorKind::kData);
  EXPECT_NO_THROW(load_sample(nogt, {8, 8}, false));
}

TEST(LoadSample, SynthRoundTripWithinQuantisation) {
  TempDir dir("roundtrip");
  auto manifest = synth_generate(3, {32, 32}, 11, dir.path());
  ASSERT_EQ(manifest.size(), 3u);
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto scene = generate_scene({32, 32}, 11, static_cast<int64_t>(i));
    auto s = load_sample(manifest.entries[i], {32, 32}, true);
    EXPECT_LE((s.rgb - scene.sample.rgb).abs().max().item<float>(), 1.0f / 255.0f + 1e-6f);
    EXPECT_LE((s.depth - scene.sample.depth).abs().max().item<float>(), 1.0f / 255.0f + 1e-6f);
    EXPECT_TRUE(torch::equal(s.gt, scene.sample.gt));
  }
}

TEST(ModelConfig, Validation) {
  ModelConfig cfg = cmi::testing::tiny_config();
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.embed_dim = 1;
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.input_size = {65, 64};
  EXPECT_THROW(bad.validate(), Error);
  bad = cfg;
  bad.mi_weight = -0.1;
  EXPECT_THROW(bad.validate(), Error);
  // C >= K is not required
  bad = cfg;
  bad.reduced_channels = 2;
  bad.embed_dim = 32;
  EXPECT_NO_THROW(bad.validate());
}

TEST(ModelConfig, Defaults) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.reduced_channels, 32);
  EXPECT_EQ(cfg.embed_dim, 6);
  EXPECT_EQ(cfg.input_size, (std::array<int64_t, 2>{352, 352}));
  EXPECT_EQ(cfg.loss_weights, (std::array<double, 3>{0.8, 0.6, 0.4}));
  EXPECT_DOUBLE_EQ(cfg.mi_weight, 0.1);
  EXPECT_EQ(cfg.refined_channels(Variant::kFull), 134);
  EXPECT_EQ(cfg.refined_channels(Variant::kBase), 128);
}

TEST(ModelConfig, JsonRoundTrip) {
  auto cfg = cmi::testing::tiny_config(96, 12);
  cfg.embed_dim = 5;
  cfg.seed = 42;
  ModelConfig back;
  merge_json(to_json(cfg), back);
  EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(ModelConfig, TinyBackboneWidthsDefault) {
  ModelConfig cfg;
  merge_json(nlohmann::json{{"backbone", "tiny"}}, cfg);
  EXPECT_EQ(cfg.backbone, Backbone::kTiny);
  EXPECT_EQ(cfg.stage_channels, (std::array<int64_t, 4>{16, 32, 48, 64}));
}
