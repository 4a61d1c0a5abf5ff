#include "cmi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cmi/encoder.hpp"
#include "cmi/error.hpp"

namespace cmi {

namespace fs = std::filesystem;

namespace {

struct Shape {
  enum Kind { kEllipse, kRect, kTriangle } kind = kEllipse;
  double cy = 0, cx = 0;
  double ry = 0, rx = 0, angle = 0;
  std::array<std::array<double, 2>, 3> tri{};
  std::array<float, 3> color{};
  float depth = 0;
  bool camouflaged = false;

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * dx + s * dy;
    const double v = -s * dx + c * dy;
    switch (kind) {
      case kEllipse: return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
      case kRect: return std::abs(u) <= rx && std::abs(v) <= ry;
      case kTriangle: {
        auto side = [&](const auto& a, const auto& b) {
          return (b[1] - a[1]) * (y - a[0]) - (b[0] - a[0]) * (x - a[1]);
        };
        const double d0 = side(tri[0], tri[1]);
        const double d1 = side(tri[1], tri[2]);
        const double d2 = side(tri[2], tri[0]);
        const bool neg = d0 < 0 || d1 < 0 || d2 < 0;
        const bool pos = d0 > 0 || d1 > 0 || d2 > 0;
        return !(neg && pos);
      }
    }
    return false;
  }
};

float color_distance(const std::array<float, 3>& a, const std::array<float, 3>& b) {
  float s = 0;
  for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Attempt to build one scene; returns false if the foreground ratio is out of range.
bool try_scene(std::mt19937_64& rng, int64_t h, int64_t w, SynthScene& scene) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double side = static_cast<double>(std::min(h, w));

  std::array<float, 3> bg{};
  for (auto& c : bg) c = static_cast<float>(uniform(0.2, 0.8));

  // Texture: two low-frequency sinusoids, amplitude 0.03 in total.
  const double f1 = uniform(1.0, 4.0), f2 = uniform(1.0, 4.0);
  const double p1 = uniform(0.0, 2 * std::numbers::pi), p2 = uniform(0.0, 2 * std::numbers::pi);
  const double a1 = uniform(-1.0, 1.0), a2 = uniform(-1.0, 1.0);
  // Depth ramp in [0.1, 0.4].
  const double d0 = uniform(0.1, 0.2), dy = uniform(0.0, 0.1), dx = uniform(0.0, 0.1);

  const int count = 1 + static_cast<int>(unit(rng) * 3.0);
  std::vector<float> depth_levels{0.6f, 0.7f, 0.8f, 0.9f};
  std::shuffle(depth_levels.begin(), depth_levels.end(), rng);

  std::vector<Shape> shapes;
  for (int i = 0; i < count; ++i) {
    Shape s;
    s.kind = static_cast<Shape::Kind>(static_cast<int>(unit(rng) * 3.0) % 3);
    s.cy = uniform(0.2, 0.8) * h;
    s.cx = uniform(0.2, 0.8) * w;
    s.ry = uniform(0.1, 0.28) * side;
    s.rx = uniform(0.1, 0.28) * side;
    s.angle = uniform(0.0, std::numbers::pi);
    const double base = uniform(0.0, 2 * std::numbers::pi);
    for (std::size_t k = 0; k < 3; ++k) {
      const double ang = base + 2.0 * std::numbers::pi * k / 3.0 + uniform(-0.4, 0.4);
      const double rad = uniform(0.15, 0.3) * side;
      s.tri[k] = {s.cy + rad * std::sin(ang), s.cx + rad * std::cos(ang)};
    }
    s.depth = depth_levels[static_cast<std::size_t>(i)] + static_cast<float>(uniform(-0.03, 0.03));
    s.camouflaged = unit(rng) < 0.5;
    if (s.camouflaged) {
      for (int c = 0; c < 3; ++c) {
        s.color[c] = std::clamp(bg[c] + static_cast<float>(uniform(-0.04, 0.04)), 0.0f, 1.0f);
      }
    } else {
      do {
        for (auto& c : s.color) c = static_cast<float>(unit(rng));
      } while (color_distance(s.color, bg) < 0.35f);
    }
    shapes.push_back(s);
  }
  // Paint far to near so nearer shapes occlude.
  std::sort(shapes.begin(), shapes.end(),
            [](const Shape& a, const Shape& b) { return a.depth < b.depth; });

  auto rgb = torch::empty({3, h, w}, torch::kFloat32);
  auto depth = torch::empty({1, h, w}, torch::kFloat32);
  auto gt = torch::zeros({1, h, w}, torch::kFloat32);
  auto rgb_a = rgb.accessor<float, 3>();
  auto depth_a = depth.accessor<float, 3>();
  auto gt_a = gt.accessor<float, 3>();

  int64_t fg_pixels = 0;
  std::vector<bool> visible(shapes.size(), false);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double ny = (y + 0.5) / h, nx = (x + 0.5) / w;
      const float tex = static_cast<float>(
          0.015 * a1 * std::sin(2 * std::numbers::pi * f1 * nx + p1) +
          0.015 * a2 * std::sin(2 * std::numbers::pi * f2 * ny + p2));
      std::array<float, 3> color = bg;
      float d = static_cast<float>(d0 + dy * ny + dx * nx);
      bool fg = false;
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        if (shapes[k].contains(y + 0.5, x + 0.5)) {
          color = shapes[k].color;
          d = shapes[k].depth;
          fg = true;
          visible[k] = true;
        }
      }
      for (int c = 0; c < 3; ++c) rgb_a[c][y][x] = std::clamp(color[c] + tex, 0.0f, 1.0f);
      depth_a[0][y][x] = d;
      if (fg) {
        gt_a[0][y][x] = 1.0f;
        ++fg_pixels;
      }
    }
  }
  const double ratio = static_cast<double>(fg_pixels) / static_cast<double>(h * w);
  if (ratio < kSynthMinForeground || ratio > kSynthMaxForeground) return false;

  scene.sample.rgb = rgb;
  scene.sample.depth = depth;
  scene.sample.gt = gt;
  scene.sample.source_size = {h, w};
  scene.background_color = bg;
  scene.shape_count = count;
  scene.depth_necessary = false;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (shapes[k].camouflaged && visible[k]) scene.depth_necessary = true;
  }
  return true;
}

}  // namespace

SynthScene generate_scene(std::array<int64_t, 2> size, int64_t seed, int64_t index) {
  require(size[0] > 0 && size[1] > 0, ErrorKind::kConfig, "synthetic scene size must be positive");
  std::mt19937_64 rng(sub_seed(seed, 0x5EED0000ULL + static_cast<uint64_t>(index)));
  SynthScene scene;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    if (try_scene(rng, size[0], size[1], scene)) {
      scene.sample.id = "synth_" + std::to_string(index);
      return scene;
    }
  }
  fail(ErrorKind::kConfig, "could not generate a scene with a valid foreground ratio at size " +
                               std::to_string(size[0]) + "x" + std::to_string(size[1]));
}

DatasetManifest synth_generate(int64_t n, std::array<int64_t, 2> size, int64_t seed,
                               const fs::path& out_dir) {
  require(n >= 1, ErrorKind::kConfig, "synth: n must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir / "rgb", ec);
  fs::create_directories(out_dir / "depth", ec);
  fs::create_directories(out_dir / "gt", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory " + out_dir.string() + ": " + ec.message());

  DatasetManifest manifest;
  for (int64_t i = 0; i < n; ++i) {
    auto scene = generate_scene(size, seed, i);
    const auto& s = scene.sample;
    ManifestEntry e;
    e.id = s.id;
    e.rgb_path = out_dir / "rgb" / (s.id + ".png");
    e.depth_path = out_dir / "depth" / (s.id + ".png");
    e.gt_path = out_dir / "gt" / (s.id + ".png");
    write_rgb8(s.rgb, e.rgb_path);
    write_gray16(s.depth, e.depth_path);
    write_gray8(s.gt, *e.gt_path);
    manifest.entries.push_back(std::move(e));
  }
  write_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace cmi
