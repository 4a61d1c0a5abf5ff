#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cmi/data_model.hpp"

namespace cmi {

// One generated scene together with the facts the generator knows about it.
struct SynthScene {
  RgbdSample sample;
  std::array<float, 3> background_color{};
  // At least one shape is coloured like the background and only stands out in depth.
  bool depth_necessary = false;
  int shape_count = 0;
};

// Depth values of the background ramp stay below this; shapes sit above it.
inline constexpr float kSynthDepthSplit = 0.5f;
inline constexpr double kSynthMinForeground = 0.05;
inline constexpr double kSynthMaxForeground = 0.6;

// Scene `index` of the stream defined by `seed`. Deterministic in (seed, index, size).
//
// RGB is a low-amplitude textured background with 1-3 convex shapes (ellipse,
// rectangle, triangle). Each shape is either clearly coloured or, with
// probability 0.5, coloured within a few percent of the background. Depth is a
// smooth background ramp with each shape at its own nearer constant depth. GT
// is the union of the shape masks, with foreground ratio in [0.05, 0.6].
SynthScene generate_scene(std::array<int64_t, 2> size, int64_t seed, int64_t index);

// Writes n scenes under out_dir (rgb/, depth/, gt/ PNGs; depth as 16-bit) plus
// out_dir/manifest.jsonl, and returns the manifest. Throws kIo if unwritable.
DatasetManifest synth_generate(int64_t n, std::array<int64_t, 2> size, int64_t seed,
                               const std::filesystem::path& out_dir);

}  // namespace cmi
