#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace cmi {

enum class Backbone { kTiny, kResNet50 };

// Training/ablation variant. kFull is the cascaded MI model; the rest are
// the comparison settings used in ablation runs.
enum class Variant { kFull, kBase, kSs, kRgbOnly, kEarlyFusion, kPfOnly };

std::string to_string(Backbone b);
std::string to_string(Variant v);
Backbone backbone_from_string(const std::string& s);
Variant variant_from_string(const std::string& s);

// True for the two-stream variants that carry per-stage embeddings and the
// MI regularizer.
bool has_embeddings(Variant v);
bool is_single_stream(Variant v);

struct ModelConfig {
  Backbone backbone = Backbone::kResNet50;
  // Backbone widths per stage, before reduction.
  std::array<int64_t, 4> stage_channels{256, 512, 1024, 2048};
  // Stem width of the tiny backbone (the ResNet stem is fixed at 64).
  int64_t stem_channels = 16;
  int64_t reduced_channels = 32;  // C
  int64_t embed_dim = 6;          // K
  std::array<int64_t, 2> input_size{352, 352};
  std::array<double, 3> loss_weights{0.8, 0.6, 0.4};
  double mi_weight = 0.1;
  int64_t seed = 0;

  // Pyramid level (1..4) whose grid the refined features live on.
  int64_t fusion_level = 4;
  std::vector<int64_t> aspp_dilations{3, 6, 12, 18};
  int64_t aspp_branch_channels = 32;
  int64_t aspp_out_channels = 64;
  bool aspp_dense = true;
  // Position attention materialises an N x N affinity; N above this is refused.
  int64_t attention_max_positions = 4096;
  double attention_scale_init = 0.1;

  std::string pretrained_path;

  void validate() const;
  int64_t refined_channels(Variant v) const;
};

nlohmann::json to_json(const ModelConfig& cfg);
// Reads the ModelConfig keys present in `j`; absent keys keep their defaults.
void merge_json(const nlohmann::json& j, ModelConfig& cfg);

struct RgbdSample {
  torch::Tensor rgb;    // [3, H, W] float32 in [0, 1]
  torch::Tensor depth;  // [1, H, W] float32 in [0, 1]
  torch::Tensor gt;     // [1, H, W] float32 in {0, 1}; undefined if absent
  std::string id;
  // Height and width of the RGB file on disk.
  std::array<int64_t, 2> source_size{0, 0};

  bool has_gt() const { return gt.defined(); }
};

struct ManifestEntry {
  std::filesystem::path rgb_path;
  std::filesystem::path depth_path;
  std::optional<std::filesystem::path> gt_path;
  std::string id;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Parses a JSON-lines manifest. Relative paths resolve against the manifest's
// directory. With `check_files`, every referenced file must exist.
DatasetManifest parse_manifest(const std::filesystem::path& path,
                               bool check_files = true);
void write_manifest(const DatasetManifest& manifest,
                    const std::filesystem::path& path);

// Loads and resizes one sample. RGB/depth are resized bilinearly, GT with
// nearest neighbour and thresholded at 0.5.
RgbdSample load_sample(const ManifestEntry& entry,
                       std::array<int64_t, 2> target_size,
                       bool require_gt = false);

// Reads a single-channel 8/16-bit image normalised to [0, 1], native size.
torch::Tensor read_gray(const std::filesystem::path& path);
void write_gray8(const torch::Tensor& map, const std::filesystem::path& path);
void write_gray16(const torch::Tensor& map, const std::filesystem::path& path);
void write_rgb8(const torch::Tensor& rgb, const std::filesystem::path& path);

}  // namespace cmi
