#pragma once

#include <torch/torch.h>

#include <array>
#include <utility>

#include "cmi/data_model.hpp"

namespace cmi {

// Four per-stage feature maps e1..e4, each reduced to C channels, at strides
// 4, 8, 16 and 32 of the input.
struct FeaturePyramid {
  std::array<torch::Tensor, 4> levels;

  const torch::Tensor& operator[](std::size_t i) const { return levels[i]; }
  torch::Tensor& operator[](std::size_t i) { return levels[i]; }
};

// Backbone stages s1..s4 followed by one 3x3 reduction conv (+ ReLU) per stage.
//
// The tiny backbone is a stride-2 stem plus four stride-2 conv blocks with
// GroupNorm; the resnet50 backbone reproduces the bottleneck layout
// (3, 4, 6, 3) with stage widths 256..2048.
class SaliencyEncoderImpl : public torch::nn::Module {
 public:
  SaliencyEncoderImpl(const ModelConfig& cfg, int64_t in_channels = 3);

  FeaturePyramid forward(const torch::Tensor& x);

  // Raw stage outputs before the reduction convs.
  std::array<torch::Tensor, 4> backbone_forward(const torch::Tensor& x);

  torch::nn::ModuleList& backbone() { return backbone_; }
  int64_t in_channels() const { return in_channels_; }

 private:
  int64_t in_channels_;
  torch::nn::ModuleList backbone_{nullptr};  // stem + 4 stages, indexed 0..4
  torch::nn::ModuleList reductions_{nullptr};
};
TORCH_MODULE(SaliencyEncoder);

// Checks the input contract, then runs the encoder.
// Throws kConfig on spatial size not divisible by 32, kNumeric on non-finite input.
FeaturePyramid encode(const torch::Tensor& input, SaliencyEncoder& encoder);

// Appearance and geometric streams: same structure, independent parameters,
// initialised from distinct sub-seeds of cfg.seed. When cfg.pretrained_path is
// set both backbones load the same classification weights.
std::pair<SaliencyEncoder, SaliencyEncoder> make_dual_encoders(const ModelConfig& cfg);

// Depth [B,1,H,W] -> [B,3,H,W] by channel replication.
torch::Tensor replicate_depth(const torch::Tensor& depth);

// Deterministic sub-seed for a named component.
uint64_t sub_seed(int64_t seed, uint64_t tag);

}  // namespace cmi
