#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

#include "cmi/data_model.hpp"
#include "cmi/mi_regularizer.hpp"

namespace cmi {

// Saliency maps of one forward pass, all [B, 1, H, W] at input resolution.
// Logits are kept for the loss; probabilities are the logistic view.
struct PredictionSet {
  torch::Tensor logit_a;      // appearance branch, P_a
  torch::Tensor logit_g;      // geometric branch, P_g
  torch::Tensor logit_f;      // fused branch, P_f
  torch::Tensor logit_final;  // P

  static torch::Tensor probability(const torch::Tensor& logits);
  torch::Tensor p_a() const { return probability(logit_a); }
  torch::Tensor p_g() const { return probability(logit_g); }
  torch::Tensor p_f() const { return probability(logit_f); }
  torch::Tensor p() const { return probability(logit_final); }
};

// Residual position + channel attention:
//   out = x + s_pos * PA(x) + s_ch * CA(x)
// PA applies a softmax-normalised N x N spatial affinity to a value projection;
// CA applies a softmax-normalised C x C channel affinity to the channel maps.
class DualAttentionImpl : public torch::nn::Module {
 public:
  DualAttentionImpl(int64_t channels, int64_t max_positions, double scale_init);

  torch::Tensor forward(const torch::Tensor& x);

  // [B, N, N] row-stochastic spatial affinity.
  torch::Tensor position_affinity(const torch::Tensor& x);
  torch::Tensor position_branch(const torch::Tensor& x);
  torch::Tensor channel_branch(const torch::Tensor& x);

  torch::Tensor& position_scale() { return pos_scale_; }
  torch::Tensor& channel_scale() { return ch_scale_; }
  torch::nn::Conv2d& value() { return value_; }

 private:
  void check_budget(const torch::Tensor& x) const;

  int64_t max_positions_;
  torch::nn::Conv2d query_{nullptr}, key_{nullptr}, value_{nullptr};
  torch::Tensor pos_scale_, ch_scale_;
};
TORCH_MODULE(DualAttention);

// Dense atrous spatial pyramid pooling. Branch i sees the concatenation of the
// input and all previous branch outputs (only the input when `dense` is off);
// a 1x1 projection maps [input, branches...] to `out_channels`.
class DenseAsppImpl : public torch::nn::Module {
 public:
  DenseAsppImpl(int64_t in_channels, int64_t branch_channels, int64_t out_channels,
                std::vector<int64_t> dilations, bool dense = true);

  torch::Tensor forward(const torch::Tensor& x);

  int64_t out_channels() const { return out_channels_; }

 private:
  bool dense_;
  int64_t out_channels_;
  torch::nn::ModuleList branches_{nullptr};
  torch::nn::Sequential project_{nullptr};
};
TORCH_MODULE(DenseAspp);

// Decoder f_gamma. Two-stream mode: P_a, P_g from per-stream DenseASPP heads,
// P_f from DenseASPP over [da(r_a), da(r_g)], P from a 3x3 conv over the three
// logit maps. Single-stream mode has one attention + DenseASPP path and P = P_f.
class FusionDecoderImpl : public torch::nn::Module {
 public:
  FusionDecoderImpl(const ModelConfig& cfg, int64_t refined_channels, bool single_stream = false);

  PredictionSet forward(const RefinedFeature& r_a, const RefinedFeature& r_g,
                        std::array<int64_t, 2> input_size);
  PredictionSet forward_single(const torch::Tensor& r, std::array<int64_t, 2> input_size);

  bool single_stream() const { return single_stream_; }
  torch::nn::Conv2d& fusion_conv() { return fuse_; }

 private:
  bool single_stream_;
  int64_t refined_channels_;
  DualAttention attn_a_{nullptr}, attn_g_{nullptr};
  DenseAspp aspp_a_{nullptr}, aspp_g_{nullptr}, aspp_f_{nullptr};
  torch::nn::Conv2d head_a_{nullptr}, head_g_{nullptr}, head_f_{nullptr}, fuse_{nullptr};
};
TORCH_MODULE(FusionDecoder);

// Bilinear resize of [B, C, h, w] logits.
torch::Tensor upsample_logits(const torch::Tensor& logits, std::array<int64_t, 2> size);

}  // namespace cmi
