#pragma once

#include <torch/torch.h>

#include <span>
#include <utility>
#include <vector>

#include "cmi/encoder.hpp"

namespace cmi {

enum class Stream { kAppearance, kGeometric };

const char* to_string(Stream s);

// Per-stage K-dimensional embedding for a batch. `raw` holds the logits and
// `dist` their softmax, both [B, K].
struct LatentEmbedding {
  torch::Tensor raw;
  torch::Tensor dist;
  int stage = 0;  // 1..4
  Stream stream = Stream::kAppearance;
};

struct EmbeddingPair {
  LatentEmbedding appearance;
  LatentEmbedding geometric;
};

// conv3x3 (C -> 4C) + ReLU, global average pool, one linear layer to K.
// In `simple` mode (the SS ablation) the conv is dropped: pool then linear C -> K.
class EmbedHeadImpl : public torch::nn::Module {
 public:
  EmbedHeadImpl(int64_t reduced_channels, int64_t embed_dim, bool simple = false);

  torch::Tensor forward(const torch::Tensor& e);

  bool simple() const { return simple_; }

 private:
  bool simple_;
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(EmbedHead);

// Runs one head and packages both views. Throws kNumeric on non-finite logits.
LatentEmbedding embed_stage(const torch::Tensor& e, EmbedHead& head, int stage, Stream stream);

// Batched measures over [B, K] distributions; each returns a [B] tensor.
torch::Tensor entropy(const torch::Tensor& p);
torch::Tensor cross_entropy(const torch::Tensor& p, const torch::Tensor& q);
torch::Tensor kl_divergence(const torch::Tensor& p, const torch::Tensor& q);

// Four-term regularizer (H_g(a) + H_a(g)) - (KL(a||g) + KL(g||a)), averaged
// over the batch. Gradients flow through every term. Throws kContract on K mismatch.
torch::Tensor mi_loss(const LatentEmbedding& za, const LatentEmbedding& zg);
torch::Tensor mi_loss(const torch::Tensor& dist_a, const torch::Tensor& dist_g);
// H(a) + H(g), batch mean; equal to mi_loss up to rounding.
torch::Tensor mi_loss_identity(const torch::Tensor& dist_a, const torch::Tensor& dist_g);

// Sum over the four stages of mi_loss. Throws kContract unless exactly 4 pairs.
torch::Tensor total_mi_loss(std::span<const EmbeddingPair> pairs);

struct RefinedFeature {
  torch::Tensor r;  // [B, 4C (+K), h, w]
  Stream stream = Stream::kAppearance;
};

// All four levels resampled (bilinear) to the grid of `level` (1..4) and
// concatenated: [B, 4C, h, w].
torch::Tensor multilevel_feature(const FeaturePyramid& pyramid, int64_t level);

// z [B, K] -> [B, K, h, w], constant across positions.
torch::Tensor tile_embedding(const torch::Tensor& z, int64_t height, int64_t width);

// r_a = [raw appearance feature, tiled z_g4]; r_g = [raw geometric feature, tiled z_a4].
// Each stream is paired with the embedding of the other modality.
std::pair<RefinedFeature, RefinedFeature> fuse_stage4(const FeaturePyramid& e_a,
                                                      const FeaturePyramid& e_g,
                                                      const LatentEmbedding& z_a4,
                                                      const LatentEmbedding& z_g4,
                                                      int64_t level = 4);

}  // namespace cmi
