#pragma once

#include <torch/torch.h>

#include <vector>

#include "cmi/data_model.hpp"
#include "cmi/decoder.hpp"
#include "cmi/encoder.hpp"
#include "cmi/mi_regularizer.hpp"

namespace cmi {

struct ForwardOutput {
  PredictionSet preds;
  // Stage 1..4 embedding pairs; empty for variants without the regularizer.
  std::vector<EmbeddingPair> embeddings;
};

// The complete network for one variant: encoders, embedding heads, decoder.
//
// Only the stage-4 embeddings reach the decoder (tiled into the refined
// features); stages 1-3 are trained through the MI term alone.
class CascadedSaliencyNetImpl : public torch::nn::Module {
 public:
  CascadedSaliencyNetImpl(const ModelConfig& cfg, Variant variant);

  // rgb [B,3,H,W], depth [B,1,H,W], both in [0,1].
  ForwardOutput forward(const torch::Tensor& rgb, const torch::Tensor& depth);

  // Probability map reported as the prediction (P, or P_f for pf_only).
  torch::Tensor final_probability(const PredictionSet& preds) const;
  const torch::Tensor& final_logits(const PredictionSet& preds) const;

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }

  SaliencyEncoder& appearance_encoder() { return enc_a_; }
  SaliencyEncoder& geometric_encoder() { return enc_g_; }
  FusionDecoder& decoder() { return decoder_; }
  torch::nn::ModuleList& heads() { return heads_; }

 private:
  ModelConfig cfg_;
  Variant variant_;
  SaliencyEncoder enc_a_{nullptr}, enc_g_{nullptr};
  torch::nn::ModuleList heads_{nullptr};  // [a1, g1, a2, g2, a3, g3, a4, g4]
  FusionDecoder decoder_{nullptr};
};
TORCH_MODULE(CascadedSaliencyNet);

}  // namespace cmi
