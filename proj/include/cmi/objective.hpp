#pragma once

#include <torch/torch.h>

#include <span>

#include "cmi/data_model.hpp"
#include "cmi/decoder.hpp"
#include "cmi/mi_regularizer.hpp"

namespace cmi {

struct LossWeights {
  double final_map = 1.0;  // P
  double fused = 0.8;      // lambda1, P_f
  double rgb = 0.6;        // lambda2, P_a
  double depth = 0.4;      // lambda3, P_g
  double mi = 0.1;         // lambda

  static LossWeights from(const ModelConfig& cfg);
};

struct LossBreakdown {
  double ce_final = 0;
  double ce_fused = 0;
  double ce_rgb = 0;
  double ce_depth = 0;
  double mi_total = 0;
  double total = 0;
};

// Differentiable terms of the objective; `total` is what gets backpropagated.
struct LossTerms {
  torch::Tensor ce_final, ce_fused, ce_rgb, ce_depth, mi_total, total;

  LossBreakdown values() const;
};

// Mean over pixels of max(x,0) - x*y + log(1 + exp(-|x|)).
// Throws kContract on shape mismatch.
torch::Tensor bce(const torch::Tensor& logits, const torch::Tensor& gt);

// total = ce(P) + l1 ce(P_f) + l2 ce(P_a) + l3 ce(P_g) + l * sum_c L_mi(z_a^c, z_g^c).
// `embeddings` holds 4 stage pairs, or none when the regularizer is absent.
// Throws kNumeric naming the first non-finite component.
LossTerms total_loss(const PredictionSet& preds, const torch::Tensor& gt,
                     std::span<const EmbeddingPair> embeddings, const LossWeights& weights);

}  // namespace cmi
