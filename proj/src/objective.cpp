#include "cmi/objective.hpp"

#include <cmath>

#include "cmi/error.hpp"

namespace cmi {

LossWeights LossWeights::from(const ModelConfig& cfg) {
  LossWeights w;
  w.fused = cfg.loss_weights[0];
  w.rgb = cfg.loss_weights[1];
  w.depth = cfg.loss_weights[2];
  w.mi = cfg.mi_weight;
  return w;
}

LossBreakdown LossTerms::values() const {
  auto v = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
  return {v(ce_final), v(ce_fused), v(ce_rgb), v(ce_depth), v(mi_total), v(total)};
}

torch::Tensor bce(const torch::Tensor& logits, const torch::Tensor& gt) {
  require(logits.sizes() == gt.sizes(), ErrorKind::kContract,
          "bce: prediction and ground truth shapes differ");
  auto y = gt.to(logits.dtype());
  auto per_pixel = logits.clamp_min(0) - logits * y + torch::log1p(torch::exp(-logits.abs()));
  return per_pixel.mean();
}

LossTerms total_loss(const PredictionSet& preds, const torch::Tensor& gt,
                     std::span<const EmbeddingPair> embeddings, const LossWeights& weights) {
  require(embeddings.empty() || embeddings.size() == 4, ErrorKind::kContract,
          "total_loss expects 4 embedding pairs or none");
  LossTerms t;
  t.ce_final = bce(preds.logit_final, gt);
  t.ce_fused = bce(preds.logit_f, gt);
  t.ce_rgb = bce(preds.logit_a, gt);
  t.ce_depth = bce(preds.logit_g, gt);
  t.mi_total = embeddings.empty() ? torch::zeros({}, t.ce_final.options())
                                  : total_mi_loss(embeddings);

  const std::pair<const char*, const torch::Tensor*> parts[] = {
      {"ce_final", &t.ce_final}, {"ce_fused", &t.ce_fused}, {"ce_rgb", &t.ce_rgb},
      {"ce_depth", &t.ce_depth}, {"mi_total", &t.mi_total}};
  for (const auto& [name, term] : parts) {
    if (!std::isfinite(term->item<double>())) {
      fail(ErrorKind::kNumeric, std::string("non-finite loss component: ") + name);
    }
  }

  t.total = weights.final_map * t.ce_final + weights.fused * t.ce_fused +
            weights.rgb * t.ce_rgb + weights.depth * t.ce_depth + weights.mi * t.mi_total;
  return t;
}

}  // namespace cmi
