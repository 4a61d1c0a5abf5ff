#include "cmi/model.hpp"

#include "cmi/error.hpp"

namespace cmi {

CascadedSaliencyNetImpl::CascadedSaliencyNetImpl(const ModelConfig& cfg, Variant variant)
    : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  if (is_single_stream(variant_)) {
    torch::manual_seed(sub_seed(cfg_.seed, 1));
    const int64_t in = variant_ == Variant::kEarlyFusion ? 4 : 3;
    if (!cfg_.pretrained_path.empty()) {
      fail(ErrorKind::kConfig, "pretrained weights are not supported for single-stream variants");
    }
    enc_a_ = register_module("encoder_a", SaliencyEncoder(cfg_, in));
  } else {
    auto [a, g] = make_dual_encoders(cfg_);
    enc_a_ = register_module("encoder_a", a);
    enc_g_ = register_module("encoder_g", g);
  }

  if (has_embeddings(variant_)) {
    torch::nn::ModuleList heads;
    for (uint64_t i = 0; i < 8; ++i) {
      torch::manual_seed(sub_seed(cfg_.seed, 10 + i));
      heads->push_back(EmbedHead(cfg_.reduced_channels, cfg_.embed_dim, variant_ == Variant::kSs));
    }
    heads_ = register_module("heads", heads);
  }

  torch::manual_seed(sub_seed(cfg_.seed, 20));
  decoder_ = register_module(
      "decoder", FusionDecoder(cfg_, cfg_.refined_channels(variant_), is_single_stream(variant_)));
}

ForwardOutput CascadedSaliencyNetImpl::forward(const torch::Tensor& rgb, const torch::Tensor& depth) {
  const std::array<int64_t, 2> size{rgb.size(2), rgb.size(3)};
  require(depth.size(2) == size[0] && depth.size(3) == size[1], ErrorKind::kContract,
          "rgb and depth spatial sizes differ");
  ForwardOutput out;

  if (is_single_stream(variant_)) {
    auto input = variant_ == Variant::kEarlyFusion ? torch::cat({rgb, depth}, 1) : rgb;
    auto e = encode(input, enc_a_);
    out.preds = decoder_->forward_single(multilevel_feature(e, cfg_.fusion_level), size);
    return out;
  }

  auto e_a = encode(rgb, enc_a_);
  auto e_g = encode(replicate_depth(depth), enc_g_);

  if (!has_embeddings(variant_)) {
    RefinedFeature r_a{multilevel_feature(e_a, cfg_.fusion_level), Stream::kAppearance};
    RefinedFeature r_g{multilevel_feature(e_g, cfg_.fusion_level), Stream::kGeometric};
    out.preds = decoder_->forward(r_a, r_g, size);
    return out;
  }

  for (int c = 0; c < 4; ++c) {
    EmbedHead ha(heads_->ptr<EmbedHeadImpl>(2 * c));
    EmbedHead hg(heads_->ptr<EmbedHeadImpl>(2 * c + 1));
    out.embeddings.push_back({embed_stage(e_a[c], ha, c + 1, Stream::kAppearance),
                              embed_stage(e_g[c], hg, c + 1, Stream::kGeometric)});
  }
  auto [r_a, r_g] = fuse_stage4(e_a, e_g, out.embeddings[3].appearance,
                                out.embeddings[3].geometric, cfg_.fusion_level);
  out.preds = decoder_->forward(r_a, r_g, size);
  return out;
}

const torch::Tensor& CascadedSaliencyNetImpl::final_logits(const PredictionSet& preds) const {
  return variant_ == Variant::kPfOnly ? preds.logit_f : preds.logit_final;
}

torch::Tensor CascadedSaliencyNetImpl::final_probability(const PredictionSet& preds) const {
  return PredictionSet::probability(final_logits(preds));
}

}  // namespace cmi
