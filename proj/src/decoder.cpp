#include "cmi/decoder.hpp"

#include "cmi/error.hpp"

namespace cmi {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor PredictionSet::probability(const torch::Tensor& logits) {
  // float32 sigmoid saturates to exactly 0/1; keep the map strictly inside.
  return torch::sigmoid(logits).clamp(1e-6, 1.0 - 1e-6);
}

torch::Tensor upsample_logits(const torch::Tensor& logits, std::array<int64_t, 2> size) {
  if (logits.size(2) == size[0] && logits.size(3) == size[1]) return logits;
  return F::interpolate(logits, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{size[0], size[1]})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
}

DualAttentionImpl::DualAttentionImpl(int64_t channels, int64_t max_positions, double scale_init)
    : max_positions_(max_positions) {
  const int64_t qk = std::max<int64_t>(1, channels / 8);
  auto opts = [](int64_t in, int64_t out) { return nn::Conv2dOptions(in, out, 1).bias(false); };
  query_ = register_module("query", nn::Conv2d(opts(channels, qk)));
  key_ = register_module("key", nn::Conv2d(opts(channels, qk)));
  value_ = register_module("value", nn::Conv2d(opts(channels, channels)));
  pos_scale_ = register_parameter("position_scale", torch::full({1}, scale_init));
  ch_scale_ = register_parameter("channel_scale", torch::full({1}, scale_init));
}

void DualAttentionImpl::check_budget(const torch::Tensor& x) const {
  const int64_t n = x.size(2) * x.size(3);
  if (n > max_positions_) {
    fail(ErrorKind::kResource,
         "position attention over " + std::to_string(n) + " positions exceeds the budget of " +
             std::to_string(max_positions_) + "; use a smaller input or a coarser fusion_level");
  }
}

torch::Tensor DualAttentionImpl::position_affinity(const torch::Tensor& x) {
  check_budget(x);
  const auto b = x.size(0);
  const auto n = x.size(2) * x.size(3);
  auto q = query_(x).view({b, -1, n}).permute({0, 2, 1});  // [B, N, c]
  auto k = key_(x).view({b, -1, n});                       // [B, c, N]
  return torch::softmax(torch::bmm(q, k), -1);
}

torch::Tensor DualAttentionImpl::position_branch(const torch::Tensor& x) {
  const auto b = x.size(0);
  const auto n = x.size(2) * x.size(3);
  auto attn = position_affinity(x);
  auto v = value_(x).view({b, -1, n});
  return torch::bmm(v, attn.permute({0, 2, 1})).view(x.sizes());
}

torch::Tensor DualAttentionImpl::channel_branch(const torch::Tensor& x) {
  const auto b = x.size(0);
  const auto c = x.size(1);
  auto flat = x.view({b, c, -1});
  auto energy = torch::bmm(flat, flat.permute({0, 2, 1}));
  // max-shifted energy as in the reference channel attention module
  energy = std::get<0>(energy.max(-1, true)).expand_as(energy) - energy;
  auto attn = torch::softmax(energy, -1);
  return torch::bmm(attn, flat).view(x.sizes());
}

torch::Tensor DualAttentionImpl::forward(const torch::Tensor& x) {
  return x + pos_scale_ * position_branch(x) + ch_scale_ * channel_branch(x);
}

DenseAsppImpl::DenseAsppImpl(int64_t in_channels, int64_t branch_channels, int64_t out_channels,
                             std::vector<int64_t> dilations, bool dense)
    : dense_(dense), out_channels_(out_channels) {
  nn::ModuleList branches;
  int64_t width = in_channels;
  for (auto d : dilations) {
    const int64_t branch_in = dense_ ? width : in_channels;
    branches->push_back(nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(branch_in, 2 * branch_channels, 1)),
        nn::ReLU(),
        nn::Conv2d(nn::Conv2dOptions(2 * branch_channels, branch_channels, 3)
                       .padding(d)
                       .dilation(d)),
        nn::ReLU()));
    width += branch_channels;
  }
  branches_ = register_module("branches", branches);
  project_ = register_module(
      "project",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(width, out_channels, 1)), nn::ReLU()));
}

torch::Tensor DenseAsppImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> feats{x};
  for (std::size_t i = 0; i < branches_->size(); ++i) {
    auto in = dense_ ? torch::cat(feats, 1) : x;
    feats.push_back(branches_->ptr<nn::SequentialImpl>(i)->forward(in));
  }
  return project_->forward(torch::cat(feats, 1));
}

FusionDecoderImpl::FusionDecoderImpl(const ModelConfig& cfg, int64_t refined_channels,
                                     bool single_stream)
    : single_stream_(single_stream), refined_channels_(refined_channels) {
  auto aspp = [&](int64_t in) {
    return DenseAspp(in, cfg.aspp_branch_channels, cfg.aspp_out_channels, cfg.aspp_dilations,
                     cfg.aspp_dense);
  };
  auto head = [&] { return nn::Conv2d(nn::Conv2dOptions(cfg.aspp_out_channels, 1, 1)); };
  auto attention = [&] {
    return DualAttention(refined_channels, cfg.attention_max_positions, cfg.attention_scale_init);
  };

  attn_a_ = register_module("attn_a", attention());
  aspp_f_ = register_module("aspp_f", aspp(single_stream_ ? refined_channels : 2 * refined_channels));
  head_f_ = register_module("head_f", head());
  if (!single_stream_) {
    attn_g_ = register_module("attn_g", attention());
    aspp_a_ = register_module("aspp_a", aspp(refined_channels));
    aspp_g_ = register_module("aspp_g", aspp(refined_channels));
    head_a_ = register_module("head_a", head());
    head_g_ = register_module("head_g", head());
    fuse_ = register_module("fuse", nn::Conv2d(nn::Conv2dOptions(3, 1, 3).padding(1)));
  }
}

PredictionSet FusionDecoderImpl::forward(const RefinedFeature& r_a, const RefinedFeature& r_g,
                                         std::array<int64_t, 2> input_size) {
  require(!single_stream_, ErrorKind::kContract, "two-stream decode on a single-stream decoder");
  require(r_a.r.size(1) == refined_channels_ && r_g.r.size(1) == refined_channels_,
          ErrorKind::kContract,
          "decoder expects " + std::to_string(refined_channels_) + " refined channels");
  auto la = head_a_(aspp_a_(r_a.r));
  auto lg = head_g_(aspp_g_(r_g.r));
  auto fused = torch::cat({attn_a_(r_a.r), attn_g_(r_g.r)}, 1);
  auto lf = head_f_(aspp_f_(fused));
  auto lp = fuse_(torch::cat({la, lg, lf}, 1));

  PredictionSet out;
  out.logit_a = upsample_logits(la, input_size);
  out.logit_g = upsample_logits(lg, input_size);
  out.logit_f = upsample_logits(lf, input_size);
  out.logit_final = upsample_logits(lp, input_size);
  return out;
}

PredictionSet FusionDecoderImpl::forward_single(const torch::Tensor& r,
                                                std::array<int64_t, 2> input_size) {
  require(single_stream_, ErrorKind::kContract, "single-stream decode on a two-stream decoder");
  require(r.size(1) == refined_channels_, ErrorKind::kContract,
          "decoder expects " + std::to_string(refined_channels_) + " refined channels");
  auto lf = upsample_logits(head_f_(aspp_f_(attn_a_(r))), input_size);
  PredictionSet out;
  out.logit_a = lf;
  out.logit_g = lf;
  out.logit_f = lf;
  out.logit_final = lf;
  return out;
}

}  // namespace cmi
