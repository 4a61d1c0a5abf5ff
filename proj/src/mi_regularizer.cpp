#include "cmi/mi_regularizer.hpp"

#include "cmi/error.hpp"
#include "cmi/information.hpp"

namespace cmi {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

const char* to_string(Stream s) {
  return s == Stream::kAppearance ? "appearance" : "geometric";
}

EmbedHeadImpl::EmbedHeadImpl(int64_t reduced_channels, int64_t embed_dim, bool simple)
    : simple_(simple) {
  int64_t fc_in = reduced_channels;
  if (!simple_) {
    conv_ = register_module(
        "conv", nn::Conv2d(nn::Conv2dOptions(reduced_channels, 4 * reduced_channels, 3).padding(1)));
    fc_in = 4 * reduced_channels;
  }
  fc_ = register_module("fc", nn::Linear(fc_in, embed_dim));
}

torch::Tensor EmbedHeadImpl::forward(const torch::Tensor& e) {
  auto x = simple_ ? e : torch::relu(conv_(e));
  x = x.mean({2, 3});
  return fc_(x);
}

LatentEmbedding embed_stage(const torch::Tensor& e, EmbedHead& head, int stage, Stream stream) {
  LatentEmbedding z;
  z.raw = head->forward(e);
  if (!torch::isfinite(z.raw).all().item<bool>()) {
    fail(ErrorKind::kNumeric, std::string("non-finite embedding at stage ") +
                                  std::to_string(stage) + " (" + to_string(stream) + " stream)");
  }
  z.dist = torch::softmax(z.raw, -1);
  z.stage = stage;
  z.stream = stream;
  return z;
}

namespace {

torch::Tensor safe_log(const torch::Tensor& p) {
  return torch::log(p.clamp(info::kProbFloor, 1.0));
}

void check_pair(const torch::Tensor& p, const torch::Tensor& q, const char* what) {
  require(p.sizes() == q.sizes(), ErrorKind::kContract,
          std::string(what) + ": distributions differ in shape (K mismatch)");
}

}  // namespace

torch::Tensor entropy(const torch::Tensor& p) { return -(p * safe_log(p)).sum(-1); }

torch::Tensor cross_entropy(const torch::Tensor& p, const torch::Tensor& q) {
  check_pair(p, q, "cross_entropy");
  return -(p * safe_log(q)).sum(-1);
}

torch::Tensor kl_divergence(const torch::Tensor& p, const torch::Tensor& q) {
  return cross_entropy(p, q) - entropy(p);
}

torch::Tensor mi_loss(const torch::Tensor& dist_a, const torch::Tensor& dist_g) {
  check_pair(dist_a, dist_g, "mi_loss");
  auto cross = cross_entropy(dist_a, dist_g) + cross_entropy(dist_g, dist_a);
  auto kl = kl_divergence(dist_a, dist_g) + kl_divergence(dist_g, dist_a);
  return (cross - kl).mean();
}

torch::Tensor mi_loss(const LatentEmbedding& za, const LatentEmbedding& zg) {
  return mi_loss(za.dist, zg.dist);
}

torch::Tensor mi_loss_identity(const torch::Tensor& dist_a, const torch::Tensor& dist_g) {
  check_pair(dist_a, dist_g, "mi_loss_identity");
  return (entropy(dist_a) + entropy(dist_g)).mean();
}

torch::Tensor total_mi_loss(std::span<const EmbeddingPair> pairs) {
  require(pairs.size() == 4, ErrorKind::kContract,
          "total_mi_loss needs 4 stage pairs, got " + std::to_string(pairs.size()));
  auto total = mi_loss(pairs[0].appearance, pairs[0].geometric);
  for (std::size_t c = 1; c < pairs.size(); ++c) {
    total = total + mi_loss(pairs[c].appearance, pairs[c].geometric);
  }
  return total;
}

torch::Tensor multilevel_feature(const FeaturePyramid& pyramid, int64_t level) {
  require(level >= 1 && level <= 4, ErrorKind::kContract, "fusion level must be in 1..4");
  const auto& target = pyramid[static_cast<std::size_t>(level - 1)];
  const std::vector<int64_t> size{target.size(2), target.size(3)};
  std::vector<torch::Tensor> parts;
  for (const auto& e : pyramid.levels) {
    if (e.size(2) == size[0] && e.size(3) == size[1]) {
      parts.push_back(e);
    } else {
      parts.push_back(F::interpolate(
          e, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false)));
    }
    if (parts.back().size(2) != size[0] || parts.back().size(3) != size[1]) {
      fail(ErrorKind::kContract, "multilevel_feature: resolution mismatch after resampling");
    }
  }
  return torch::cat(parts, 1);
}

torch::Tensor tile_embedding(const torch::Tensor& z, int64_t height, int64_t width) {
  return z.unsqueeze(-1).unsqueeze(-1).expand({z.size(0), z.size(1), height, width});
}

std::pair<RefinedFeature, RefinedFeature> fuse_stage4(const FeaturePyramid& e_a,
                                                      const FeaturePyramid& e_g,
                                                      const LatentEmbedding& z_a4,
                                                      const LatentEmbedding& z_g4,
                                                      int64_t level) {
  require(z_a4.stage == 4 && z_g4.stage == 4, ErrorKind::kContract,
          "fuse_stage4 expects stage-4 embeddings");
  auto raw_a = multilevel_feature(e_a, level);
  auto raw_g = multilevel_feature(e_g, level);
  const auto h = raw_a.size(2);
  const auto w = raw_a.size(3);
  RefinedFeature r_a{torch::cat({raw_a, tile_embedding(z_g4.raw, h, w)}, 1), Stream::kAppearance};
  RefinedFeature r_g{torch::cat({raw_g, tile_embedding(z_a4.raw, h, w)}, 1), Stream::kGeometric};
  return {std::move(r_a), std::move(r_g)};
}

}  // namespace cmi
