#include "cmi/encoder.hpp"

#include <filesystem>
#include <numeric>

#include "cmi/error.hpp"

namespace cmi {

namespace nn = torch::nn;

namespace {

int64_t group_count(int64_t channels) {
  for (int64_t g = 8; g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

nn::Sequential conv_gn_relu(int64_t in, int64_t out, int64_t stride) {
  return nn::Sequential(
      nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)),
      nn::GroupNorm(nn::GroupNormOptions(group_count(out), out)),
      nn::ReLU(nn::ReLUOptions(true)));
}

nn::Sequential tiny_stage(int64_t in, int64_t out) {
  auto s = conv_gn_relu(in, out, 2);
  s->extend(*conv_gn_relu(out, out, 1));
  return s;
}

class BottleneckImpl : public nn::Module {
 public:
  BottleneckImpl(int64_t in, int64_t planes, int64_t stride) {
    const int64_t out = planes * 4;
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, planes, 1).bias(false)));
    bn1_ = register_module("bn1", nn::BatchNorm2d(planes));
    conv2_ = register_module(
        "conv2",
        nn::Conv2d(nn::Conv2dOptions(planes, planes, 3).stride(stride).padding(1).bias(false)));
    bn2_ = register_module("bn2", nn::BatchNorm2d(planes));
    conv3_ = register_module("conv3", nn::Conv2d(nn::Conv2dOptions(planes, out, 1).bias(false)));
    bn3_ = register_module("bn3", nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      downsample_ = register_module(
          "downsample",
          nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                         nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_(conv1_(x)));
    y = torch::relu(bn2_(conv2_(y)));
    y = bn3_(conv3_(y));
    auto identity = downsample_ ? downsample_->forward(x) : x;
    return torch::relu(y + identity);
  }

 private:
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, conv3_{nullptr};
  nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, bn3_{nullptr};
  nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(Bottleneck);

nn::Sequential resnet_stage(int64_t in, int64_t planes, int64_t blocks, int64_t stride) {
  nn::Sequential s;
  s->push_back(Bottleneck(in, planes, stride));
  for (int64_t i = 1; i < blocks; ++i) s->push_back(Bottleneck(planes * 4, planes, 1));
  return s;
}

}  // namespace

uint64_t sub_seed(int64_t seed, uint64_t tag) {
  // splitmix64 finaliser over (seed, tag)
  uint64_t z = static_cast<uint64_t>(seed) + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return (z ^ (z >> 31)) & 0x7FFFFFFFFFFFFFFFULL;
}

SaliencyEncoderImpl::SaliencyEncoderImpl(const ModelConfig& cfg, int64_t in_channels)
    : in_channels_(in_channels) {
  nn::ModuleList backbone;
  std::array<int64_t, 4> widths = cfg.stage_channels;
  if (cfg.backbone == Backbone::kTiny) {
    backbone->push_back(conv_gn_relu(in_channels, cfg.stem_channels, 2));
    int64_t prev = cfg.stem_channels;
    for (auto w : widths) {
      backbone->push_back(tiny_stage(prev, w));
      prev = w;
    }
  } else {
    backbone->push_back(nn::Sequential(
        nn::Conv2d(nn::Conv2dOptions(in_channels, 64, 7).stride(2).padding(3).bias(false)),
        nn::BatchNorm2d(64), nn::ReLU(nn::ReLUOptions(true)),
        nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
    const std::array<int64_t, 4> blocks{3, 4, 6, 3};
    const std::array<int64_t, 4> planes{64, 128, 256, 512};
    int64_t prev = 64;
    for (std::size_t i = 0; i < 4; ++i) {
      backbone->push_back(resnet_stage(prev, planes[i], blocks[i], i == 0 ? 1 : 2));
      prev = planes[i] * 4;
    }
  }
  backbone_ = register_module("backbone", backbone);

  nn::ModuleList reductions;
  for (auto w : widths) {
    reductions->push_back(nn::Conv2d(
        nn::Conv2dOptions(w, cfg.reduced_channels, 3).stride(1).padding(1)));
  }
  reductions_ = register_module("reductions", reductions);
}

std::array<torch::Tensor, 4> SaliencyEncoderImpl::backbone_forward(const torch::Tensor& x) {
  std::array<torch::Tensor, 4> stages;
  auto y = backbone_->ptr<nn::SequentialImpl>(0)->forward(x);
  for (std::size_t i = 0; i < 4; ++i) {
    y = backbone_->ptr<nn::SequentialImpl>(i + 1)->forward(y);
    stages[i] = y;
  }
  return stages;
}

FeaturePyramid SaliencyEncoderImpl::forward(const torch::Tensor& x) {
  auto stages = backbone_forward(x);
  FeaturePyramid out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = torch::relu(reductions_->ptr<nn::Conv2dImpl>(i)->forward(stages[i]));
  }
  return out;
}

FeaturePyramid encode(const torch::Tensor& input, SaliencyEncoder& encoder) {
  require(input.dim() == 4, ErrorKind::kContract, "encode expects a [B, C, H, W] tensor");
  require(input.size(1) == encoder->in_channels(), ErrorKind::kContract,
          "encode: expected " + std::to_string(encoder->in_channels()) + " input channels, got " +
              std::to_string(input.size(1)));
  if (input.size(2) % 32 != 0 || input.size(3) % 32 != 0) {
    fail(ErrorKind::kConfig, "encode: spatial size " + std::to_string(input.size(2)) + "x" +
                                 std::to_string(input.size(3)) + " is not divisible by 32");
  }
  if (!torch::isfinite(input).all().item<bool>()) {
    fail(ErrorKind::kNumeric, "encode: input contains non-finite values");
  }
  return encoder->forward(input);
}

std::pair<SaliencyEncoder, SaliencyEncoder> make_dual_encoders(const ModelConfig& cfg) {
  cfg.validate();
  torch::manual_seed(sub_seed(cfg.seed, 1));
  SaliencyEncoder appearance(cfg);
  torch::manual_seed(sub_seed(cfg.seed, 2));
  SaliencyEncoder geometric(cfg);
  if (!cfg.pretrained_path.empty()) {
    if (!std::filesystem::exists(cfg.pretrained_path)) {
      fail(ErrorKind::kConfig, "pretrained backbone weights not found at '" +
                                   cfg.pretrained_path +
                                   "'; clear pretrained_path or use backbone=tiny");
    }
    try {
      torch::load(appearance->backbone(), cfg.pretrained_path);
      torch::load(geometric->backbone(), cfg.pretrained_path);
    } catch (const c10::Error& e) {
      fail(ErrorKind::kConfig, "cannot load pretrained weights '" + cfg.pretrained_path +
                                   "' for backbone " + to_string(cfg.backbone) + ": " +
                                   e.what_without_backtrace());
    }
  }
  return {std::move(appearance), std::move(geometric)};
}

torch::Tensor replicate_depth(const torch::Tensor& depth) {
  require(depth.dim() == 4 && depth.size(1) == 1, ErrorKind::kContract,
          "replicate_depth expects [B, 1, H, W]");
  return depth.expand({depth.size(0), 3, depth.size(2), depth.size(3)}).contiguous();
}

}  // namespace cmi
