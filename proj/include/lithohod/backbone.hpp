#pragma once

#include <torch/torch.h>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>

namespace lithohod {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

struct BackboneOptions {
  int depth = 34;          // 18 / 34: basic blocks, 50: bottlenecks
  int base_width = 64;     // stem width; stage widths are 1x, 2x, 4x, 8x this
  int pyramid_channels = 256;
  int attention_reduction = 16;
  bool channel_attention = true;
};

inline void require_stride_divisible(int64_t h, int64_t w, const char* what) {
  if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0) {
    throw std::invalid_argument(std::string(what) + ": input dims must be positive multiples of 32");
  }
}

inline nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(bias));
}

struct BasicBlockImpl : nn::Module {
  static constexpr int kExpansion = 1;

  BasicBlockImpl(int64_t in, int64_t planes, int64_t stride) {
    conv1 = register_module("conv1", conv(in, planes, 3, stride));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    if (stride != 1 || in != planes) {
      down_conv = register_module("down_conv", conv(in, planes, 1, stride));
      down_bn = register_module("down_bn", nn::BatchNorm2d(planes));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1(conv1(x)));
    y = bn2(conv2(y));
    auto skip = down_conv ? down_bn(down_conv(x)) : x;
    return torch::relu(y + skip);
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr}, down_conv{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(BasicBlock);

struct BottleneckImpl : nn::Module {
  static constexpr int kExpansion = 4;

  BottleneckImpl(int64_t in, int64_t planes, int64_t stride) {
    const int64_t out = planes * kExpansion;
    conv1 = register_module("conv1", conv(in, planes, 1));
    bn1 = register_module("bn1", nn::BatchNorm2d(planes));
    conv2 = register_module("conv2", conv(planes, planes, 3, stride));
    bn2 = register_module("bn2", nn::BatchNorm2d(planes));
    conv3 = register_module("conv3", conv(planes, out, 1));
    bn3 = register_module("bn3", nn::BatchNorm2d(out));
    if (stride != 1 || in != out) {
      down_conv = register_module("down_conv", conv(in, out, 1, stride));
      down_bn = register_module("down_bn", nn::BatchNorm2d(out));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1(conv1(x)));
    y = torch::relu(bn2(conv2(y)));
    y = bn3(conv3(y));
    auto skip = down_conv ? down_bn(down_conv(x)) : x;
    return torch::relu(y + skip);
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr}, down_conv{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr}, down_bn{nullptr};
};
TORCH_MODULE(Bottleneck);

/// C3, C4, C5 stage outputs (strides 8, 16, 32).
struct StageFeatures {
  torch::Tensor c3, c4, c5;
};

/// Residual feature extractor with a single-channel stem.
class ResNetImpl : public nn::Module {
 public:
  ResNetImpl(int depth, int base_width) : depth_(depth) {
    std::array<int, 4> blocks{};
    switch (depth) {
      case 18: blocks = {2, 2, 2, 2}; break;
      case 34:
      case 50: blocks = {3, 4, 6, 3}; break;
      default: throw std::invalid_argument("ResNet: depth must be 18, 34 or 50");
    }
    const int64_t w = base_width;
    stem_conv_ = register_module("stem_conv", conv(1, w, 7, 2));
    stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(w));
    int64_t in = w;
    for (int s = 0; s < 4; ++s) {
      nn::Sequential stage;
      const int64_t planes = w << s;
      for (int b = 0; b < blocks[s]; ++b) {
        const int64_t stride = (b == 0 && s > 0) ? 2 : 1;
        if (depth == 50) {
          stage->push_back(Bottleneck(in, planes, stride));
          in = planes * BottleneckImpl::kExpansion;
        } else {
          stage->push_back(BasicBlock(in, planes, stride));
          in = planes;
        }
      }
      stages_[s] = register_module("layer" + std::to_string(s + 1), stage);
    }
    const int64_t expansion = depth == 50 ? 4 : 1;
    channels_ = {2 * w * expansion, 4 * w * expansion, 8 * w * expansion};
    for (auto& m : modules(/*include_self=*/false)) {
      if (auto* c = m->as<nn::Conv2d>()) {
        nn::init::kaiming_normal_(c->weight, 0.0, torch::kFanOut, torch::kReLU);
      }
    }
  }

  StageFeatures forward(const torch::Tensor& x) {
    require_stride_divisible(x.size(-2), x.size(-1), "extract_features");
    auto y = torch::relu(stem_bn_(stem_conv_(x)));
    y = F::max_pool2d(y, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
    y = stages_[0]->forward(y);
    StageFeatures f;
    f.c3 = stages_[1]->forward(y);
    f.c4 = stages_[2]->forward(f.c3);
    f.c5 = stages_[3]->forward(f.c4);
    return f;
  }

  /// Channel counts of C3, C4, C5.
  std::array<int64_t, 3> out_channels() const { return channels_; }
  int depth() const { return depth_; }

 private:
  int depth_;
  nn::Conv2d stem_conv_{nullptr};
  nn::BatchNorm2d stem_bn_{nullptr};
  std::array<nn::Sequential, 4> stages_;
  std::array<int64_t, 3> channels_{};
};
TORCH_MODULE(ResNet);

/// Channel gate: sigmoid(MLP(avgpool) + MLP(maxpool)) with a shared
/// two-layer 1x1 bottleneck.
class ChannelAttentionImpl : public nn::Module {
 public:
  ChannelAttentionImpl(int64_t channels, int64_t reduction) {
    if (reduction <= 0 || channels % reduction != 0) {
      throw std::invalid_argument("ChannelAttention: channels must be divisible by reduction");
    }
    fc1 = register_module("fc1", nn::Conv2d(nn::Conv2dOptions(channels, channels / reduction, 1)));
    fc2 = register_module("fc2", nn::Conv2d(nn::Conv2dOptions(channels / reduction, channels, 1)));
  }

  /// Gates in (0,1), shape [B, C, 1, 1].
  torch::Tensor gates(const torch::Tensor& x) {
    if (gate_override) return torch::full({x.size(0), x.size(1), 1, 1}, *gate_override, x.options());
    auto avg = F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions(1));
    auto mx = F::adaptive_max_pool2d(x, F::AdaptiveMaxPool2dFuncOptions(1));
    return torch::sigmoid(mlp(avg) + mlp(mx));
  }

  torch::Tensor forward(const torch::Tensor& x) { return x * gates(x); }

  torch::Tensor mlp(const torch::Tensor& d) { return fc2(torch::relu(fc1(d))); }

  /// Test hook: replaces the learned gate with a constant.
  std::optional<double> gate_override;

  nn::Conv2d fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ChannelAttention);

/// P3, P4, P5 at strides 8, 16, 32.
struct FeaturePyramid {
  torch::Tensor p3, p4, p5;
  torch::Tensor level(int l) const {
    switch (l) {
      case 3: return p3;
      case 4: return p4;
      case 5: return p5;
      default: throw std::out_of_range("FeaturePyramid: level must be 3, 4 or 5");
    }
  }
};

inline torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{x.size(2) * 2, x.size(3) * 2})
                               .mode(torch::kNearest));
}

/// Top-down pyramid over C3..C5 with 1x1 laterals and 3x3 smoothing; no P6/P7.
class PyramidImpl : public nn::Module {
 public:
  PyramidImpl(std::array<int64_t, 3> in_channels, int64_t channels) {
    for (int i = 0; i < 3; ++i) {
      lateral[i] = register_module("lateral" + std::to_string(i + 3),
                                   nn::Conv2d(nn::Conv2dOptions(in_channels[i], channels, 1)));
      smooth[i] = register_module("smooth" + std::to_string(i + 3),
                                  nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
    }
  }

  FeaturePyramid forward(const torch::Tensor& c3, const torch::Tensor& c4, const torch::Tensor& c5) {
    auto m5 = lateral[2](c5);
    auto m4 = merge(lateral[1](c4), m5);
    auto m3 = merge(lateral[0](c3), m4);
    return {smooth[0](m3), smooth[1](m4), smooth[2](m5)};
  }

  std::array<nn::Conv2d, 3> lateral{nn::Conv2d{nullptr}, nn::Conv2d{nullptr}, nn::Conv2d{nullptr}};
  std::array<nn::Conv2d, 3> smooth{nn::Conv2d{nullptr}, nn::Conv2d{nullptr}, nn::Conv2d{nullptr}};

 private:
  static torch::Tensor merge(const torch::Tensor& lat, const torch::Tensor& coarser) {
    auto up = upsample2x(coarser);
    if (up.sizes() != lat.sizes()) {
      throw std::invalid_argument("build_pyramid: lateral and upsampled shapes differ");
    }
    return lat + up;
  }
};
TORCH_MODULE(Pyramid);

/// ResNet stages, channel attention on C5, and the P3..P5 pyramid.
class BackboneImpl : public nn::Module {
 public:
  explicit BackboneImpl(const BackboneOptions& opt) : opt_(opt) {
    resnet = register_module("resnet", ResNet(opt.depth, opt.base_width));
    const auto ch = resnet->out_channels();
    if (opt.channel_attention) {
      attention = register_module("attention", ChannelAttention(ch[2], opt.attention_reduction));
    }
    pyramid = register_module("pyramid", Pyramid(ch, opt.pyramid_channels));
  }

  FeaturePyramid forward(const torch::Tensor& image) {
    auto f = resnet(image);
    auto c5 = attention ? attention(f.c5) : f.c5;
    return pyramid(f.c3, f.c4, c5);
  }

  const BackboneOptions& options() const { return opt_; }

  ResNet resnet{nullptr};
  ChannelAttention attention{nullptr};
  Pyramid pyramid{nullptr};

 private:
  BackboneOptions opt_;
};
TORCH_MODULE(Backbone);

}  // namespace lithohod
