#pragma once

#include <torch/torch.h>

#include <stdexcept>
#include <string>

namespace lithohod {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

inline nn::Conv2d pointwise(int64_t in, int64_t out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 1));
}

/// Attention weights beta[b, i, j]: the share of source location i in output
/// location j. Normalized over i, so every column sums to one.
///   query: [B, C, N] evaluated at source locations i
///   key:   [B, C, N] evaluated at output locations j
inline torch::Tensor attention_weights(const torch::Tensor& query, const torch::Tensor& key) {
  auto scores = torch::bmm(query.transpose(1, 2), key);  // s[b, i, j] = q_i . k_j
  return torch::softmax(scores, /*dim=*/1);
}

/// Σ_i beta[b,i,j] v[b,:,i] -> [B, C, N]
inline torch::Tensor attend(const torch::Tensor& value, const torch::Tensor& beta) {
  return torch::bmm(value, beta);
}

/// Single-head self attention over spatial positions with a learnable
/// residual gate: y = xi * Wm(attended V) + residual(x).
class SelfAttentionImpl : public nn::Module {
 public:
  SelfAttentionImpl(int64_t in_channels, int64_t inner_channels, int64_t out_channels) {
    wq = register_module("wq", pointwise(in_channels, inner_channels));
    wk = register_module("wk", pointwise(in_channels, inner_channels));
    wv = register_module("wv", pointwise(in_channels, inner_channels));
    wm = register_module("wm", pointwise(inner_channels, out_channels));
    if (in_channels != out_channels) residual = register_module("residual", pointwise(in_channels, out_channels));
    xi = register_parameter("xi", torch::ones({1}));
  }

  torch::Tensor weights(const torch::Tensor& x) {
    return attention_weights(wq(x).flatten(2), wk(x).flatten(2));
  }

  torch::Tensor forward(const torch::Tensor& x) {
    const auto b = x.size(0), h = x.size(2), w = x.size(3);
    auto attended = attend(wv(x).flatten(2), weights(x)).view({b, -1, h, w});
    auto skip = residual ? residual(x) : x;
    return xi * wm(attended) + skip;
  }

  nn::Conv2d wq{nullptr}, wk{nullptr}, wv{nullptr}, wm{nullptr}, residual{nullptr};
  torch::Tensor xi;
};
TORCH_MODULE(SelfAttention);

struct CrossAttentionOptions {
  int64_t guide_channels = 3;     // query input (deformation feature)
  int64_t target_channels = 256;  // key/value input (pyramid feature)
  int64_t inner_channels = 32;
};

/// Cross attention: queries from the deformation feature, keys and values
/// from the pyramid feature, f_XA = xi * M + f_py.
class CrossAttentionImpl : public nn::Module {
 public:
  explicit CrossAttentionImpl(const CrossAttentionOptions& o = {}) {
    wq = register_module("wq", pointwise(o.guide_channels, o.inner_channels));
    wk = register_module("wk", pointwise(o.target_channels, o.inner_channels));
    wv = register_module("wv", pointwise(o.target_channels, o.inner_channels));
    wm = register_module("wm", pointwise(o.inner_channels, o.target_channels));
    xi = register_parameter("xi", torch::ones({1}));
  }

  torch::Tensor weights(const torch::Tensor& guide, const torch::Tensor& target) {
    return attention_weights(wq(guide).flatten(2), wk(target).flatten(2));
  }

  /// The feature mask M = Wm Σ_i beta_{j,i} v_i, [B, C2, H, W].
  torch::Tensor mask(const torch::Tensor& guide, const torch::Tensor& target) {
    const auto b = target.size(0), h = target.size(2), w = target.size(3);
    return wm(attend(wv(target).flatten(2), weights(guide, target)).view({b, -1, h, w}));
  }

  torch::Tensor forward(const torch::Tensor& guide, const torch::Tensor& target) {
    if (guide.size(2) != target.size(2) || guide.size(3) != target.size(3)) {
      throw std::invalid_argument("cross_attention: spatial dims differ");
    }
    return xi * mask(guide, target) + target;
  }

  nn::Conv2d wq{nullptr}, wk{nullptr}, wv{nullptr}, wm{nullptr};
  torch::Tensor xi;
};
TORCH_MODULE(CrossAttention);

/// Average-pools a [B, 3, S, S] deformation tensor to the given size.
inline torch::Tensor pool_deformation(const torch::Tensor& deformation, int64_t h, int64_t w) {
  const auto sh = deformation.size(2), sw = deformation.size(3);
  if (h <= 0 || w <= 0 || sh % h != 0 || sw % w != 0) {
    throw std::invalid_argument("pool_deformation: target dims must divide the map dims");
  }
  if (sh == h && sw == w) return deformation;
  return F::avg_pool2d(deformation, F::AvgPool2dFuncOptions({sh / h, sw / w}));
}

struct FusionOptions {
  int64_t deformation_channels = 3;
  int64_t pyramid_channels = 256;
  int64_t pyramid_inner = 16;  // Q/K/V width of the pyramid self-attention
  int64_t cross_inner = 32;
};

/// One cross-model fusion block for a single pyramid level.
class CmfImpl : public nn::Module {
 public:
  explicit CmfImpl(const FusionOptions& o = {}) {
    deformation_attention = register_module(
        "deformation_attention",
        SelfAttention(o.deformation_channels, o.deformation_channels, o.deformation_channels));
    pyramid_attention = register_module(
        "pyramid_attention", SelfAttention(o.pyramid_channels, o.pyramid_inner, o.pyramid_channels));
    cross = register_module("cross", CrossAttention(CrossAttentionOptions{
                                         o.deformation_channels, o.pyramid_channels, o.cross_inner}));
  }

  /// `deformation` is at simulator resolution; `pyramid_level` is P_l.
  torch::Tensor forward(const torch::Tensor& deformation, const torch::Tensor& pyramid_level) {
    auto de = pool_deformation(deformation, pyramid_level.size(2), pyramid_level.size(3));
    return cross(deformation_attention(de), pyramid_attention(pyramid_level));
  }

  /// Detector-only path: the pyramid self-attention without any fusion.
  torch::Tensor forward_detector_only(const torch::Tensor& pyramid_level) {
    return pyramid_attention(pyramid_level);
  }

  SelfAttention deformation_attention{nullptr};
  SelfAttention pyramid_attention{nullptr};
  CrossAttention cross{nullptr};
};
TORCH_MODULE(Cmf);

}  // namespace lithohod
