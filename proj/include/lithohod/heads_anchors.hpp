#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lithohod/backbone.hpp"
#include "lithohod/hotspot_oracle.hpp"

namespace lithohod {

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

struct AnchorConfig {
  std::array<double, 3> base_sizes{32, 64, 128};  // P3, P4, P5
  std::vector<double> scales{0.25, 0.5, 1.0, 2.0};
  std::vector<double> ratios{0.5, 1.0, 2.0};  // width / height

  int per_location() const { return static_cast<int>(scales.size() * ratios.size()); }
};

struct AnchorBox {
  double x1, y1, x2, y2;
};

/// Anchors of all three levels; within a level the order is (y, x, ratio, scale).
struct AnchorSet {
  std::array<std::vector<AnchorBox>, 3> levels;
  std::array<int, 3> strides{8, 16, 32};
  int per_location = 0;

  std::size_t size() const { return levels[0].size() + levels[1].size() + levels[2].size(); }

  std::vector<AnchorBox> flat() const {
    std::vector<AnchorBox> all;
    all.reserve(size());
    for (const auto& l : levels) all.insert(all.end(), l.begin(), l.end());
    return all;
  }

  torch::Tensor tensor(torch::Dtype dtype = torch::kFloat32) const {
    const auto all = flat();
    auto t = torch::empty({static_cast<int64_t>(all.size()), 4}, torch::kFloat64);
    auto acc = t.accessor<double, 2>();
    for (std::size_t i = 0; i < all.size(); ++i) {
      acc[i][0] = all[i].x1;
      acc[i][1] = all[i].y1;
      acc[i][2] = all[i].x2;
      acc[i][3] = all[i].y2;
    }
    return t.to(dtype);
  }

  /// Pyramid level (3, 4 or 5) of the flat anchor index.
  int level_of(std::size_t index) const {
    if (index < levels[0].size()) return 3;
    if (index < levels[0].size() + levels[1].size()) return 4;
    return 5;
  }
};

inline AnchorSet generate_anchors(int input_h, int input_w, const AnchorConfig& cfg = {}) {
  require_stride_divisible(input_h, input_w, "generate_anchors");
  AnchorSet set;
  set.per_location = cfg.per_location();
  for (int l = 0; l < 3; ++l) {
    const int stride = set.strides[l];
    const int gh = input_h / stride, gw = input_w / stride;
    auto& out = set.levels[l];
    out.reserve(static_cast<std::size_t>(gh) * gw * set.per_location);
    for (int y = 0; y < gh; ++y) {
      for (int x = 0; x < gw; ++x) {
        const double cx = (x + 0.5) * stride;
        const double cy = (y + 0.5) * stride;
        for (const double r : cfg.ratios) {
          for (const double s : cfg.scales) {
            const double side = s * cfg.base_sizes[l];
            const double aw = side * std::sqrt(r);
            const double ah = side / std::sqrt(r);
            out.push_back({cx - aw / 2, cy - ah / 2, cx + aw / 2, cy + ah / 2});
          }
        }
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Box parameterization (center offsets scaled by anchor size, log size ratios)
// ---------------------------------------------------------------------------

inline constexpr double kMaxLogRatio = 4.135166556742356;  // log(1000 / 16)

/// Raw deltas [N,4] of `boxes` relative to `anchors`, both [N,4] x1y1x2y2.
inline torch::Tensor encode_boxes(const torch::Tensor& anchors, const torch::Tensor& boxes) {
  auto aw = anchors.select(1, 2) - anchors.select(1, 0);
  auto ah = anchors.select(1, 3) - anchors.select(1, 1);
  auto ax = anchors.select(1, 0) + 0.5 * aw;
  auto ay = anchors.select(1, 1) + 0.5 * ah;
  auto bw = boxes.select(1, 2) - boxes.select(1, 0);
  auto bh = boxes.select(1, 3) - boxes.select(1, 1);
  auto bx = boxes.select(1, 0) + 0.5 * bw;
  auto by = boxes.select(1, 1) + 0.5 * bh;
  return torch::stack({(bx - ax) / aw, (by - ay) / ah, torch::log(bw / aw), torch::log(bh / ah)}, 1);
}

/// Inverse of encode_boxes; differentiable, no clipping.
inline torch::Tensor decode_deltas(const torch::Tensor& anchors, const torch::Tensor& deltas) {
  auto aw = anchors.select(1, 2) - anchors.select(1, 0);
  auto ah = anchors.select(1, 3) - anchors.select(1, 1);
  auto ax = anchors.select(1, 0) + 0.5 * aw;
  auto ay = anchors.select(1, 1) + 0.5 * ah;
  auto cx = ax + deltas.select(1, 0) * aw;
  auto cy = ay + deltas.select(1, 1) * ah;
  auto w = aw * torch::exp(deltas.select(1, 2).clamp_max(kMaxLogRatio));
  auto h = ah * torch::exp(deltas.select(1, 3).clamp_max(kMaxLogRatio));
  return torch::stack({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h}, 1);
}

/// Decodes detector deltas and clips the boxes to the image.
inline torch::Tensor decode_boxes(const torch::Tensor& anchors, const torch::Tensor& deltas, int64_t image_h,
                                  int64_t image_w) {
  if (anchors.sizes() != deltas.sizes() || deltas.dim() != 2 || deltas.size(1) != 4) {
    throw std::invalid_argument("decode_boxes: anchors and deltas must both be [N,4]");
  }
  if (!torch::isfinite(deltas).all().item<bool>()) {
    throw std::invalid_argument("decode_boxes: non-finite deltas");
  }
  auto b = decode_deltas(anchors, deltas);
  return torch::stack({b.select(1, 0).clamp(0, image_w), b.select(1, 1).clamp(0, image_h),
                       b.select(1, 2).clamp(0, image_w), b.select(1, 3).clamp(0, image_h)},
                      1);
}

/// Regression targets are divided by these before the smooth-L1 loss.
inline const std::array<double, 4> kDeltaStd{0.1, 0.1, 0.2, 0.2};

inline torch::Tensor delta_std(const torch::TensorOptions& opts) {
  return torch::tensor({kDeltaStd[0], kDeltaStd[1], kDeltaStd[2], kDeltaStd[3]}, opts);
}

// ---------------------------------------------------------------------------
// Subnets
// ---------------------------------------------------------------------------

/// Four 3x3 conv+ReLU stages and a final 3x3 conv with `outputs` maps per anchor.
class HeadTrunkImpl : public nn::Module {
 public:
  HeadTrunkImpl(int64_t channels, int64_t anchors, int64_t outputs) : anchors_(anchors), outputs_(outputs) {
    for (int i = 0; i < 4; ++i) {
      auto c = nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1));
      nn::init::normal_(c->weight, 0.0, 0.01);
      nn::init::zeros_(c->bias);
      trunk->push_back(register_module("conv" + std::to_string(i + 1), c));
      trunk->push_back(nn::ReLU());
    }
    final_conv = register_module("final", nn::Conv2d(nn::Conv2dOptions(channels, anchors * outputs, 3).padding(1)));
    nn::init::normal_(final_conv->weight, 0.0, 0.01);
    nn::init::zeros_(final_conv->bias);
  }

  /// Raw per-anchor outputs as [B, H*W*A, outputs] and the spatial map [B, A*outputs, H, W].
  torch::Tensor forward(const torch::Tensor& x) {
    auto y = final_conv(trunk->forward(x));
    return y.permute({0, 2, 3, 1}).reshape({y.size(0), -1, outputs_});
  }

  nn::Sequential trunk;
  nn::Conv2d final_conv{nullptr};

 private:
  int64_t anchors_;
  int64_t outputs_;
};
TORCH_MODULE(HeadTrunk);

inline constexpr double kPriorProbability = 0.01;

/// Per-anchor, per-class independent sigmoid probabilities.
class ClassificationHeadImpl : public nn::Module {
 public:
  ClassificationHeadImpl(int64_t channels, int64_t anchors, int64_t classes) {
    net = register_module("net", HeadTrunk(channels, anchors, classes));
    nn::init::constant_(net->final_conv->bias, -std::log((1.0 - kPriorProbability) / kPriorProbability));
  }

  torch::Tensor logits(const torch::Tensor& x) { return net(x); }
  torch::Tensor forward(const torch::Tensor& x) { return torch::sigmoid(net(x)); }

  HeadTrunk net{nullptr};
};
TORCH_MODULE(ClassificationHead);

/// Per-anchor unactivated 4-vectors (normalized deltas).
class RegressionHeadImpl : public nn::Module {
 public:
  RegressionHeadImpl(int64_t channels, int64_t anchors) {
    net = register_module("net", HeadTrunk(channels, anchors, 4));
  }
  torch::Tensor forward(const torch::Tensor& x) { return net(x); }

  HeadTrunk net{nullptr};
};
TORCH_MODULE(RegressionHead);

// ---------------------------------------------------------------------------
// Detections and NMS
// ---------------------------------------------------------------------------

struct Detection {
  HotspotBox box;  // class_id and score live in the box
  int level = 3;
  std::string clip_id;
};

/// Greedy per-class suppression in descending score order (stable for equal
/// scores). Detections under `score_floor` are dropped first.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold, double score_floor) {
  std::erase_if(dets, [&](const Detection& d) { return d.box.score < score_floor; });
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.box.score > b.box.score; });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    const bool suppressed = std::ranges::any_of(kept, [&](const Detection& k) {
      return k.box.class_id == d.box.class_id && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace lithohod
