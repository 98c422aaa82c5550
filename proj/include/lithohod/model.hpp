#pragma once

#include <torch/torch.h>

#include <array>
#include <string>
#include <vector>

#include "lithohod/backbone.hpp"
#include "lithohod/cmf_fusion.hpp"
#include "lithohod/heads_anchors.hpp"

namespace lithohod {

struct ModelOptions {
  BackboneOptions backbone;
  int64_t pyramid_inner = 16;
  int64_t cross_inner = 32;
  int64_t num_classes = kNumHotspotClasses;
  AnchorConfig anchors;
  bool detector_only = false;
};

/// Per-anchor outputs over all levels, in AnchorSet flat order.
struct HeadOutputs {
  torch::Tensor cls_logits;  // [B, N, K]
  torch::Tensor deltas;      // [B, N, 4], normalized
  torch::Tensor probs() const { return torch::sigmoid(cls_logits); }
};

/// Backbone + pyramid, one fusion block per level, shared heads.
class HotspotDetectorImpl : public nn::Module {
 public:
  explicit HotspotDetectorImpl(const ModelOptions& o) : opt_(o) {
    backbone = register_module("backbone", Backbone(o.backbone));
    const FusionOptions fo{3, o.backbone.pyramid_channels, o.pyramid_inner, o.cross_inner};
    for (int l = 0; l < 3; ++l) fusion[l] = register_module("cmf" + std::to_string(l + 3), Cmf(fo));
    const int64_t a = o.anchors.per_location();
    classifier = register_module("classifier", ClassificationHead(o.backbone.pyramid_channels, a, o.num_classes));
    regressor = register_module("regressor", RegressionHead(o.backbone.pyramid_channels, a));
  }

  /// Fused (or, for detector_only, self-attended) features of P3..P5.
  std::array<torch::Tensor, 3> features(const torch::Tensor& image, const torch::Tensor& deformation) {
    const auto pyr = backbone(image);
    std::array<torch::Tensor, 3> out;
    for (int l = 0; l < 3; ++l) {
      out[l] = opt_.detector_only ? fusion[l]->forward_detector_only(pyr.level(l + 3))
                                  : fusion[l](deformation, pyr.level(l + 3));
    }
    return out;
  }

  /// image [B,1,S,S], deformation [B,3,D,D] with D divisible by each level size.
  HeadOutputs forward(const torch::Tensor& image, const torch::Tensor& deformation) {
    const auto f = features(image, deformation);
    std::vector<torch::Tensor> cls, reg;
    for (const auto& x : f) {
      cls.push_back(classifier->logits(x));
      reg.push_back(regressor(x));
    }
    return {torch::cat(cls, 1), torch::cat(reg, 1)};
  }

  const ModelOptions& options() const { return opt_; }

  Backbone backbone{nullptr};
  std::array<Cmf, 3> fusion{Cmf{nullptr}, Cmf{nullptr}, Cmf{nullptr}};
  ClassificationHead classifier{nullptr};
  RegressionHead regressor{nullptr};

 private:
  ModelOptions opt_;
};
TORCH_MODULE(HotspotDetector);

struct PostprocessOptions {
  double nms_iou = 0.5;
  double score_floor = 0.05;
  int max_detections = 100;
  int pre_nms_top_k = 1000;
};

/// Decodes one image's outputs into scored detections.
inline std::vector<Detection> postprocess(const torch::Tensor& cls_logits, const torch::Tensor& deltas,
                                          const AnchorSet& anchors, const torch::Tensor& anchor_boxes,
                                          int64_t image_h, int64_t image_w, const std::string& clip_id,
                                          const PostprocessOptions& pp = {}) {
  torch::NoGradGuard ng;
  auto probs = torch::sigmoid(cls_logits.to(torch::kFloat64)).flatten();  // [N*K]
  const int64_t k = cls_logits.size(1);
  auto keep = (probs >= pp.score_floor).nonzero().squeeze(1);
  if (keep.numel() == 0) return {};
  auto scores = probs.index_select(0, keep);
  if (keep.numel() > pp.pre_nms_top_k) {
    auto top = std::get<1>(scores.topk(pp.pre_nms_top_k));
    keep = keep.index_select(0, top);
    scores = scores.index_select(0, top);
  }
  auto anchor_idx = keep.div(k, "floor");
  auto cls = keep.remainder(k);
  auto raw = deltas.to(torch::kFloat64).index_select(0, anchor_idx) * delta_std(torch::dtype(torch::kFloat64));
  auto boxes = decode_boxes(anchor_boxes.to(torch::kFloat64).index_select(0, anchor_idx), raw, image_h, image_w);

  auto b = boxes.accessor<double, 2>();
  auto s = scores.accessor<double, 1>();
  auto c = cls.accessor<int64_t, 1>();
  auto ai = anchor_idx.accessor<int64_t, 1>();
  std::vector<Detection> dets;
  for (int64_t i = 0; i < keep.size(0); ++i) {
    if (b[i][2] <= b[i][0] || b[i][3] <= b[i][1]) continue;
    Detection d;
    d.box = {b[i][0], b[i][1], b[i][2], b[i][3], static_cast<int>(c[i]), s[i]};
    d.level = anchors.level_of(static_cast<std::size_t>(ai[i]));
    d.clip_id = clip_id;
    dets.push_back(std::move(d));
  }
  auto kept = nms(std::move(dets), pp.nms_iou, pp.score_floor);
  if (static_cast<int>(kept.size()) > pp.max_detections) kept.resize(pp.max_detections);
  return kept;
}

}  // namespace lithohod
