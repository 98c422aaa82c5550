#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lithohod/hotspot_oracle.hpp"

namespace lithohod {

inline constexpr int64_t kLabelNegative = -1;
inline constexpr int64_t kLabelIgnored = -2;

struct FocalParams {
  double alpha = 0.25;
  double gamma = 2.0;
  double eps = 1e-7;
};

/// Focal loss over per-anchor, per-class probabilities.
///   probs:  [N, K] in (0,1)
///   labels: [N] int64; a class id for positive anchors, kLabelNegative, or kLabelIgnored
/// Summed over non-ignored elements and divided by max(1, #positive anchors).
inline torch::Tensor focal_loss(const torch::Tensor& probs, const torch::Tensor& labels, const FocalParams& fp = {}) {
  if (probs.dim() != 2 || labels.dim() != 1 || labels.size(0) != probs.size(0)) {
    throw std::invalid_argument("focal_loss: probs must be [N,K] and labels [N]");
  }
  const auto k = probs.size(1);
  auto lbl = labels.to(torch::kLong);
  auto valid = lbl.ne(kLabelIgnored);
  auto positive = lbl.ge(0);
  auto classes = torch::arange(k, lbl.options()).unsqueeze(0);
  auto target = (lbl.unsqueeze(1) == classes).to(probs.dtype());

  auto p = probs.clamp(fp.eps, 1.0 - fp.eps);
  auto p_t = target * p + (1 - target) * (1 - p);
  auto alpha_t = target * fp.alpha + (1 - target) * (1 - fp.alpha);
  auto elem = -alpha_t * torch::pow(1 - p_t, fp.gamma) * torch::log(p_t);
  elem = elem * valid.unsqueeze(1).to(probs.dtype());
  const double num_pos = std::max<double>(1.0, positive.sum().item<int64_t>());
  return elem.sum() / num_pos;
}

/// Per-coordinate Huber loss with transition at beta, averaged over all
/// coordinates of the P rows. Zero for P = 0.
inline torch::Tensor smooth_l1(const torch::Tensor& v, const torch::Tensor& v_gt, double beta = 1.0) {
  if (v.sizes() != v_gt.sizes()) throw std::invalid_argument("smooth_l1: shape mismatch");
  if (v.numel() == 0) return torch::zeros({}, v.options());
  auto d = (v - v_gt).abs();
  auto elem = torch::where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta);
  return elem.mean();
}

/// Row-wise IoU of two [N,4] x1y1x2y2 tensors.
inline torch::Tensor iou(const torch::Tensor& a, const torch::Tensor& b) {
  auto area_a = (a.select(1, 2) - a.select(1, 0)).clamp_min(0) * (a.select(1, 3) - a.select(1, 1)).clamp_min(0);
  auto area_b = (b.select(1, 2) - b.select(1, 0)).clamp_min(0) * (b.select(1, 3) - b.select(1, 1)).clamp_min(0);
  auto iw = (torch::min(a.select(1, 2), b.select(1, 2)) - torch::max(a.select(1, 0), b.select(1, 0))).clamp_min(0);
  auto ih = (torch::min(a.select(1, 3), b.select(1, 3)) - torch::max(a.select(1, 1), b.select(1, 1))).clamp_min(0);
  auto inter = iw * ih;
  auto uni = area_a + area_b - inter;
  auto ok = (area_a > 0) & (area_b > 0);
  return torch::where(ok, inter / torch::where(ok, uni, torch::ones_like(uni)), torch::zeros_like(inter));
}

enum class DiouDenominator { squared, literal };

/// Per-row 1 - IoU + |b - b_gt|^2 / c^2 (c^2 replaced by c under `literal`).
/// Rows whose enclosing box has zero diagonal contribute 0.
inline torch::Tensor diou_terms(const torch::Tensor& box, const torch::Tensor& box_gt,
                                DiouDenominator denom = DiouDenominator::squared) {
  if (box.sizes() != box_gt.sizes() || box.dim() != 2 || box.size(1) != 4) {
    throw std::invalid_argument("diou_loss: boxes must both be [N,4]");
  }
  auto cx = 0.5 * (box.select(1, 0) + box.select(1, 2));
  auto cy = 0.5 * (box.select(1, 1) + box.select(1, 3));
  auto gx = 0.5 * (box_gt.select(1, 0) + box_gt.select(1, 2));
  auto gy = 0.5 * (box_gt.select(1, 1) + box_gt.select(1, 3));
  auto rho2 = (cx - gx).pow(2) + (cy - gy).pow(2);
  auto ew = torch::max(box.select(1, 2), box_gt.select(1, 2)) - torch::min(box.select(1, 0), box_gt.select(1, 0));
  auto eh = torch::max(box.select(1, 3), box_gt.select(1, 3)) - torch::min(box.select(1, 1), box_gt.select(1, 1));
  auto c2 = ew.pow(2) + eh.pow(2);
  auto degenerate = c2 <= 0;
  auto safe_c2 = torch::where(degenerate, torch::ones_like(c2), c2);
  auto c = denom == DiouDenominator::squared ? safe_c2 : safe_c2.sqrt();
  auto l = 1 - iou(box, box_gt) + rho2 / c;
  return torch::where(degenerate, torch::zeros_like(l), l);
}

/// Mean of diou_terms over the P rows; zero for P = 0.
inline torch::Tensor diou_loss(const torch::Tensor& box, const torch::Tensor& box_gt,
                               DiouDenominator denom = DiouDenominator::squared) {
  if (box.numel() == 0) return torch::zeros({}, box.options());
  return diou_terms(box, box_gt, denom).mean();
}

inline double diou_loss(const HotspotBox& a, const HotspotBox& b, DiouDenominator denom = DiouDenominator::squared) {
  auto t = [](const HotspotBox& x) { return torch::tensor({{x.x1, x.y1, x.x2, x.y2}}, torch::kFloat64); };
  return diou_loss(t(a), t(b), denom).item<double>();
}

inline constexpr double kDiouWeight = 0.02;

struct LossBreakdown {
  double focal = 0;
  double box_reg = 0;
  double diou = 0;
  double total = 0;
  int64_t num_positive = 0;
  int64_t num_negative = 0;
};

inline LossBreakdown total_loss(double focal, double box_reg, double diou, double lambda = kDiouWeight) {
  return {focal, box_reg, diou, box_reg + focal + lambda * diou, 0, 0};
}

inline torch::Tensor total_loss(const torch::Tensor& focal, const torch::Tensor& box_reg, const torch::Tensor& diou,
                                double lambda = kDiouWeight) {
  return box_reg + focal + lambda * diou;
}

}  // namespace lithohod
