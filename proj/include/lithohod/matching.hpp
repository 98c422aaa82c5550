#pragma once

#include <cstdint>
#include <vector>

#include "lithohod/heads_anchors.hpp"
#include "lithohod/hotspot_oracle.hpp"

namespace lithohod {

struct MatchThresholds {
  double positive = 0.5;  // strictly above
  double negative = 0.3;  // strictly below
};

inline constexpr int kNegative = -1;
inline constexpr int kIgnored = -2;

/// Per-anchor assignment: a ground-truth index (positive), kNegative or kIgnored.
struct MatchResult {
  std::vector<int> assignment;
  std::vector<double> max_iou;
  std::vector<int> best_gt;  // argmax ground truth per anchor, -1 without ground truth
  std::vector<std::size_t> positives;
  bool used_fallback = false;

  std::size_t num_positive() const { return positives.size(); }
  std::size_t num_negative() const {
    std::size_t n = 0;
    for (int a : assignment) n += a == kNegative;
    return n;
  }
};

inline double anchor_iou(const AnchorBox& a, const HotspotBox& g) {
  return iou(HotspotBox{a.x1, a.y1, a.x2, a.y2, 0, 1.0}, g);
}

/// Positive above `positive`, negative below `negative`, ignored in between.
/// When no anchor is positive, the anchor of largest IoU becomes positive if
/// that IoU exceeds `negative` (lowest index on ties).
inline MatchResult match_anchors(const std::vector<AnchorBox>& anchors, const std::vector<HotspotBox>& gts,
                                 const MatchThresholds& t = {}) {
  MatchResult m;
  const std::size_t n = anchors.size();
  m.assignment.assign(n, kNegative);
  m.max_iou.assign(n, 0.0);
  m.best_gt.assign(n, -1);
  if (gts.empty()) return m;

  std::size_t best_anchor = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = anchors[i];
    double best = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      // Cheap reject before the full IoU.
      if (a.x2 <= gts[g].x1 || gts[g].x2 <= a.x1 || a.y2 <= gts[g].y1 || gts[g].y2 <= a.y1) {
        if (best < 0) {
          best = 0.0;
          m.best_gt[i] = static_cast<int>(g);
        }
        continue;
      }
      const double v = anchor_iou(a, gts[g]);
      if (v > best) {
        best = v;
        m.best_gt[i] = static_cast<int>(g);
      }
    }
    m.max_iou[i] = best;
    if (best > t.positive) {
      m.assignment[i] = m.best_gt[i];
      m.positives.push_back(i);
    } else if (best >= t.negative) {
      m.assignment[i] = kIgnored;
    }
    if (best > m.max_iou[best_anchor]) best_anchor = i;
  }
  if (m.positives.empty() && n > 0 && m.max_iou[best_anchor] > t.negative) {
    m.assignment[best_anchor] = m.best_gt[best_anchor];
    m.positives.push_back(best_anchor);
    m.used_fallback = true;
  }
  return m;
}

inline MatchResult match_anchors(const AnchorSet& anchors, const std::vector<HotspotBox>& gts,
                                 const MatchThresholds& t = {}) {
  return match_anchors(anchors.flat(), gts, t);
}

}  // namespace lithohod
