#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "lithohod/heads_anchors.hpp"
#include "lithohod/hotspot_oracle.hpp"

namespace lithohod {

using GroundTruth = std::map<std::string, std::vector<HotspotBox>>;

struct CurvePoint {
  double threshold = 0;
  double tpr = 0;
  int fa = 0;
  bool operator==(const CurvePoint&) const = default;
};

struct EvalReport {
  double recall = 0;
  int fa = 0;
  int fn = 0;
  double ap = 0;
  std::vector<CurvePoint> curve;
  double auc = 0;
  double runtime_s = 0;
};

struct EvalOptions {
  double match_iou = 0.5;
  double operating_score = 0.5;
};

/// Descending score; ties broken by (clip_id, x1, y1, x2, y2, class_id).
inline bool ranked_before(const Detection& a, const Detection& b) {
  if (a.box.score != b.box.score) return a.box.score > b.box.score;
  return std::tie(a.clip_id, a.box.x1, a.box.y1, a.box.x2, a.box.y2, a.box.class_id) <
         std::tie(b.clip_id, b.box.x1, b.box.y1, b.box.x2, b.box.y2, b.box.class_id);
}

struct RankedMatch {
  std::vector<Detection> ranked;
  std::vector<bool> tp;
  int total_gt = 0;
};

/// Greedy matching in rank order; each ground truth is consumed at most once
/// by a same-class detection of IoU above `match_iou`.
inline RankedMatch rank_and_match(std::vector<Detection> dets, const GroundTruth& gts, double match_iou) {
  RankedMatch r;
  std::ranges::sort(dets, ranked_before);
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [id, boxes] : gts) {
    used[id].assign(boxes.size(), false);
    r.total_gt += static_cast<int>(boxes.size());
  }
  r.tp.assign(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto it = gts.find(dets[i].clip_id);
    if (it == gts.end()) continue;
    auto& taken = used[it->first];
    double best = match_iou;
    int best_j = -1;
    for (std::size_t j = 0; j < it->second.size(); ++j) {
      if (taken[j] || it->second[j].class_id != dets[i].box.class_id) continue;
      const double v = iou(dets[i].box, it->second[j]);
      if (v > best) {
        best = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0) {
      taken[best_j] = true;
      r.tp[i] = true;
    }
  }
  r.ranked = std::move(dets);
  return r;
}

struct CurveResult {
  std::vector<CurvePoint> curve;
  double auc = 0;
};

/// One point per distinct score, loosest threshold last. The area under
/// tpr(fa), starting at the origin and taking the best tpr at each fa, is
/// divided by the largest fa; with no false alarms at all the final tpr is
/// returned.
inline CurveResult curve_from_ranked(const RankedMatch& m) {
  if (m.total_gt == 0) throw std::invalid_argument("tpr_fa_curve: no ground truth, tpr undefined");
  CurveResult out;
  int tp = 0, fa = 0;
  for (std::size_t i = 0; i < m.ranked.size(); ++i) {
    if (m.tp[i]) ++tp; else ++fa;
    const bool last_of_score = i + 1 == m.ranked.size() || m.ranked[i + 1].box.score != m.ranked[i].box.score;
    if (last_of_score) out.curve.push_back({m.ranked[i].box.score, double(tp) / m.total_gt, fa});
  }
  if (out.curve.empty()) return out;

  std::vector<std::pair<int, double>> pts{{0, 0.0}};
  for (const auto& p : out.curve) {
    if (pts.back().first == p.fa) {
      pts.back().second = std::max(pts.back().second, p.tpr);
    } else {
      pts.emplace_back(p.fa, p.tpr);
    }
  }
  const int fa_max = pts.back().first;
  if (fa_max == 0) {
    out.auc = out.curve.back().tpr;
    return out;
  }
  double area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  }
  out.auc = area / fa_max;
  return out;
}

inline CurveResult tpr_fa_curve(const std::vector<Detection>& dets, const GroundTruth& gts, double match_iou = 0.5) {
  return curve_from_ranked(rank_and_match(dets, gts, match_iou));
}

/// All-point interpolated area under precision(recall).
inline double average_precision(const RankedMatch& m) {
  if (m.total_gt == 0) return 0.0;
  std::vector<double> rec{0.0}, prec{1.0};
  int tp = 0;
  for (std::size_t i = 0; i < m.ranked.size(); ++i) {
    tp += m.tp[i];
    rec.push_back(double(tp) / m.total_gt);
    prec.push_back(double(tp) / double(i + 1));
  }
  for (std::size_t i = prec.size() - 1; i > 0; --i) prec[i - 1] = std::max(prec[i - 1], prec[i]);
  double ap = 0;
  for (std::size_t i = 1; i < rec.size(); ++i) ap += (rec[i] - rec[i - 1]) * prec[i];
  return ap;
}

/// Recall, FA and FN at the operating score, AP and the TPR-FA curve over all
/// detections. `gts` must list every test clip, including clips without hotspots.
inline EvalReport evaluate_detections(const std::vector<Detection>& dets, const GroundTruth& gts,
                                      const EvalOptions& opt = {}) {
  if (gts.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto m = rank_and_match(dets, gts, opt.match_iou);
  EvalReport r;
  int tp = 0;
  for (std::size_t i = 0; i < m.ranked.size(); ++i) {
    if (m.ranked[i].box.score < opt.operating_score) break;
    if (m.tp[i]) ++tp; else ++r.fa;
  }
  r.fn = m.total_gt - tp;
  r.recall = m.total_gt > 0 ? double(tp) / m.total_gt : 0.0;
  r.ap = average_precision(m);
  const auto c = curve_from_ranked(m);
  r.curve = c.curve;
  r.auc = c.auc;
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["recall"] = r.recall;
  j["fa"] = r.fa;
  j["fn"] = r.fn;
  j["ap"] = r.ap;
  auto& curve = j["curve"] = nlohmann::ordered_json::array();
  for (const auto& p : r.curve) curve.push_back({p.threshold, p.tpr, p.fa});
  j["auc"] = r.auc;
  return j;
}

inline std::string curve_csv(const EvalReport& r) {
  std::string s = "threshold,tpr,fa\n";
  char buf[96];
  for (const auto& p : r.curve) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g,%d\n", p.threshold, p.tpr, p.fa);
    s += buf;
  }
  return s;
}

/// Smallest FA among operating points with tpr >= `recall`; -1 if unreached.
inline int fa_at_recall(const std::vector<CurvePoint>& curve, double recall) {
  for (const auto& p : curve) {
    if (p.tpr >= recall) return p.fa;
  }
  return -1;
}

}  // namespace lithohod
