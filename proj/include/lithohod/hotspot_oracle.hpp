#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <set>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "lithohod/grid.hpp"
#include "lithohod/layout_synth.hpp"

namespace lithohod {

enum class HotspotClass : int { necking = 0, bridging = 1 };

inline constexpr int kNumHotspotClasses = 2;

/// Axis-aligned box, [x1,x2) x [y1,y2) in pixel units.
struct HotspotBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int class_id = 0;
  double score = 1.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  bool operator==(const HotspotBox&) const = default;
};

inline bool box_inside(const HotspotBox& b, int height, int width) {
  return b.x1 < b.x2 && b.y1 < b.y2 && b.x1 >= 0 && b.y1 >= 0 && b.x2 <= width && b.y2 <= height;
}

/// Intersection over union; 0 for disjoint or zero-area boxes.
inline double iou(const HotspotBox& a, const HotspotBox& b) {
  const double area_a = std::max(0.0, a.width()) * std::max(0.0, a.height());
  const double area_b = std::max(0.0, b.width()) * std::max(0.0, b.height());
  if (area_a <= 0 || area_b <= 0) return 0.0;
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

struct OracleRules {
  int neck_width_px = 3;
  int bridge_gap_px = 3;
  int box_size_px = 69;
  /// Cross-sections closer than this to a line end (along the wire) are tip
  /// rounding, not necking.
  int end_margin_px = 8;
};

/// One rule violation located at a pixel.
struct ViolationSite {
  int x = 0;
  int y = 0;
  HotspotClass cls = HotspotClass::necking;
  int layout_extent = 0;  // layout run length measured at the site
  auto operator<=>(const ViolationSite&) const = default;
};

namespace detail {

// Length of the run of `value` through (y,x) along the given axis, and the
// distances from (y,x) to its two ends. Ends on the raster border count as
// unbounded (the proxy simulator mirrors the clip at its border).
struct RunSpan {
  int lo_dist;
  int hi_dist;
};

inline RunSpan run_through(const Raster& r, int y, int x, bool horizontal, std::uint8_t value) {
  constexpr int kUnbounded = std::numeric_limits<int>::max() / 4;
  const int n = horizontal ? r.width() : r.height();
  const int pos = horizontal ? x : y;
  auto at = [&](int i) { return horizontal ? r(y, i) : r(i, x); };
  int lo = pos;
  while (lo - 1 >= 0 && at(lo - 1) == value) --lo;
  int hi = pos;
  while (hi + 1 < n && at(hi + 1) == value) ++hi;
  return {lo == 0 ? kUnbounded : pos - lo, hi == n - 1 ? kUnbounded : hi - pos};
}

}  // namespace detail

/// Scans every horizontal and vertical run of the layout for cross-sections
/// that print too narrow (necking) or gaps that print too closed (bridging).
inline std::vector<ViolationSite> find_violations(const Raster& layout, const Raster& resist,
                                                  const OracleRules& rules) {
  require_same_shape(layout, resist, "find_violations");
  std::set<ViolationSite> sites;
  const int h = layout.height();
  const int w = layout.width();
  for (const bool horizontal : {true, false}) {
    const int lines = horizontal ? h : w;
    const int n = horizontal ? w : h;
    for (int line = 0; line < lines; ++line) {
      auto lay = [&](int i) { return horizontal ? layout(line, i) : layout(i, line); };
      auto res = [&](int i) { return horizontal ? resist(line, i) : resist(i, line); };
      int s = 0;
      while (s < n) {
        const std::uint8_t v = lay(s);
        int e = s;
        while (e < n && lay(e) == v) ++e;
        const int len = e - s;
        const bool interior = s > 0 && e < n;
        if (interior) {
          const int mid = (s + e - 1) / 2;
          const int my = horizontal ? line : mid;
          const int mx = horizontal ? mid : line;
          if (v == 1 && len >= rules.neck_width_px) {
            int printed = 0;
            for (int i = s; i < e; ++i) printed += res(i);
            if (printed < rules.neck_width_px) {
              const auto along = detail::run_through(layout, my, mx, !horizontal, 1);
              if (std::min(along.lo_dist, along.hi_dist) >= rules.end_margin_px) {
                sites.insert({mx, my, HotspotClass::necking, len});
              }
            }
          } else if (v == 0 && len >= rules.bridge_gap_px) {
            int open = 0;
            for (int i = s; i < e; ++i) open += 1 - res(i);
            if (open < rules.bridge_gap_px) sites.insert({mx, my, HotspotClass::bridging, len});
          }
        }
        s = e;
      }
    }
  }
  return {sites.begin(), sites.end()};
}

/// Groups violation sites of one class into fixed-size boxes: leader
/// clustering in raster order, then repeated merging of clusters whose
/// centers are within box_size/2 (Chebyshev) of each other.
inline std::vector<HotspotBox> merge_violations(const std::vector<ViolationSite>& sites, int height,
                                                int width, int box_size) {
  if (box_size <= 0) throw std::invalid_argument("merge_violations: box_size must be positive");
  const double radius = box_size / 2.0;
  std::vector<HotspotBox> boxes;
  for (const auto cls : {HotspotClass::necking, HotspotClass::bridging}) {
    std::vector<ViolationSite> pts;
    for (const auto& s : sites) {
      if (s.cls == cls) pts.push_back(s);
    }
    std::ranges::sort(pts, [](const auto& a, const auto& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });

    struct Cluster {
      double sx = 0, sy = 0;
      int count = 0;
      double cx() const { return sx / count; }
      double cy() const { return sy / count; }
    };
    std::vector<Cluster> clusters;
    std::vector<bool> used(pts.size(), false);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (used[i]) continue;
      Cluster c;
      for (std::size_t j = i; j < pts.size(); ++j) {
        if (used[j]) continue;
        if (std::abs(pts[j].x - pts[i].x) <= radius && std::abs(pts[j].y - pts[i].y) <= radius) {
          used[j] = true;
          c.sx += pts[j].x;
          c.sy += pts[j].y;
          ++c.count;
        }
      }
      clusters.push_back(c);
    }
    bool merged = true;
    while (merged) {
      merged = false;
      for (std::size_t a = 0; a < clusters.size() && !merged; ++a) {
        for (std::size_t b = a + 1; b < clusters.size(); ++b) {
          if (std::abs(clusters[a].cx() - clusters[b].cx()) <= radius &&
              std::abs(clusters[a].cy() - clusters[b].cy()) <= radius) {
            clusters[a].sx += clusters[b].sx;
            clusters[a].sy += clusters[b].sy;
            clusters[a].count += clusters[b].count;
            clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(b));
            merged = true;
            break;
          }
        }
      }
    }
    for (const auto& c : clusters) {
      const int cx = static_cast<int>(std::floor(c.cx() + 0.5));
      const int cy = static_cast<int>(std::floor(c.cy() + 0.5));
      const int side_x = std::min(box_size, width);
      const int side_y = std::min(box_size, height);
      const int x1 = std::clamp(cx - side_x / 2, 0, width - side_x);
      const int y1 = std::clamp(cy - side_y / 2, 0, height - side_y);
      boxes.push_back({double(x1), double(y1), double(x1 + side_x), double(y1 + side_y),
                       static_cast<int>(cls), 1.0});
    }
  }
  return boxes;
}

/// Ground-truth hotspots of a clip given its printed (resist) shape.
inline std::vector<HotspotBox> hotspot_oracle(const LayoutClip& clip, const Raster& resist,
                                              const OracleRules& rules) {
  const auto sites = find_violations(clip.raster, resist, rules);
  return merge_violations(sites, clip.raster.height(), clip.raster.width(), rules.box_size_px);
}

}  // namespace lithohod
