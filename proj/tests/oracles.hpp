#pragma once

// Independent reference implementations used only by the tests. They favour
// obviousness over speed and share no code with the library beyond plain
// data types.

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "lithohod/grid.hpp"
#include "lithohod/heads_anchors.hpp"
#include "lithohod/hotspot_oracle.hpp"

namespace oracle {

using lithohod::AnchorBox;
using lithohod::Detection;
using lithohod::Grid;
using lithohod::HotspotBox;
using lithohod::Raster;

/// Box areas from counting cell centres of a fine lattice.
inline double raster_iou(const HotspotBox& a, const HotspotBox& b, double cell) {
  const double x0 = std::min(a.x1, b.x1), y0 = std::min(a.y1, b.y1);
  const double x1 = std::max(a.x2, b.x2), y1 = std::max(a.y2, b.y2);
  long inter = 0, uni = 0;
  for (double y = y0 + cell / 2; y < y1; y += cell) {
    for (double x = x0 + cell / 2; x < x1; x += cell) {
      const bool ia = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool ib = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni ? double(inter) / uni : 0.0;
}

/// Monte-Carlo IoU from uniform points in the joint bounding box.
inline double monte_carlo_iou(const HotspotBox& a, const HotspotBox& b, int samples, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(std::min(a.x1, b.x1), std::max(a.x2, b.x2));
  std::uniform_real_distribution<double> uy(std::min(a.y1, b.y1), std::max(a.y2, b.y2));
  long inter = 0, uni = 0;
  for (int i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng);
    const bool ia = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
    const bool ib = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
    inter += ia && ib;
    uni += ia || ib;
  }
  return uni ? double(inter) / uni : 0.0;
}

inline double closed_form_iou(const HotspotBox& a, const HotspotBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Exhaustive suppression: among all subsets, the one where every detection
/// is kept exactly when no kept, higher-ranked, same-class detection overlaps
/// it beyond the threshold. Returns input indices in rank order.
inline std::vector<int> brute_force_nms(const std::vector<Detection>& d, double thr, double floor) {
  std::vector<int> cand;
  for (int i = 0; i < static_cast<int>(d.size()); ++i) {
    if (d[i].box.score >= floor) cand.push_back(i);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return d[a].box.score > d[b].box.score; });
  const int n = static_cast<int>(cand.size());
  for (unsigned long mask = 0; mask < (1ul << n); ++mask) {
    bool ok = true;
    for (int r = 0; r < n && ok; ++r) {
      bool overlapped = false;
      for (int q = 0; q < r; ++q) {
        if (!(mask >> q & 1)) continue;
        const auto& a = d[cand[q]].box;
        const auto& b = d[cand[r]].box;
        overlapped = overlapped || (a.class_id == b.class_id && closed_form_iou(a, b) > thr);
      }
      ok = bool(mask >> r & 1) == !overlapped;
    }
    if (ok) {
      std::vector<int> kept;
      for (int r = 0; r < n; ++r) {
        if (mask >> r & 1) kept.push_back(cand[r]);
      }
      return kept;
    }
  }
  return {};
}

enum class Role { positive, negative, ignored };

/// Anchor roles from the 0.5 / 0.3 rule and the single-anchor fallback.
inline std::vector<Role> brute_force_match(const std::vector<AnchorBox>& anchors, const std::vector<HotspotBox>& gts,
                                           double pos = 0.5, double neg = 0.3) {
  std::vector<double> best(anchors.size(), 0.0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    for (const auto& g : gts) {
      best[i] = std::max(best[i], closed_form_iou({anchors[i].x1, anchors[i].y1, anchors[i].x2, anchors[i].y2}, g));
    }
  }
  std::vector<Role> roles(anchors.size(), Role::negative);
  bool any = false;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (best[i] > pos) {
      roles[i] = Role::positive;
      any = true;
    } else if (best[i] >= neg) {
      roles[i] = Role::ignored;
    }
  }
  if (!any && !gts.empty() && !anchors.empty()) {
    std::size_t top = 0;
    for (std::size_t i = 1; i < best.size(); ++i) {
      if (best[i] > best[top]) top = i;
    }
    if (best[top] > neg) roles[top] = Role::positive;
  }
  return roles;
}

/// Direct (non-separable) 2-D convolution with symmetric border reflection.
inline Grid<double> blur_direct(const Raster& r, double sigma) {
  const int rad = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> g(2 * rad + 1);
  double s = 0;
  for (int i = -rad; i <= rad; ++i) s += g[i + rad] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : g) v /= s;
  auto refl = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  Grid<double> out(r.height(), r.width());
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      double acc = 0;
      for (int dy = -rad; dy <= rad; ++dy) {
        for (int dx = -rad; dx <= rad; ++dx) {
          acc += g[dy + rad] * g[dx + rad] * r(refl(y + dy, r.height()), refl(x + dx, r.width()));
        }
      }
      out(y, x) = acc;
    }
  }
  return out;
}

inline bool is_contour(const Raster& r, int y, int x) {
  if (!r(y, x)) return false;
  const int d[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (const auto& o : d) {
    const int yy = y + o[0], xx = x + o[1];
    if (r.contains(yy, xx) && !r(yy, xx)) return true;
  }
  return false;
}

/// Nearest resist-contour pixel for a layout-contour pixel by a full scan;
/// ties go to the smallest angle from +x in [0, 2pi).
inline std::pair<int, int> nearest_contour(const Raster& resist, int y, int x) {
  long best = std::numeric_limits<long>::max();
  double best_angle = 10;
  std::pair<int, int> d{0, 0};
  for (int yy = 0; yy < resist.height(); ++yy) {
    for (int xx = 0; xx < resist.width(); ++xx) {
      if (!is_contour(resist, yy, xx)) continue;
      const int dx = xx - x, dy = yy - y;
      const long d2 = long(dx) * dx + long(dy) * dy;
      double ang = std::atan2(double(dy), double(dx));
      if (ang < 0) ang += 2 * M_PI;
      if (d2 < best || (d2 == best && ang < best_angle)) {
        best = d2;
        best_angle = ang;
        d = {dx, dy};
      }
    }
  }
  return d;
}

/// Relative error between autograd and central differences (float64).
inline double fd_gradient_error(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& xs,
                                double h = 1e-6) {
  for (const auto& x : xs) {
    if (x.grad().defined()) x.grad().zero_();
  }
  f().backward();
  double worst = 0;
  torch::NoGradGuard ng;
  for (const auto& x : xs) {
    auto flat = x.view({-1});
    const auto g = x.grad().clone().view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double v = flat[i].item<double>();
      flat[i] = v + h;
      const double up = f().item<double>();
      flat[i] = v - h;
      const double dn = f().item<double>();
      flat[i] = v;
      const double num = (up - dn) / (2 * h);
      const double ana = g[i].item<double>();
      worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-3}));
    }
  }
  return worst;
}

/// Random valid boxes inside [0, extent)^2.
inline HotspotBox random_box(std::mt19937_64& rng, double extent, double min_side = 1.0) {
  std::uniform_real_distribution<double> u(0, 1);
  const double w = min_side + u(rng) * (extent / 2 - min_side);
  const double h = min_side + u(rng) * (extent / 2 - min_side);
  const double x = u(rng) * (extent - w), y = u(rng) * (extent - h);
  return {x, y, x + w, y + h, 0, 1.0};
}

}  // namespace oracle
