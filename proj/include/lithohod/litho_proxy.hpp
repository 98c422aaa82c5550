#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "lithohod/grid.hpp"
#include "lithohod/layout_synth.hpp"

namespace lithohod {

/// Per-pixel displacement from the drawn contour to the printed contour,
/// plus its Euclidean norm. Channel order is (dx, dy, magnitude).
struct DeformationMap {
  Grid<float> dx;
  Grid<float> dy;
  Grid<float> magnitude;
  /// Set when some layout contour pixel found no printed contour within the
  /// search radius and its displacement was capped.
  bool capped = false;

  int height() const { return dx.height(); }
  int width() const { return dx.width(); }
};

/// Three channel planes of equal shape.
using ChannelStack = std::array<Grid<float>, 3>;

struct LithoParams {
  double blur_sigma_px = 3.0;
  double threshold = 0.5;
  double corner_bias = 0.0;
  int max_radius_px = 16;
};

struct LithoResult {
  Raster resist;
  Grid<float> aerial;
  DeformationMap deformation;
};

namespace detail {

inline int reflect_index(int i, int n) {
  // Symmetric reflection about the border: ... c b a | a b c ...
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

inline Grid<double> separable_blur(const Grid<double>& in, const std::vector<double>& k) {
  const int h = in.height(), w = in.width();
  const int r = static_cast<int>(k.size() / 2);
  Grid<double> tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) acc += k[j + r] * in(y, reflect_index(x + j, w));
      tmp(y, x) = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) acc += k[j + r] * tmp(reflect_index(y + j, h), x);
      out(y, x) = acc;
    }
  }
  return out;
}

// Foreground pixels with at least one in-bounds 4-neighbour in background.
inline std::vector<std::pair<int, int>> contour_pixels(const Raster& r) {
  std::vector<std::pair<int, int>> out;
  static constexpr int kDy[4] = {-1, 1, 0, 0};
  static constexpr int kDx[4] = {0, 0, -1, 1};
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      if (!r(y, x)) continue;
      for (int k = 0; k < 4; ++k) {
        const int ny = y + kDy[k], nx = x + kDx[k];
        if (r.contains(ny, nx) && !r(ny, nx)) {
          out.emplace_back(y, x);
          break;
        }
      }
    }
  }
  return out;
}

inline double angle_from_x_axis(int dx, int dy) {
  double a = std::atan2(static_cast<double>(dy), static_cast<double>(dx));
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a;
}

// Exact Euclidean feature transform: for every pixel, the index (y*w+x) of
// a nearest seed pixel, or -1 when there are no seeds.
inline Grid<int> nearest_seed(const Grid<std::uint8_t>& seeds) {
  const int h = seeds.height(), w = seeds.width();
  constexpr long long kInf = std::numeric_limits<long long>::max() / 4;
  // Column pass: nearest seed row in the same column.
  Grid<int> col_row(h, w, -1);
  for (int x = 0; x < w; ++x) {
    int last = -1;
    for (int y = 0; y < h; ++y) {
      if (seeds(y, x)) last = y;
      col_row(y, x) = last;
    }
    last = -1;
    for (int y = h - 1; y >= 0; --y) {
      if (seeds(y, x)) last = y;
      if (last >= 0 && (col_row(y, x) < 0 || last - y < y - col_row(y, x))) col_row(y, x) = last;
    }
  }
  // Row pass: lower envelope of parabolas (x-q)^2 + g(q)^2.
  Grid<int> out(h, w, -1);
  std::vector<int> v(w);
  std::vector<double> z(w + 1);
  std::vector<long long> g(w);
  for (int y = 0; y < h; ++y) {
    for (int q = 0; q < w; ++q) {
      const int r = col_row(y, q);
      g[q] = r < 0 ? kInf : static_cast<long long>(r - y) * (r - y);
    }
    int k = -1;
    for (int q = 0; q < w; ++q) {
      if (g[q] >= kInf) continue;
      if (k < 0) {
        k = 0;
        v[0] = q;
        z[0] = -std::numeric_limits<double>::infinity();
        z[1] = std::numeric_limits<double>::infinity();
        continue;
      }
      double s = 0;
      while (true) {
        const int p = v[k];
        s = ((static_cast<double>(g[q]) + double(q) * q) - (static_cast<double>(g[p]) + double(p) * p)) /
            (2.0 * (q - p));
        if (s > z[k]) break;
        --k;  // z[0] is -inf, so k stays >= 0
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = std::numeric_limits<double>::infinity();
    }
    if (k < 0) continue;
    int j = 0;
    for (int x = 0; x < w; ++x) {
      while (z[j + 1] < x) ++j;
      const int q = v[j];
      out(y, x) = col_row(y, q) * w + q;
    }
  }
  return out;
}

}  // namespace detail

/// Nearest-contour correspondence between the drawn and the printed shape.
/// Each layout contour pixel stores the vector to its nearest printed contour
/// pixel (ties: smallest angle from +x, counter-clockwise in image axes); all
/// other pixels copy the vector of their nearest layout contour pixel.
inline DeformationMap deformation_map(const Raster& layout, const Raster& resist, int max_radius_px = 16) {
  require_same_shape(layout, resist, "deformation_map");
  const int h = layout.height(), w = layout.width();
  DeformationMap m{Grid<float>(h, w), Grid<float>(h, w), Grid<float>(h, w), false};

  const auto layout_contour = detail::contour_pixels(layout);
  if (layout_contour.empty()) return m;
  Raster resist_contour(h, w);
  for (const auto& [y, x] : detail::contour_pixels(resist)) resist_contour(y, x) = 1;

  Raster seeds(h, w);
  Grid<float> cdx(h, w), cdy(h, w);
  const long long r2max = static_cast<long long>(max_radius_px) * max_radius_px;
  for (const auto& [y, x] : layout_contour) {
    seeds(y, x) = 1;
    long long best = -1;
    int bdx = 0, bdy = 0;
    double bangle = 0;
    // Grow square rings until the ring cannot contain anything closer.
    for (int ring = 0; ring <= max_radius_px; ++ring) {
      if (best >= 0 && static_cast<long long>(ring) * ring > best) break;
      for (int dy = -ring; dy <= ring; ++dy) {
        for (int dx = -ring; dx <= ring; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
          const int ny = y + dy, nx = x + dx;
          if (!resist_contour.contains(ny, nx) || !resist_contour(ny, nx)) continue;
          const long long d2 = static_cast<long long>(dx) * dx + static_cast<long long>(dy) * dy;
          if (d2 > r2max) continue;
          const double ang = detail::angle_from_x_axis(dx, dy);
          if (best < 0 || d2 < best || (d2 == best && ang < bangle)) {
            best = d2;
            bdx = dx;
            bdy = dy;
            bangle = ang;
          }
        }
      }
    }
    if (best < 0) {
      // Nothing printed nearby: point inward by the capped radius.
      int nx = 0, ny = 0;
      static constexpr int kDy[4] = {-1, 1, 0, 0};
      static constexpr int kDx[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int yy = y + kDy[k], xx = x + kDx[k];
        if (layout.contains(yy, xx) && !layout(yy, xx)) {
          nx -= kDx[k];
          ny -= kDy[k];
        }
      }
      double norm = std::hypot(nx, ny);
      if (norm == 0) {
        nx = 1;
        norm = 1;
      }
      cdx(y, x) = static_cast<float>(max_radius_px * nx / norm);
      cdy(y, x) = static_cast<float>(max_radius_px * ny / norm);
      m.capped = true;
    } else {
      cdx(y, x) = static_cast<float>(bdx);
      cdy(y, x) = static_cast<float>(bdy);
    }
  }

  const Grid<int> nearest = detail::nearest_seed(seeds);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int idx = nearest(y, x);
      const int sy = idx / w, sx = idx % w;
      const float dx = cdx(sy, sx), dy = cdy(sy, sx);
      m.dx(y, x) = dx;
      m.dy(y, x) = dy;
      m.magnitude(y, x) = std::sqrt(dx * dx + dy * dy);
    }
  }
  return m;
}

/// Inverse warp with nearest-neighbour sampling: out(p) = in(p - d(p)).
inline Raster warp(const Raster& raster, const DeformationMap& map) {
  require_same_shape(raster, map.dx, "warp");
  Raster out(raster.height(), raster.width());
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      const int sx = static_cast<int>(std::floor(x - map.dx(y, x) + 0.5));
      const int sy = static_cast<int>(std::floor(y - map.dy(y, x) + 0.5));
      out(y, x) = raster.contains(sy, sx) ? raster(sy, sx) : 0;
    }
  }
  return out;
}

/// Non-overlapping average pooling of each channel to target_h x target_w.
inline ChannelStack pool_deformation(const DeformationMap& map, int target_h, int target_w) {
  const int h = map.height(), w = map.width();
  if (target_h <= 0 || target_w <= 0 || h % target_h != 0 || w % target_w != 0) {
    throw std::invalid_argument("pool_deformation: target dims must divide the map dims");
  }
  const int fy = h / target_h, fx = w / target_w;
  const Grid<float>* src[3] = {&map.dx, &map.dy, &map.magnitude};
  ChannelStack out;
  for (int c = 0; c < 3; ++c) {
    out[c] = Grid<float>(target_h, target_w);
    for (int ty = 0; ty < target_h; ++ty) {
      for (int tx = 0; tx < target_w; ++tx) {
        double acc = 0.0;
        for (int y = ty * fy; y < (ty + 1) * fy; ++y) {
          for (int x = tx * fx; x < (tx + 1) * fx; ++x) acc += (*src[c])(y, x);
        }
        out[c](ty, tx) = static_cast<float>(acc / (fy * fx));
      }
    }
  }
  return out;
}

/// Gaussian aerial image plus constant-threshold resist. Stands in for a
/// learned lithography simulator: callers only see (resist, deformation).
class LithoSimulator {
 public:
  explicit LithoSimulator(LithoParams params = {}) : params_(params) {
    if (!(params_.blur_sigma_px > 0)) throw std::invalid_argument("LithoSimulator: blur_sigma_px must be > 0");
    if (!(params_.threshold > 0 && params_.threshold < 1)) {
      throw std::invalid_argument("LithoSimulator: threshold must lie in (0,1)");
    }
    kernel_ = detail::gaussian_kernel(params_.blur_sigma_px);
  }

  const LithoParams& params() const { return params_; }

  Grid<float> aerial(const Raster& layout) const {
    if (!is_binary(layout)) throw std::invalid_argument("simulate: input raster is not binary");
    const int h = layout.height(), w = layout.width();
    Grid<double> in(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) in(y, x) = layout(y, x);
    }
    Grid<double> blurred = detail::separable_blur(in, kernel_);
    if (params_.corner_bias != 0.0) {
      // A foreground pixel owns a convex corner when both neighbours toward
      // that corner are background.
      Grid<double> corners(h, w);
      auto bg = [&](int y, int x) { return !layout.contains(y, x) || !layout(y, x); };
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!layout(y, x)) continue;
          int n = 0;
          for (const int sy : {-1, 1}) {
            for (const int sx : {-1, 1}) n += bg(y + sy, x) && bg(y, x + sx);
          }
          corners(y, x) = n;
        }
      }
      const double peak = kernel_[kernel_.size() / 2] * kernel_[kernel_.size() / 2];
      const Grid<double> spread = detail::separable_blur(corners, kernel_);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) blurred(y, x) += params_.corner_bias * spread(y, x) / peak;
      }
    }
    Grid<float> out(h, w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out(y, x) = static_cast<float>(std::clamp(blurred(y, x), 0.0, 1.0));
    }
    return out;
  }

  LithoResult simulate(const Raster& layout) const {
    LithoResult r;
    r.aerial = aerial(layout);
    r.resist = Raster(layout.height(), layout.width());
    for (int y = 0; y < layout.height(); ++y) {
      for (int x = 0; x < layout.width(); ++x) r.resist(y, x) = r.aerial(y, x) >= params_.threshold ? 1 : 0;
    }
    r.deformation = deformation_map(layout, r.resist, params_.max_radius_px);
    return r;
  }

  LithoResult simulate(const LayoutClip& clip) const { return simulate(clip.raster); }

 private:
  LithoParams params_;
  std::vector<double> kernel_;
};

inline LithoResult simulate(const LayoutClip& clip, const LithoParams& params) {
  return LithoSimulator(params).simulate(clip);
}

}  // namespace lithohod
