#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lithohod/grid.hpp"

namespace lithohod {

/// Integer pixel-corner coordinate.
struct Point {
  int x = 0;
  int y = 0;
  bool operator==(const Point&) const = default;
};

/// Closed rectilinear polygon; consecutive vertices share an x or a y.
struct Polygon {
  std::vector<Point> vertices;

  static Polygon rect(int x0, int y0, int x1, int y1) {
    return Polygon{{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};
  }
};

struct LayoutClip {
  Raster raster;
  double pitch_nm = 1.0;
  std::vector<Polygon> polygons;
  std::string id;
  int offset_y = 0;  // position inside the parent layout, if clipped
  int offset_x = 0;
};

/// Rasterizes one polygon with pixel-center sampling and the even-odd rule,
/// OR-ing the result into `out`.
inline void rasterize_into(const Polygon& poly, Raster& out) {
  const auto& v = poly.vertices;
  if (v.size() < 3) return;
  std::vector<int> crossings;
  for (int y = 0; y < out.height(); ++y) {
    const double yc = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Point& a = v[i];
      const Point& b = v[(i + 1) % v.size()];
      if (a.x != b.x) continue;  // horizontal edges never cross a row center
      const int lo = std::min(a.y, b.y);
      const int hi = std::max(a.y, b.y);
      if (lo <= yc && yc < hi) crossings.push_back(a.x);
    }
    std::ranges::sort(crossings);
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      const int x0 = std::max(crossings[k], 0);
      const int x1 = std::min(crossings[k + 1], out.width());
      for (int x = x0; x < x1; ++x) out(y, x) = 1;
    }
  }
}

inline Raster rasterize(std::span<const Polygon> polygons, int height, int width) {
  Raster out(height, width);
  for (const auto& p : polygons) rasterize_into(p, out);
  return out;
}

/// Sutherland-Hodgman clip of a polygon to the window [x0,x1)x[y0,y1),
/// translated so the window origin becomes (0,0). Rectilinear input stays
/// rectilinear with integer vertices.
inline Polygon clip_polygon(const Polygon& poly, int x0, int y0, int x1, int y1) {
  struct Edge {
    int axis;   // 0: x, 1: y
    int value;
    bool keep_greater;
  };
  const Edge edges[4] = {{0, x0, true}, {0, x1, false}, {1, y0, true}, {1, y1, false}};
  std::vector<Point> pts = poly.vertices;
  for (const auto& e : edges) {
    if (pts.empty()) break;
    auto inside = [&](const Point& p) {
      const int c = e.axis == 0 ? p.x : p.y;
      return e.keep_greater ? c >= e.value : c <= e.value;
    };
    // A rectilinear edge crosses a vertical window line only if it is
    // horizontal, and vice versa, so the crossing keeps the edge's other coordinate.
    auto intersect = [&](const Point& a, const Point&) {
      return e.axis == 0 ? Point{e.value, a.y} : Point{a.x, e.value};
    };
    std::vector<Point> next;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Point& cur = pts[i];
      const Point& prev = pts[(i + pts.size() - 1) % pts.size()];
      const bool ci = inside(cur);
      const bool pi = inside(prev);
      if (ci) {
        if (!pi) next.push_back(intersect(prev, cur));
        next.push_back(cur);
      } else if (pi) {
        next.push_back(intersect(prev, cur));
      }
    }
    pts = std::move(next);
  }
  // Drop consecutive duplicates produced by vertices lying on the window.
  std::vector<Point> out;
  for (const auto& p : pts) {
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  }
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  for (auto& p : out) {
    p.x -= x0;
    p.y -= y0;
  }
  return Polygon{std::move(out)};
}

inline long long polygon_area2(const Polygon& poly) {
  long long acc = 0;
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % v.size()];
    acc += static_cast<long long>(a.x) * b.y - static_cast<long long>(b.x) * a.y;
  }
  return acc < 0 ? -acc : acc;
}

/// Parameters of the synthetic Manhattan wiring generator.
struct GenSpec {
  int height = 512;
  int width = 512;
  int min_width = 6;
  int max_width = 12;
  int min_spacing = 5;
  int max_spacing = 12;
  double density = 0.3;
  std::uint64_t seed = 1;
  int block_size = 128;     // orientation is chosen per block
  double neck_rate = 0.12;  // chance a wire segment carries a narrowed section
  double bump_rate = 0.12;  // chance of a one-sided jog toward a neighbour track
  double via_rate = 0.08;   // chance of a landing pad wider than the wire
  double pitch_nm = 1.0;
};

namespace detail {

struct Rect {
  int x0, y0, x1, y1;
};

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  if (hi < lo) return lo;
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

// Builds one wire segment, in along/cross coordinates, plus its optional
// neck, jog and pad features. `horizontal` maps along->x, cross->y.
inline std::vector<Rect> make_segment(std::mt19937_64& rng, const GenSpec& spec, bool horizontal,
                                      int a0, int a1, int c0, int c1) {
  const int w = c1 - c0;
  std::vector<Rect> along_cross;  // x = along, y = cross
  const int len = a1 - a0;
  const int end_margin = 2 * spec.max_width;
  bool necked = false;
  if (bernoulli(rng, spec.neck_rate) && w >= 5 && len >= 2 * end_margin + 6) {
    const int n = uniform_int(rng, 3, std::min(5, w - 2));
    const int ln = uniform_int(rng, 4, std::min(24, len - 2 * end_margin));
    const int p = uniform_int(rng, a0 + end_margin, a1 - end_margin - ln);
    const int t = (w - n) / 2;
    along_cross.push_back({a0, c0, p, c1});
    along_cross.push_back({p, c0 + t, p + ln, c0 + t + n});
    along_cross.push_back({p + ln, c0, a1, c1});
    necked = true;
  }
  if (!necked) along_cross.push_back({a0, c0, a1, c1});
  if (bernoulli(rng, spec.bump_rate) && len >= 2 * end_margin + 6) {
    const int e = uniform_int(rng, 2, 4);
    const int lb = uniform_int(rng, 6, std::min(24, len - 2 * end_margin));
    const int p = uniform_int(rng, a0 + end_margin, a1 - end_margin - lb);
    if (bernoulli(rng, 0.5)) {
      along_cross.push_back({p, c0 - e, p + lb, c0});
    } else {
      along_cross.push_back({p, c1, p + lb, c1 + e});
    }
  }
  if (bernoulli(rng, spec.via_rate) && len >= 2 * end_margin) {
    const int ext = uniform_int(rng, 1, 3);
    const int side = w + 2 * ext;
    const int s = uniform_int(rng, a0 + ext, a1 - ext - side);
    along_cross.push_back({s, c0 - ext, s + side, c1 + ext});
  }
  std::vector<Rect> out;
  out.reserve(along_cross.size());
  for (const auto& r : along_cross) {
    out.push_back(horizontal ? r : Rect{r.y0, r.x0, r.y1, r.x1});
  }
  return out;
}

}  // namespace detail

/// Random Manhattan wiring: per-block horizontal or vertical tracks carrying
/// wire segments, necks, jogs and landing pads. Segments are added in random
/// order until the requested foreground density is reached.
inline LayoutClip generate_layout(const GenSpec& spec) {
  if (spec.height <= 0 || spec.width <= 0) {
    throw std::invalid_argument("generate_layout: grid size must be positive");
  }
  if (spec.min_width < 2) {
    throw std::invalid_argument("generate_layout: minimum width < 2 px cannot host the necking oracle");
  }
  if (spec.max_width < spec.min_width || spec.min_spacing <= 0 || spec.max_spacing < spec.min_spacing) {
    throw std::invalid_argument("generate_layout: width/spacing ranges must be positive and ordered");
  }
  if (!(spec.density >= 0.0 && spec.density <= 1.0)) {
    throw std::invalid_argument("generate_layout: density must lie in [0,1]");
  }
  if (spec.block_size < 2 * spec.max_width + spec.max_spacing) {
    throw std::invalid_argument("generate_layout: block_size too small for the width range");
  }

  LayoutClip clip;
  clip.raster = Raster(spec.height, spec.width);
  clip.pitch_nm = spec.pitch_nm;
  clip.id = "layout" + std::to_string(spec.seed);
  if (spec.density == 0.0) return clip;

  std::mt19937_64 rng(spec.seed);
  std::vector<std::vector<detail::Rect>> groups;
  const int margin = (spec.min_spacing + 1) / 2;
  for (int by = 0; by < spec.height; by += spec.block_size) {
    for (int bx = 0; bx < spec.width; bx += spec.block_size) {
      const int by1 = std::min(by + spec.block_size, spec.height);
      const int bx1 = std::min(bx + spec.block_size, spec.width);
      const bool horizontal = detail::bernoulli(rng, 0.5);
      const int a_lo = (horizontal ? bx : by) + margin;
      const int a_hi = (horizontal ? bx1 : by1) - margin;
      const int c_lo = (horizontal ? by : bx) + margin;
      const int c_hi = (horizontal ? by1 : bx1) - margin;
      int c = c_lo + detail::uniform_int(rng, 0, spec.max_spacing);
      while (true) {
        const int w = detail::uniform_int(rng, spec.min_width, spec.max_width);
        if (c + w > c_hi) break;
        int a = a_lo + detail::uniform_int(rng, 0, spec.max_spacing);
        while (true) {
          const int min_len = 4 * spec.max_width;
          int len = detail::uniform_int(rng, min_len, std::max(min_len, a_hi - a_lo));
          if (a + len > a_hi) len = a_hi - a;
          if (len < min_len) break;
          groups.push_back(detail::make_segment(rng, spec, horizontal, a, a + len, c, c + w));
          a += len + detail::uniform_int(rng, spec.min_spacing, 3 * spec.max_spacing);
        }
        c += w + detail::uniform_int(rng, spec.min_spacing, spec.max_spacing);
      }
    }
  }
  std::shuffle(groups.begin(), groups.end(), rng);

  const double total = static_cast<double>(spec.height) * spec.width;
  const auto target = static_cast<std::size_t>(spec.density * total);
  std::size_t filled = 0;
  for (const auto& group : groups) {
    if (filled >= target) break;
    for (const auto& r : group) {
      const int x0 = std::clamp(r.x0, 0, spec.width), x1 = std::clamp(r.x1, 0, spec.width);
      const int y0 = std::clamp(r.y0, 0, spec.height), y1 = std::clamp(r.y1, 0, spec.height);
      if (x1 <= x0 || y1 <= y0) continue;
      clip.polygons.push_back(Polygon::rect(x0, y0, x1, y1));
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          auto& px = clip.raster(y, x);
          if (!px) {
            px = 1;
            ++filled;
          }
        }
      }
    }
  }
  if (static_cast<double>(filled) < 0.9 * spec.density * total) {
    throw std::invalid_argument("generate_layout: requested density is unattainable with these ranges");
  }
  return clip;
}

enum class ClipMode { random, tiling };

/// Cuts clips from a layout: `random` draws `count` uniformly placed windows,
/// `tiling` returns the maximal non-overlapping row-major grid.
inline std::vector<LayoutClip> clip_dataset(const LayoutClip& layout, ClipMode mode, int clip_size,
                                            int count, std::uint64_t seed) {
  if (clip_size <= 0 || clip_size % 32 != 0) {
    throw std::invalid_argument("clip_dataset: clip_size must be a positive multiple of 32");
  }
  const int h = layout.raster.height();
  const int w = layout.raster.width();
  if (clip_size > h || clip_size > w) {
    throw std::invalid_argument("clip_dataset: clip_size exceeds layout dimensions");
  }
  std::vector<std::pair<int, int>> offsets;
  if (mode == ClipMode::tiling) {
    for (int y = 0; y + clip_size <= h; y += clip_size) {
      for (int x = 0; x + clip_size <= w; x += clip_size) offsets.emplace_back(y, x);
    }
  } else {
    if (count < 0) throw std::invalid_argument("clip_dataset: negative count");
    std::mt19937_64 rng(seed);
    for (int i = 0; i < count; ++i) {
      offsets.emplace_back(detail::uniform_int(rng, 0, h - clip_size),
                           detail::uniform_int(rng, 0, w - clip_size));
    }
  }
  std::vector<LayoutClip> clips;
  clips.reserve(offsets.size());
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto [y0, x0] = offsets[i];
    LayoutClip c;
    c.pitch_nm = layout.pitch_nm;
    c.offset_y = y0;
    c.offset_x = x0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "_%05zu_y%05d_x%05d", i, y0, x0);
    c.id = layout.id + buf;
    for (const auto& p : layout.polygons) {
      Polygon clipped = clip_polygon(p, x0, y0, x0 + clip_size, y0 + clip_size);
      if (clipped.vertices.size() >= 3 && polygon_area2(clipped) > 0) {
        c.polygons.push_back(std::move(clipped));
      }
    }
    c.raster = crop(layout.raster, y0, x0, clip_size, clip_size);
    clips.push_back(std::move(c));
  }
  return clips;
}

}  // namespace lithohod
