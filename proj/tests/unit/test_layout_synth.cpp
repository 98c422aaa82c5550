#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lithohod/hotspot_oracle.hpp"
#include "lithohod/layout_synth.hpp"
#include "lithohod/litho_proxy.hpp"

using namespace lithohod;

namespace {

GenSpec spec512(std::uint64_t seed) {
  GenSpec s;
  s.height = s.width = 512;
  s.density = 0.3;
  s.seed = seed;
  return s;
}

LayoutClip clip_from(const Raster& r) {
  LayoutClip c;
  c.raster = r;
  c.id = "fixture";
  return c;
}

void fill(Raster& r, int y0, int y1, int x0, int x1, std::uint8_t v) {
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) r(y, x) = v;
  }
}

}  // namespace

TEST(Rasterize, RectangleCoversHalfOpenPixelRange) {
  const std::vector<Polygon> polys{Polygon::rect(2, 3, 7, 5)};
  const auto r = rasterize(polys, 8, 10);
  EXPECT_EQ(count_foreground(r), 10u);
  EXPECT_EQ(r(3, 2), 1);
  EXPECT_EQ(r(4, 6), 1);
  EXPECT_EQ(r(5, 2), 0);
  EXPECT_EQ(r(3, 7), 0);
}

TEST(Rasterize, LShapedPolygonMatchesUnionOfRects) {
  const Polygon l{{{0, 0}, {6, 0}, {6, 2}, {2, 2}, {2, 6}, {0, 6}}};
  const std::vector<Polygon> rects{Polygon::rect(0, 0, 6, 2), Polygon::rect(0, 2, 2, 6)};
  EXPECT_EQ(rasterize(std::span<const Polygon>(&l, 1), 8, 8), rasterize(rects, 8, 8));
}

TEST(Rasterize, Idempotent) {
  const auto layout = generate_layout(spec512(3));
  EXPECT_EQ(rasterize(layout.polygons, 512, 512), rasterize(layout.polygons, 512, 512));
}

TEST(GenerateLayout, DeterministicForSeed) {
  const auto a = generate_layout(spec512(7));
  const auto b = generate_layout(spec512(7));
  EXPECT_EQ(a.raster, b.raster);
  EXPECT_NE(a.raster, generate_layout(spec512(8)).raster);
}

TEST(GenerateLayout, DensityWithinTenPercent) {
  for (std::uint64_t seed : {7u, 1u, 99u}) {
    const auto l = generate_layout(spec512(seed));
    const double frac = double(count_foreground(l.raster)) / (512.0 * 512.0);
    EXPECT_GE(frac, 0.27) << seed;
    EXPECT_LE(frac, 0.33) << seed;
  }
}

TEST(GenerateLayout, ZeroDensityIsEmpty) {
  auto s = spec512(7);
  s.density = 0.0;
  const auto l = generate_layout(s);
  EXPECT_EQ(count_foreground(l.raster), 0u);
  EXPECT_TRUE(l.polygons.empty());
}

TEST(GenerateLayout, PolygonsReproduceRasterAndAreRectilinear) {
  const auto l = generate_layout(spec512(11));
  EXPECT_TRUE(is_binary(l.raster));
  EXPECT_EQ(rasterize(l.polygons, 512, 512), l.raster);
  for (const auto& p : l.polygons) {
    const auto& v = p.vertices;
    ASSERT_GE(v.size(), 4u);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& a = v[i];
      const auto& b = v[(i + 1) % v.size()];
      EXPECT_TRUE(a.x == b.x || a.y == b.y);
    }
  }
}

TEST(GenerateLayout, RejectsNarrowWiresAndBadDensity) {
  auto s = spec512(1);
  s.min_width = 1;
  EXPECT_THROW(generate_layout(s), std::invalid_argument);
  s = spec512(1);
  s.density = 1.5;
  EXPECT_THROW(generate_layout(s), std::invalid_argument);
}

TEST(ClipDataset, TilingGivesFourQuadrants) {
  const auto l = generate_layout(spec512(2));
  const auto clips = clip_dataset(l, ClipMode::tiling, 256, 0, 0);
  ASSERT_EQ(clips.size(), 4u);
  const std::vector<std::pair<int, int>> want{{0, 0}, {0, 256}, {256, 0}, {256, 256}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(clips[i].offset_y, want[i].first);
    EXPECT_EQ(clips[i].offset_x, want[i].second);
  }
}

TEST(ClipDataset, NarrowStripTilesFloorOfWidth) {
  GenSpec s;
  s.height = 256;
  s.width = 695;
  s.block_size = 128;
  s.seed = 4;
  const auto l = generate_layout(s);
  EXPECT_EQ(clip_dataset(l, ClipMode::tiling, 256, 0, 0).size(), 2u);
}

TEST(ClipDataset, RandomModeIsReproducible) {
  const auto l = generate_layout(spec512(2));
  const auto a = clip_dataset(l, ClipMode::random, 64, 1000, 5);
  const auto b = clip_dataset(l, ClipMode::random, 64, 1000, 5);
  ASSERT_EQ(a.size(), 1000u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].offset_x, b[i].offset_x);
    EXPECT_EQ(a[i].offset_y, b[i].offset_y);
  }
}

TEST(ClipDataset, RejectsSizeNotMultipleOf32) {
  const auto l = generate_layout(spec512(2));
  EXPECT_THROW(clip_dataset(l, ClipMode::tiling, 100, 0, 0), std::invalid_argument);
  EXPECT_THROW(clip_dataset(l, ClipMode::tiling, 1024, 0, 0), std::invalid_argument);
}

TEST(ClipDataset, ClippedPolygonsReproduceClipRaster) {
  const auto l = generate_layout(spec512(9));
  for (const auto& c : clip_dataset(l, ClipMode::random, 128, 20, 3)) {
    EXPECT_EQ(rasterize(c.polygons, 128, 128), c.raster) << c.id;
  }
}

TEST(ClipDataset, TilesNeverShareAPixel) {
  const auto l = generate_layout(spec512(9));
  std::set<std::pair<int, int>> seen;
  for (const auto& c : clip_dataset(l, ClipMode::tiling, 96, 0, 0)) {
    for (int y = 0; y < 96; ++y) {
      for (int x = 0; x < 96; ++x) EXPECT_TRUE(seen.insert({c.offset_y + y, c.offset_x + x}).second);
    }
  }
}

TEST(HotspotOracle, ExactPrintHasNoHotspots) {
  const auto l = generate_layout(spec512(5));
  EXPECT_TRUE(hotspot_oracle(l, l.raster, OracleRules{}).empty());
}

TEST(HotspotOracle, ClosedGapBecomesOneBridgingBox) {
  Raster layout(128, 128);
  fill(layout, 40, 52, 0, 128, 1);  // wire A
  fill(layout, 58, 70, 0, 128, 1);  // wire B, 6 px gap at rows 52..57
  Raster resist = layout;
  fill(resist, 52, 57, 60, 68, 1);  // gap printed 1 px wide over x 60..67

  // Exhaustive scan: columns whose printed gap is under 3 px.
  std::vector<int> cols;
  for (int x = 0; x < 128; ++x) {
    int open = 0;
    for (int y = 52; y < 58; ++y) open += !resist(y, x);
    if (open < 3) cols.push_back(x);
  }
  ASSERT_EQ(cols.size(), 8u);
  const double cx = (cols.front() + cols.back() + 1) / 2.0;
  const double cy = (52 + 58) / 2.0;

  OracleRules rules;
  rules.bridge_gap_px = 3;
  const auto boxes = hotspot_oracle(clip_from(layout), resist, rules);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].class_id, static_cast<int>(HotspotClass::bridging));
  EXPECT_NEAR(boxes[0].center_x(), cx, 1.0);
  EXPECT_NEAR(boxes[0].center_y(), cy, 1.0);
  EXPECT_DOUBLE_EQ(boxes[0].width(), 69.0);
}

TEST(HotspotOracle, PinchedWireBecomesOneNeckingBox) {
  Raster layout(128, 128);
  fill(layout, 60, 68, 0, 128, 1);  // 8 px wire
  Raster resist = layout;
  fill(resist, 60, 63, 62, 66, 0);
  fill(resist, 65, 68, 62, 66, 0);  // 2 px left at x 62..65

  std::vector<int> cols;
  for (int x = 0; x < 128; ++x) {
    int printed = 0;
    for (int y = 60; y < 68; ++y) printed += resist(y, x);
    if (printed < 4) cols.push_back(x);
  }
  OracleRules rules;
  rules.neck_width_px = 4;
  const auto boxes = hotspot_oracle(clip_from(layout), resist, rules);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0].class_id, static_cast<int>(HotspotClass::necking));
  EXPECT_NEAR(boxes[0].center_x(), (cols.front() + cols.back() + 1) / 2.0, 1.0);
  EXPECT_NEAR(boxes[0].center_y(), 64.0, 1.0);
}

TEST(HotspotOracle, BoxesLieInsideClip) {
  const LithoSimulator sim;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    GenSpec s;
    s.height = s.width = 256;
    s.seed = seed;
    s.neck_rate = s.bump_rate = 0.5;
    const auto l = generate_layout(s);
    for (const auto& b : hotspot_oracle(l, sim.simulate(l).resist, OracleRules{})) {
      EXPECT_TRUE(box_inside(b, 256, 256));
      EXPECT_DOUBLE_EQ(b.width(), 69.0);
      EXPECT_DOUBLE_EQ(b.height(), 69.0);
      EXPECT_EQ(b.score, 1.0);
    }
  }
}

TEST(HotspotOracle, TighterNeckThresholdKeepsEligibleViolations) {
  const LithoSimulator sim;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    GenSpec s;
    s.height = s.width = 256;
    s.seed = seed;
    s.neck_rate = 0.6;
    const auto l = generate_layout(s);
    const auto resist = sim.simulate(l).resist;
    for (int n = 2; n < 6; ++n) {
      OracleRules loose, tight;
      loose.neck_width_px = n;
      tight.neck_width_px = n + 1;
      const auto a = find_violations(l.raster, resist, loose);
      const auto b = find_violations(l.raster, resist, tight);
      const std::set<ViolationSite> bs(b.begin(), b.end());
      for (const auto& v : a) {
        if (v.cls != HotspotClass::necking || v.layout_extent < n + 1) continue;
        EXPECT_TRUE(bs.count(v)) << "seed " << seed << " n " << n << " at " << v.x << "," << v.y;
      }
    }
  }
}

TEST(HotspotOracle, NearbyViolationsMergeIntoOneBox) {
  std::vector<ViolationSite> sites{{50, 50, HotspotClass::bridging, 5}, {60, 55, HotspotClass::bridging, 5},
                                   {200, 200, HotspotClass::bridging, 5}, {52, 52, HotspotClass::necking, 5}};
  const auto boxes = merge_violations(sites, 256, 256, 69);
  EXPECT_EQ(boxes.size(), 3u);
}
