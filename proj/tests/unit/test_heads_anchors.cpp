#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lithohod/heads_anchors.hpp"
#include "oracles.hpp"

using namespace lithohod;

namespace {

Detection det(double x1, double y1, double x2, double y2, double score, int cls = 0) {
  Detection d;
  d.box = {x1, y1, x2, y2, cls, score};
  return d;
}

std::vector<Detection> random_dets(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Detection> out;
  for (int i = 0; i < n; ++i) {
    const double x = u(rng) * 40, y = u(rng) * 40;
    out.push_back(det(x, y, x + 10 + u(rng) * 20, y + 10 + u(rng) * 20, std::round(u(rng) * 20) / 20, u(rng) < 0.5));
  }
  return out;
}

}  // namespace

TEST(Anchors, CountPerLevel) {
  const auto a = generate_anchors(256, 256);
  EXPECT_EQ(a.per_location, 12);
  EXPECT_EQ(a.levels[0].size(), 32u * 32 * 12);
  EXPECT_EQ(a.levels[1].size(), 16u * 16 * 12);
  EXPECT_EQ(a.levels[2].size(), 8u * 8 * 12);
  EXPECT_EQ(a.size(), 16128u);
  EXPECT_EQ(a.tensor().sizes(), (std::vector<int64_t>{16128, 4}));
  EXPECT_EQ(a.level_of(0), 3);
  EXPECT_EQ(a.level_of(12288), 4);
  EXPECT_EQ(a.level_of(16127), 5);
  EXPECT_THROW(generate_anchors(250, 256), std::invalid_argument);
}

TEST(Anchors, ShapesFollowScaleAndRatio) {
  const AnchorConfig cfg;
  const auto a = generate_anchors(64, 64, cfg);
  for (int l = 0; l < 3; ++l) {
    for (std::size_t r = 0; r < cfg.ratios.size(); ++r) {
      for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
        const auto& b = a.levels[l][r * cfg.scales.size() + s];
        const double w = b.x2 - b.x1, h = b.y2 - b.y1;
        EXPECT_NEAR(w / h, cfg.ratios[r], 1e-9);
        EXPECT_NEAR(std::sqrt(w * h), cfg.scales[s] * cfg.base_sizes[l], 1e-9);
      }
    }
  }
}

TEST(Anchors, CentresSitOnStrideGrid) {
  const auto a = generate_anchors(128, 96);
  for (int l = 0; l < 3; ++l) {
    const int stride = a.strides[l], gw = 96 / stride;
    for (std::size_t i = 0; i < a.levels[l].size(); ++i) {
      const auto& b = a.levels[l][i];
      const int cell = static_cast<int>(i) / a.per_location;
      EXPECT_NEAR((b.x1 + b.x2) / 2, (cell % gw + 0.5) * stride, 1e-9);
      EXPECT_NEAR((b.y1 + b.y2) / 2, (cell / gw + 0.5) * stride, 1e-9);
    }
  }
}

TEST(Heads, ClassifierStartsAtPrior) {
  torch::manual_seed(0);
  auto cls = ClassificationHead(16, 12, 2);
  torch::NoGradGuard ng;
  const auto p = cls(torch::randn({2, 16, 8, 8}));
  EXPECT_EQ(p.sizes(), (std::vector<int64_t>{2, 8 * 8 * 12, 2}));
  EXPECT_NEAR(p.mean().item<double>(), 0.01, 1e-3);
  EXPECT_GT(p.min().item<float>(), 0.0f);
  EXPECT_LT(p.max().item<float>(), 1.0f);
}

TEST(Heads, RegressorStartsNearZeroAndIsUnbounded) {
  torch::manual_seed(0);
  auto reg = RegressionHead(16, 12);
  torch::NoGradGuard ng;
  const auto x = torch::randn({1, 16, 8, 8});
  const auto d = reg(x);
  EXPECT_EQ(d.sizes(), (std::vector<int64_t>{1, 8 * 8 * 12, 4}));
  EXPECT_LT(d.abs().max().item<float>(), 0.01f);
  for (auto& p : reg->parameters()) p.mul_(40);
  const auto big = reg(x * 50);
  EXPECT_GT(big.max().item<float>(), 1.0f);
  EXPECT_LT(big.min().item<float>(), -1.0f);
}

TEST(Heads, OutputOrderMatchesAnchorOrder) {
  torch::manual_seed(1);
  const int a = 3, k = 2, h = 4, w = 5;
  auto head = HeadTrunk(8, a, k);
  torch::NoGradGuard ng;
  const auto x = torch::randn({1, 8, h, w});
  const auto map = head->final_conv(head->trunk->forward(x));
  const auto out = head(x);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int ai = 0; ai < a; ++ai) {
        for (int c = 0; c < k; ++c) {
          EXPECT_EQ(out[0][(y * w + xx) * a + ai][c].item<float>(), map[0][ai * k + c][y][xx].item<float>());
        }
      }
    }
  }
}

TEST(Heads, TrunksDoNotShareParameters) {
  auto cls = ClassificationHead(16, 12, 2);
  auto reg = RegressionHead(16, 12);
  for (const auto& p : cls->parameters()) {
    for (const auto& q : reg->parameters()) EXPECT_FALSE(p.is_same(q));
  }
}

TEST(BoxCoding, ZeroDeltasReturnAnchors) {
  const auto a = generate_anchors(64, 64).tensor(torch::kFloat64);
  EXPECT_TRUE(torch::allclose(decode_deltas(a, torch::zeros_like(a)), a));
}

TEST(BoxCoding, RoundTrip) {
  std::mt19937_64 rng(3);
  const auto a = generate_anchors(64, 64).tensor(torch::kFloat64);
  auto boxes = torch::empty_like(a);
  for (int64_t i = 0; i < a.size(0); ++i) {
    const auto b = oracle::random_box(rng, 64, 2);
    boxes[i] = torch::tensor({b.x1, b.y1, b.x2, b.y2}, torch::kFloat64);
  }
  EXPECT_TRUE(torch::allclose(decode_deltas(a, encode_boxes(a, boxes)), boxes, 1e-9, 1e-9));
}

TEST(BoxCoding, LogTwoDoublesSize) {
  const auto a = torch::tensor({{10.0, 20.0, 30.0, 60.0}}, torch::kFloat64);
  const auto b = decode_deltas(a, torch::tensor({{0.0, 0.0, std::log(2.0), std::log(2.0)}}, torch::kFloat64));
  EXPECT_TRUE(torch::allclose(b, torch::tensor({{0.0, 0.0, 40.0, 80.0}}, torch::kFloat64)));
  const auto s = decode_deltas(a, torch::tensor({{0.5, -0.25, 0.0, 0.0}}, torch::kFloat64));
  EXPECT_TRUE(torch::allclose(s, torch::tensor({{20.0, 10.0, 40.0, 50.0}}, torch::kFloat64)));
}

TEST(BoxCoding, HugeLogRatioIsClamped) {
  const auto a = torch::tensor({{0.0, 0.0, 16.0, 16.0}}, torch::kFloat64);
  const auto b = decode_deltas(a, torch::tensor({{0.0, 0.0, 50.0, 0.0}}, torch::kFloat64));
  EXPECT_NEAR((b[0][2] - b[0][0]).item<double>(), 1000.0, 1e-6);
}

TEST(BoxCoding, DecodeClipsAndRejectsNonFinite) {
  const auto a = torch::tensor({{0.0, 0.0, 32.0, 32.0}}, torch::kFloat64);
  const auto b = decode_boxes(a, torch::tensor({{0.0, 0.0, 1.0, 1.0}}, torch::kFloat64), 40, 50);
  EXPECT_TRUE(torch::allclose(b, torch::tensor({{0.0, 0.0, 50.0, 40.0}}, torch::kFloat64)));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(decode_boxes(a, torch::tensor({{0.0, nan, 0.0, 0.0}}, torch::kFloat64), 40, 50),
               std::invalid_argument);
  EXPECT_THROW(decode_boxes(a, torch::zeros({2, 4}, torch::kFloat64), 40, 50), std::invalid_argument);
}

TEST(Nms, KeepsHigherScoringOverlap) {
  const auto kept = nms({det(0, 0, 10, 10, 0.6), det(1, 1, 11, 11, 0.9), det(50, 50, 60, 60, 0.3)}, 0.5, 0.05);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].box.score, 0.9);
  EXPECT_EQ(kept[1].box.score, 0.3);
}

TEST(Nms, ClassesAreSuppressedSeparately) {
  EXPECT_EQ(nms({det(0, 0, 10, 10, 0.9, 0), det(0, 0, 10, 10, 0.8, 1)}, 0.5, 0.0).size(), 2u);
}

TEST(Nms, ThresholdIsStrict) {
  // IoU exactly 1/3: kept at threshold 1/3, removed just below it.
  const std::vector<Detection> d{det(0, 0, 10, 10, 0.9), det(5, 0, 15, 10, 0.8)};
  EXPECT_EQ(nms(d, 1.0 / 3.0, 0.0).size(), 2u);
  EXPECT_EQ(nms(d, 0.33, 0.0).size(), 1u);
}

TEST(Nms, ScoreFloorDropsFirst) {
  const auto kept = nms({det(0, 0, 10, 10, 0.04), det(1, 1, 11, 11, 0.5)}, 0.5, 0.05);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].box.score, 0.5);
  EXPECT_TRUE(nms({}, 0.5, 0.05).empty());
}

TEST(Nms, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 200; ++t) {
    const auto d = random_dets(rng, 2 + t % 9);
    const auto got = nms(d, 0.4, 0.1);
    const auto want = oracle::brute_force_nms(d, 0.4, 0.1);
    ASSERT_EQ(got.size(), want.size()) << "trial " << t;
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_EQ(got[k].box, d[want[k]].box);
  }
}

TEST(Nms, OutputProperties) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto d = random_dets(rng, 30);
    const auto kept = nms(d, 0.5, 0.0);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      if (i) EXPECT_GE(kept[i - 1].box.score, kept[i].box.score);
      for (std::size_t j = i + 1; j < kept.size(); ++j) {
        if (kept[i].box.class_id == kept[j].box.class_id) EXPECT_LE(iou(kept[i].box, kept[j].box), 0.5);
      }
    }
    const auto again = nms(kept, 0.5, 0.0);
    ASSERT_EQ(again.size(), kept.size());
    EXPECT_LE(kept.size(), d.size());
  }
}

TEST(Nms, TranslationCovariant) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    auto d = random_dets(rng, 20);
    auto shifted = d;
    for (auto& s : shifted) {
      s.box.x1 += 64, s.box.x2 += 64, s.box.y1 += 32, s.box.y2 += 32;
    }
    const auto a = nms(d, 0.5, 0.0), b = nms(shifted, 0.5, 0.0);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_NEAR(a[k].box.x1 + 64, b[k].box.x1, 1e-9);
      EXPECT_EQ(a[k].box.score, b[k].box.score);
    }
  }
}
