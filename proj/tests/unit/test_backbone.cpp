#include <gtest/gtest.h>

#include <cmath>

#include "lithohod/backbone.hpp"

using namespace lithohod;

namespace {

BackboneOptions small(int depth = 18) {
  BackboneOptions o;
  o.depth = depth;
  o.base_width = 16;
  o.pyramid_channels = 32;
  return o;
}

}  // namespace

TEST(Backbone, ResNet50PyramidShapesAt512) {
  torch::manual_seed(0);
  auto net = Backbone(BackboneOptions{});
  net->eval();
  torch::NoGradGuard ng;
  const auto p = net(torch::randn({1, 1, 512, 512}));
  EXPECT_EQ(p.p3.sizes(), (std::vector<int64_t>{1, 256, 64, 64}));
  EXPECT_EQ(p.p4.sizes(), (std::vector<int64_t>{1, 256, 32, 32}));
  EXPECT_EQ(p.p5.sizes(), (std::vector<int64_t>{1, 256, 16, 16}));
}

TEST(Backbone, StageChannelsFollowDepth) {
  EXPECT_EQ(ResNet(50, 64)->out_channels(), (std::array<int64_t, 3>{512, 1024, 2048}));
  EXPECT_EQ(ResNet(18, 64)->out_channels(), (std::array<int64_t, 3>{128, 256, 512}));
  EXPECT_THROW(ResNet(20, 64), std::invalid_argument);
}

TEST(Backbone, SmallConfigShapesAt256) {
  torch::manual_seed(0);
  auto net = Backbone(small());
  torch::NoGradGuard ng;
  const auto p = net(torch::randn({2, 1, 256, 256}));
  EXPECT_EQ(p.p3.sizes(), (std::vector<int64_t>{2, 32, 32, 32}));
  EXPECT_EQ(p.p4.sizes(), (std::vector<int64_t>{2, 32, 16, 16}));
  EXPECT_EQ(p.p5.sizes(), (std::vector<int64_t>{2, 32, 8, 8}));
  EXPECT_TRUE(torch::equal(p.level(3), p.p3));
  EXPECT_THROW(p.level(6), std::out_of_range);
}

TEST(Backbone, RejectsSizesNotDivisibleBy32) {
  auto net = Backbone(small());
  torch::NoGradGuard ng;
  EXPECT_THROW(net(torch::zeros({1, 1, 100, 128})), std::invalid_argument);
  EXPECT_THROW(net(torch::zeros({1, 1, 128, 48})), std::invalid_argument);
}

TEST(ChannelAttention, UnitGateIsIdentity) {
  auto ca = ChannelAttention(32, 16);
  ca->gate_override = 1.0;
  const auto x = torch::randn({2, 32, 5, 5});
  EXPECT_TRUE(torch::equal(ca(x), x));
}

TEST(ChannelAttention, GatesLieStrictlyInsideUnitInterval) {
  torch::manual_seed(4);
  auto ca = ChannelAttention(64, 16);
  for (int t = 0; t < 5; ++t) {
    const auto g = ca->gates(torch::randn({3, 64, 7, 7}) * 3);
    EXPECT_EQ(g.sizes(), (std::vector<int64_t>{3, 64, 1, 1}));
    EXPECT_GT(g.min().item<float>(), 0.0f);
    EXPECT_LT(g.max().item<float>(), 1.0f);
  }
}

TEST(ChannelAttention, ZeroInputMatchesScalarComputation) {
  torch::manual_seed(9);
  const int c = 8, r = 2, hidden = c / r;
  auto ca = ChannelAttention(c, r);
  const auto w1 = ca->fc1->weight.view({hidden, c}), b1 = ca->fc1->bias;
  const auto w2 = ca->fc2->weight.view({c, hidden}), b2 = ca->fc2->bias;
  const auto g = ca->gates(torch::zeros({1, c, 4, 4})).view({c});
  for (int o = 0; o < c; ++o) {
    // avg and max pooling of zero are both zero, so the MLP sees its biases.
    double z = b2[o].item<double>();
    for (int k = 0; k < hidden; ++k) z += w2[o][k].item<double>() * std::max(0.0, b1[k].item<double>());
    EXPECT_NEAR(g[o].item<double>(), 1.0 / (1.0 + std::exp(-2.0 * z)), 1e-6);
  }
}

TEST(ChannelAttention, RejectsIndivisibleReduction) {
  EXPECT_THROW(ChannelAttention(30, 16), std::invalid_argument);
}

TEST(Pyramid, TopLevelIsSmoothedLateral) {
  torch::manual_seed(2);
  auto fpn = Pyramid(std::array<int64_t, 3>{8, 16, 32}, 12);
  torch::NoGradGuard ng;
  const auto c3 = torch::randn({1, 8, 16, 16}), c4 = torch::randn({1, 16, 8, 8}), c5 = torch::randn({1, 32, 4, 4});
  const auto p = fpn(c3, c4, c5);
  EXPECT_TRUE(torch::allclose(p.p5, fpn->smooth[2](fpn->lateral[2](c5))));
  const auto m4 = fpn->lateral[1](c4) + upsample2x(fpn->lateral[2](c5));
  EXPECT_TRUE(torch::allclose(p.p4, fpn->smooth[1](m4), 1e-5, 1e-6));
}

TEST(Pyramid, ZeroFeaturesWithZeroBiasesGiveZero) {
  auto fpn = Pyramid(std::array<int64_t, 3>{8, 16, 32}, 12);
  torch::NoGradGuard ng;
  for (auto& item : fpn->named_parameters()) {
    if (item.key().find("bias") != std::string::npos) item.value().zero_();
  }
  const auto p = fpn(torch::zeros({1, 8, 16, 16}), torch::zeros({1, 16, 8, 8}), torch::zeros({1, 32, 4, 4}));
  EXPECT_EQ(p.p3.abs().max().item<float>(), 0.0f);
  EXPECT_EQ(p.p5.abs().max().item<float>(), 0.0f);
}

TEST(Pyramid, MismatchedStagesThrow) {
  auto fpn = Pyramid(std::array<int64_t, 3>{8, 16, 32}, 12);
  torch::NoGradGuard ng;
  EXPECT_THROW(fpn(torch::zeros({1, 8, 16, 16}), torch::zeros({1, 16, 6, 6}), torch::zeros({1, 32, 4, 4})),
               std::invalid_argument);
}
