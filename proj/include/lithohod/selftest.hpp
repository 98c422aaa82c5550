#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lithohod/cmf_fusion.hpp"
#include "lithohod/heads_anchors.hpp"
#include "lithohod/losses.hpp"
#include "lithohod/matching.hpp"

namespace lithohod::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Largest relative error between autograd and central differences of `f`
/// with respect to every element of `inputs` (float64).
inline double gradient_error(const std::function<torch::Tensor()>& f, const std::vector<torch::Tensor>& inputs,
                             double h = 1e-6) {
  for (const auto& x : inputs) {
    if (x.grad().defined()) x.grad().zero_();
  }
  f().backward();
  double worst = 0;
  torch::NoGradGuard ng;
  for (const auto& x : inputs) {
    const auto g = x.grad().clone();
    auto flat = x.view({-1});
    auto gflat = g.view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      flat[i] = orig + h;
      const double up = f().item<double>();
      flat[i] = orig - h;
      const double down = f().item<double>();
      flat[i] = orig;
      const double numeric = (up - down) / (2 * h);
      const double analytic = gflat[i].item<double>();
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  return worst;
}

inline torch::Tensor random_boxes(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> pos(0, extent), size(1, extent / 2);
  auto t = torch::empty({n, 4}, torch::kFloat64);
  for (int i = 0; i < n; ++i) {
    const double x = pos(rng), y = pos(rng);
    t[i][0] = x;
    t[i][1] = y;
    t[i][2] = x + size(rng);
    t[i][3] = y + size(rng);
  }
  return t;
}

inline CheckResult check_gradients(int trials = 5) {
  std::mt19937_64 rng(7);
  torch::manual_seed(7);
  double worst = 0;
  for (int t = 0; t < trials; ++t) {
    auto probs = torch::rand({6, 2}, torch::kFloat64).mul(0.9).add(0.05).requires_grad_(true);
    auto labels = torch::tensor({0, 1, -1, -2, 1, -1}, torch::kLong);
    worst = std::max(worst, gradient_error([&] { return focal_loss(probs, labels); }, {probs}));

    auto v = torch::randn({5, 4}, torch::kFloat64).requires_grad_(true);
    auto vg = torch::randn({5, 4}, torch::kFloat64);
    {
      torch::NoGradGuard ng;
      auto d = (v - vg).abs();
      v.add_(torch::where((d - 1).abs() < 0.05, torch::full_like(d, 0.2), torch::zeros_like(d)));
    }
    worst = std::max(worst, gradient_error([&] { return smooth_l1(v, vg); }, {v}));

    auto b = random_boxes(rng, 4, 20).requires_grad_(true);
    auto bg = random_boxes(rng, 4, 20);
    worst = std::max(worst, gradient_error([&] { return diou_loss(b, bg); }, {b}));
  }
  {
    auto cmf = Cmf(FusionOptions{3, 8, 4, 4});
    cmf->to(torch::kFloat64);
    auto de = torch::randn({1, 3, 8, 8}, torch::kFloat64);
    auto py = torch::randn({1, 8, 4, 4}, torch::kFloat64);
    std::vector<torch::Tensor> params;
    for (auto& p : cmf->parameters()) params.push_back(p);
    worst = std::max(worst, gradient_error([&] { return cmf(de, py).pow(2).sum(); }, params));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max rel err %.3g", worst);
  return {"gradients", worst < 1e-4, buf};
}

inline CheckResult check_attention_normalization() {
  torch::manual_seed(11);
  double worst = 0;
  double min_w = 1;
  auto record = [&](const torch::Tensor& beta) {
    worst = std::max(worst, (beta.sum(1) - 1).abs().max().item<double>());
    min_w = std::min(min_w, beta.min().item<double>());
  };
  auto sa_de = SelfAttention(3, 3, 3);
  auto sa_py = SelfAttention(16, 4, 16);
  auto xa = CrossAttention(CrossAttentionOptions{3, 16, 8});
  for (int t = 0; t < 10; ++t) {
    auto de = torch::randn({2, 3, 8, 8});
    auto py = torch::randn({2, 16, 8, 8});
    record(sa_de->weights(de));
    record(sa_py->weights(py));
    record(xa->weights(de, py));
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |sum-1| %.3g, min weight %.3g", worst, min_w);
  return {"attention normalization", worst <= 1e-5 && min_w > 0, buf};
}

inline CheckResult check_loss_scalars() {
  auto p1 = torch::tensor({{0.5}}, torch::kFloat64);
  auto p2 = torch::tensor({{0.9}}, torch::kFloat64);
  const double f1 = focal_loss(p1, torch::tensor({0}, torch::kLong)).item<double>();
  const double f2 = focal_loss(p2, torch::tensor({-1}, torch::kLong)).item<double>();
  auto z = torch::zeros({1, 4}, torch::kFloat64);
  const double s1 = smooth_l1(z + 0.5, z).item<double>();
  const double s2 = smooth_l1(z + 2.0, z).item<double>();
  const double d1 = diou_loss(HotspotBox{0, 0, 1, 1}, HotspotBox{2, 0, 3, 1});
  const double d2 = diou_loss(HotspotBox{0, 0, 2, 2}, HotspotBox{0.5, 0.5, 1.5, 1.5});
  const bool ok = std::abs(f1 - 0.25 * 0.25 * std::log(2.0)) < 1e-4 &&
                  std::abs(f2 - 0.75 * 0.81 * std::log(10.0)) < 1e-4 && std::abs(s1 - 0.125) < 1e-4 &&
                  std::abs(s2 - 1.5) < 1e-4 && std::abs(d1 - 1.4) < 1e-4 && std::abs(d2 - 0.75) < 1e-4;
  char buf[160];
  std::snprintf(buf, sizeof buf, "focal %.5f %.5f, smooth-l1 %.4f %.4f, diou %.4f %.4f", f1, f2, s1, s2, d1, d2);
  return {"loss scalars", ok, buf};
}

/// NMS against an exhaustive search for the unique subset that is closed
/// under the greedy rule.
inline CheckResult check_nms(int trials = 50) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  int mismatches = 0;
  for (int t = 0; t < trials; ++t) {
    const int n = 8;
    std::vector<Detection> dets(n);
    for (int i = 0; i < n; ++i) {
      const double x = u(rng) * 20, y = u(rng) * 20;
      dets[i].box = {x, y, x + 5 + u(rng) * 10, y + 5 + u(rng) * 10, int(u(rng) * 2), 0.01 + u(rng)};
    }
    const auto got = nms(dets, 0.4, 0.0);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dets[a].box.score > dets[b].box.score; });
    std::vector<int> want;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      bool consistent = true;
      for (int r = 0; r < n && consistent; ++r) {
        const int i = order[r];
        bool suppressed = false;
        for (int q = 0; q < r; ++q) {
          const int j = order[q];
          if ((mask >> j & 1) && dets[j].box.class_id == dets[i].box.class_id && iou(dets[j].box, dets[i].box) > 0.4) {
            suppressed = true;
          }
        }
        consistent = bool(mask >> i & 1) == !suppressed;
      }
      if (consistent) {
        for (int r = 0; r < n; ++r) {
          if (mask >> order[r] & 1) want.push_back(order[r]);
        }
        break;
      }
    }
    bool same = got.size() == want.size();
    for (std::size_t k = 0; same && k < got.size(); ++k) same = got[k].box == dets[want[k]].box;
    mismatches += !same;
  }
  return {"nms oracle", mismatches == 0, std::to_string(mismatches) + " mismatches"};
}

inline CheckResult check_matching(int trials = 10) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  int disagreements = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<AnchorBox> anchors(200);
    for (auto& a : anchors) {
      const double x = u(rng) * 100, y = u(rng) * 100, w = 5 + u(rng) * 40, h = 5 + u(rng) * 40;
      a = {x, y, x + w, y + h};
    }
    std::vector<HotspotBox> gts(1 + t % 3);
    for (auto& g : gts) {
      const double x = u(rng) * 100, y = u(rng) * 100;
      g = {x, y, x + 10 + u(rng) * 30, y + 10 + u(rng) * 30, 0, 1.0};
    }
    const auto m = match_anchors(anchors, gts);
    std::vector<double> best(anchors.size(), 0);
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      for (const auto& g : gts) best[i] = std::max(best[i], anchor_iou(anchors[i], g));
    }
    const bool any_pos = std::ranges::any_of(best, [](double v) { return v > 0.5; });
    const auto top = std::ranges::max_element(best) - best.begin();
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      int want = best[i] > 0.5 ? 1 : best[i] < 0.3 ? -1 : 0;
      if (!any_pos && static_cast<std::ptrdiff_t>(i) == top && best[i] > 0.3) want = 1;
      const int got = m.assignment[i] >= 0 ? 1 : m.assignment[i] == kNegative ? -1 : 0;
      disagreements += want != got;
    }
  }
  return {"matching oracle", disagreements == 0, std::to_string(disagreements) + " disagreements"};
}

inline std::vector<CheckResult> run_all() {
  return {check_loss_scalars(), check_gradients(), check_attention_normalization(), check_nms(), check_matching()};
}

}  // namespace lithohod::selftest
