#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lithohod/checkpoint.hpp"
#include "lithohod/config.hpp"
#include "lithohod/dataset.hpp"
#include "lithohod/evaluation.hpp"
#include "lithohod/losses.hpp"
#include "lithohod/matching.hpp"
#include "lithohod/model.hpp"

namespace lithohod {

// ---------------------------------------------------------------------------
// Targets and loss
// ---------------------------------------------------------------------------

struct AnchorTargets {
  torch::Tensor labels;      // [N] int64: class id, kLabelNegative or kLabelIgnored
  torch::Tensor positives;   // [P] int64 anchor indices
  torch::Tensor deltas;      // [P, 4] normalized regression targets
  torch::Tensor gt_boxes;    // [P, 4]
};

inline AnchorTargets build_targets(const std::vector<AnchorBox>& anchors, const torch::Tensor& anchor_boxes,
                                   const std::vector<HotspotBox>& gts, const MatchThresholds& t) {
  const auto m = match_anchors(anchors, gts, t);
  const auto n = static_cast<int64_t>(anchors.size());
  AnchorTargets out;
  out.labels = torch::full({n}, kLabelNegative, torch::kLong);
  auto lab = out.labels.accessor<int64_t, 1>();
  for (int64_t i = 0; i < n; ++i) {
    const int a = m.assignment[i];
    if (a == kIgnored) lab[i] = kLabelIgnored;
    else if (a >= 0) lab[i] = gts[a].class_id;
  }
  const auto p = static_cast<int64_t>(m.positives.size());
  out.positives = torch::empty({p}, torch::kLong);
  out.gt_boxes = torch::empty({p, 4}, anchor_boxes.options());
  for (int64_t k = 0; k < p; ++k) {
    const auto i = m.positives[k];
    out.positives[k] = static_cast<int64_t>(i);
    const auto& g = gts[m.assignment[i]];
    out.gt_boxes[k] = torch::tensor({g.x1, g.y1, g.x2, g.y2}, anchor_boxes.options());
  }
  const auto pa = anchor_boxes.index_select(0, out.positives);
  out.deltas = encode_boxes(pa, out.gt_boxes) / delta_std(anchor_boxes.options());
  return out;
}

struct LossTerms {
  torch::Tensor focal, box_reg, diou, total;
  int64_t num_positive = 0;
  int64_t num_negative = 0;

  LossBreakdown breakdown() const {
    LossBreakdown b{focal.item<double>(), box_reg.item<double>(), diou.item<double>(), total.item<double>(), 0, 0};
    b.num_positive = num_positive;
    b.num_negative = num_negative;
    return b;
  }
};

/// Weighted training objective over a batch of per-image targets.
inline LossTerms detection_loss(const HeadOutputs& out, const std::vector<AnchorTargets>& targets,
                                const torch::Tensor& anchor_boxes, const LossConfig& lc) {
  const auto b = out.cls_logits.size(0);
  const auto k = out.cls_logits.size(2);
  std::vector<torch::Tensor> labels, pred_deltas, tgt_deltas, pred_boxes, gt_boxes;
  LossTerms t;
  const auto std4 = delta_std(out.deltas.options());
  for (int64_t i = 0; i < b; ++i) {
    const auto& tg = targets[i];
    labels.push_back(tg.labels);
    t.num_positive += tg.positives.size(0);
    t.num_negative += tg.labels.eq(kLabelNegative).sum().item<int64_t>();
    auto d = out.deltas[i].index_select(0, tg.positives);
    pred_deltas.push_back(d);
    tgt_deltas.push_back(tg.deltas.to(d.dtype()));
    pred_boxes.push_back(decode_deltas(anchor_boxes.index_select(0, tg.positives).to(d.dtype()), d * std4));
    gt_boxes.push_back(tg.gt_boxes.to(d.dtype()));
  }
  const auto probs = torch::sigmoid(out.cls_logits).reshape({-1, k});
  t.focal = focal_loss(probs, torch::cat(labels), lc.focal);
  t.box_reg = smooth_l1(torch::cat(pred_deltas), torch::cat(tgt_deltas), lc.smooth_l1_beta);
  t.diou = diou_loss(torch::cat(pred_boxes), torch::cat(gt_boxes), lc.diou_denominator);
  t.total = total_loss(t.focal, t.box_reg, t.diou, lc.lambda);
  return t;
}

// ---------------------------------------------------------------------------
// Augmentation: the eight axis-aligned symmetries of the square clip
// ---------------------------------------------------------------------------

struct Symmetry {
  bool flip_x = false;
  bool flip_y = false;
  bool transpose = false;
};

/// Applies the symmetry to image [1,S,S], deformation [3,D,D] and boxes.
inline void apply_symmetry(const Symmetry& s, torch::Tensor& image, torch::Tensor& deformation,
                           std::vector<HotspotBox>& boxes, int size) {
  if (s.transpose) {
    image = image.transpose(1, 2);
    deformation = torch::stack({deformation[1], deformation[0], deformation[2]}).transpose(1, 2);
    for (auto& b : boxes) b = {b.y1, b.x1, b.y2, b.x2, b.class_id, b.score};
  }
  if (s.flip_x) {
    image = image.flip({2});
    deformation = torch::stack({-deformation[0], deformation[1], deformation[2]}).flip({2});
    for (auto& b : boxes) b = {size - b.x2, b.y1, size - b.x1, b.y2, b.class_id, b.score};
  }
  if (s.flip_y) {
    image = image.flip({1});
    deformation = torch::stack({deformation[0], -deformation[1], deformation[2]}).flip({1});
    for (auto& b : boxes) b = {b.x1, size - b.y2, b.x2, size - b.y1, b.class_id, b.score};
  }
  image = image.contiguous();
  deformation = deformation.contiguous();
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double focal = 0, box_reg = 0, diou = 0, total = 0;
  double seconds = 0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  HotspotDetector model{nullptr};
  std::vector<EpochLog> log;
  double seconds = 0;
};

inline HotspotDetector build_model(const RunConfig& cfg) {
  torch::manual_seed(cfg.seed);
  return HotspotDetector(cfg.model);
}

inline void configure_threads(const RunConfig& cfg) {
  torch::set_num_threads(cfg.threads);
}

inline std::string loss_log_csv(const std::vector<EpochLog>& log) {
  std::string s = "epoch,focal,box_reg,diou,total,seconds\n";
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.focal, e.box_reg, e.diou, e.total,
                  e.seconds);
    s += buf;
  }
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
};

/// Minimizes the detection objective with Adam. With `out_dir` set, the
/// checkpoint (after every epoch), loss log and config snapshot are written
/// there; on a non-finite loss the previous checkpoint is left in place and
/// TrainingDiverged is thrown.
inline TrainResult train_model(const RunConfig& cfg, const std::vector<Sample>& data,
                               const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                               const TrainHooks& hooks = {}) {
  validate(cfg);
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  configure_threads(cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto snapshot = to_ini(cfg);
  TrainResult r;
  r.model = build_model(cfg);
  r.model->train();
  torch::optim::Adam opt(r.model->parameters(),
                         torch::optim::AdamOptions(cfg.train.lr).weight_decay(cfg.train.weight_decay));
  const auto anchors = generate_anchors(cfg.input_size, cfg.input_size, cfg.model.anchors);
  const auto anchor_list = anchors.flat();
  const auto anchor_boxes = anchors.tensor();

  std::vector<AnchorTargets> cached;
  if (!cfg.train.augment) {
    for (const auto& s : data) cached.push_back(build_targets(anchor_list, anchor_boxes, s.boxes, cfg.match));
  }

  std::filesystem::path ckpt;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "config.ini", snapshot);
    ckpt = *out_dir / "checkpoint.bin";
    save_checkpoint(ckpt, *r.model, snapshot);
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg.train.batch_size);
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog e;
    e.epoch = epoch;
    int batches = 0;
    for (std::size_t first = 0; first < order.size(); first += bs) {
      const auto last = std::min(order.size(), first + bs);
      std::vector<torch::Tensor> images, defs;
      std::vector<AnchorTargets> targets;
      for (std::size_t i = first; i < last; ++i) {
        const auto& s = data[order[i]];
        if (cfg.train.augment) {
          auto img = s.image, def = s.deformation;
          auto boxes = s.boxes;
          const auto bits = rng();
          apply_symmetry({bool(bits & 1), bool(bits & 2), bool(bits & 4)}, img, def, boxes, cfg.input_size);
          images.push_back(img);
          defs.push_back(def);
          targets.push_back(build_targets(anchor_list, anchor_boxes, boxes, cfg.match));
        } else {
          images.push_back(s.image);
          defs.push_back(s.deformation);
          targets.push_back(cached[order[i]]);
        }
      }
      const auto out = r.model(torch::stack(images), torch::stack(defs));
      auto loss = detection_loss(out, targets, anchor_boxes, cfg.loss);
      const double total = loss.total.item<double>();
      if (!std::isfinite(total)) {
        if (out_dir) write_text(*out_dir / "loss_log.csv", loss_log_csv(r.log));
        throw TrainingDiverged("train: non-finite loss in epoch " + std::to_string(epoch) +
                               "; last finite checkpoint kept");
      }
      opt.zero_grad();
      loss.total.backward();
      opt.step();
      e.focal += loss.focal.item<double>();
      e.box_reg += loss.box_reg.item<double>();
      e.diou += loss.diou.item<double>();
      e.total += total;
      ++batches;
    }
    e.focal /= batches;
    e.box_reg /= batches;
    e.diou /= batches;
    e.total /= batches;
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.log.push_back(e);
    if (out_dir) {
      save_checkpoint(ckpt, *r.model, snapshot);
      write_text(*out_dir / "loss_log.csv", loss_log_csv(r.log));
    }
    if (hooks.on_epoch) hooks.on_epoch(e);
  }
  r.model->eval();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

/// Rebuilds the model described by a checkpoint's config snapshot and loads its weights.
inline std::pair<HotspotDetector, RunConfig> load_model(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  const auto cfg = from_ini_string(ck.config_ini);
  auto model = HotspotDetector(cfg.model);
  load_state(*model, ck);
  model->eval();
  return {model, cfg};
}

// ---------------------------------------------------------------------------
// Inference and evaluation
// ---------------------------------------------------------------------------

inline std::vector<Detection> detect(HotspotDetector& model, const std::vector<Sample>& samples, int input_size,
                                     const AnchorConfig& anchor_cfg, const PostprocessOptions& pp,
                                     int batch_size = 4) {
  torch::NoGradGuard ng;
  model->eval();
  const auto anchors = generate_anchors(input_size, input_size, anchor_cfg);
  const auto anchor_boxes = anchors.tensor();
  std::vector<Detection> dets;
  for (std::size_t first = 0; first < samples.size(); first += batch_size) {
    const auto last = std::min(samples.size(), first + static_cast<std::size_t>(batch_size));
    std::vector<torch::Tensor> images, defs;
    for (std::size_t i = first; i < last; ++i) {
      if (samples[i].image.size(1) != input_size || samples[i].image.size(2) != input_size) {
        throw std::invalid_argument("detect: clip " + samples[i].id + " does not match the model input size");
      }
      images.push_back(samples[i].image);
      defs.push_back(samples[i].deformation);
    }
    const auto out = model(torch::stack(images), torch::stack(defs));
    for (std::size_t i = first; i < last; ++i) {
      const auto j = static_cast<int64_t>(i - first);
      auto d = postprocess(out.cls_logits[j], out.deltas[j], anchors, anchor_boxes, input_size, input_size,
                           samples[i].id, pp);
      dets.insert(dets.end(), d.begin(), d.end());
    }
  }
  return dets;
}

inline EvalReport evaluate_model(HotspotDetector& model, const RunConfig& model_cfg,
                                 const std::vector<Sample>& samples, const EvalConfig& ec) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto t0 = std::chrono::steady_clock::now();
  const auto dets = detect(model, samples, model_cfg.input_size, model_cfg.model.anchors, ec.post,
                           model_cfg.train.batch_size);
  auto r = evaluate_detections(dets, ground_truth(samples), {ec.match_iou, ec.operating_score});
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline nlohmann::ordered_json detection_json(const Detection& d) {
  nlohmann::ordered_json j;
  j["clip_id"] = d.clip_id;
  j["x1"] = d.box.x1;
  j["y1"] = d.box.y1;
  j["x2"] = d.box.x2;
  j["y2"] = d.box.y2;
  j["class_id"] = d.box.class_id;
  j["score"] = d.box.score;
  return j;
}

inline Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  d.clip_id = j.at("clip_id").get<std::string>();
  d.box = {j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
           j.at("y2").get<double>(), j.at("class_id").get<int>(), j.at("score").get<double>()};
  return d;
}

inline void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (const auto& d : dets) f << detection_json(d).dump() << '\n';
}

inline std::vector<Detection> read_detections(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream f(path);
  std::vector<Detection> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(detection_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace lithohod
