#pragma once

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "lithohod/checkpoint.hpp"
#include "lithohod/config.hpp"
#include "lithohod/dataset.hpp"
#include "lithohod/evaluation.hpp"
#include "lithohod/selftest.hpp"
#include "lithohod/train.hpp"

namespace lithohod::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingFile = 3;

/// Renders the TPR-FA curve as a grayscale PNG (x: FA / FA_max, y: TPR).
inline void plot_curve(const fs::path& path, const EvalReport& r, int width = 480, int height = 360) {
  Grid<std::uint8_t> img(height, width, 255);
  const int m = 30;
  auto px = [&](double fx, double fy) {
    return std::pair<int, int>{m + static_cast<int>(std::lround(fx * (width - 2 * m))),
                               height - m - static_cast<int>(std::lround(fy * (height - 2 * m)))};
  };
  auto line = [&](std::pair<int, int> a, std::pair<int, int> b, std::uint8_t v) {
    const int steps = std::max(std::abs(b.first - a.first), std::abs(b.second - a.second)) + 1;
    for (int i = 0; i <= steps; ++i) {
      const int x = a.first + (b.first - a.first) * i / steps;
      const int y = a.second + (b.second - a.second) * i / steps;
      if (img.contains(y, x)) img(y, x) = v;
    }
  };
  line(px(0, 0), px(1, 0), 0);
  line(px(0, 0), px(0, 1), 0);
  line(px(0, 1), px(1, 1), 200);
  line(px(1, 0), px(1, 1), 200);
  int fa_max = 0;
  for (const auto& p : r.curve) fa_max = std::max(fa_max, p.fa);
  auto prev = px(0, 0);
  for (const auto& p : r.curve) {
    const auto cur = px(fa_max > 0 ? double(p.fa) / fa_max : 1.0, p.tpr);
    line(prev, cur, 40);
    prev = cur;
  }
  write_gray_png(path, img);
}

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

inline void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "INI config file");
  cmd->add_option("--set", c.overrides, "override as section.key=value (repeatable)");
}

inline RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) apply_ini_file(cfg, c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  apply_environment(cfg);
  validate(cfg);
  return cfg;
}

inline int cmd_gen_data(const Common& common, const std::string& out_arg) {
  const auto cfg = resolve(common);
  const fs::path out = out_arg.empty() ? fs::path(cfg.data.dir) : fs::path(out_arg);
  fs::create_directories(out);
  write_text(out / "config.ini", to_ini(cfg));
  for (const bool test : {false, true}) {
    const auto anns = generate_dataset(out / (test ? "test" : "train"), cfg.dataset_spec(test));
    std::size_t boxes = 0;
    for (const auto& a : anns) boxes += a.boxes.size();
    std::printf("%s: %zu clips, %zu hotspots\n", test ? "test" : "train", anns.size(), boxes);
  }
  return kExitOk;
}

inline int cmd_litho_sim(const Common& common, const std::string& input, const std::string& resist,
                         const std::string& deformation, const std::string& aerial) {
  const auto cfg = resolve(common);
  const auto raster = read_raster_png(input);
  const auto res = LithoSimulator(cfg.litho).simulate(raster);
  write_raster_png(resist, res.resist);
  write_deformation(deformation, res.deformation);
  if (!aerial.empty()) {
    Grid<std::uint8_t> px(res.aerial.height(), res.aerial.width());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px.values()[i] = static_cast<std::uint8_t>(std::lround(res.aerial.values()[i] * 255.0f));
    }
    write_gray_png(aerial, px);
  }
  if (res.deformation.capped) std::fprintf(stderr, "warning: some displacements hit the search radius\n");
  return kExitOk;
}

inline fs::path split_dir(const RunConfig& cfg, const std::string& arg, const char* split) {
  return arg.empty() ? fs::path(cfg.data.dir) / split : fs::path(arg);
}

inline int cmd_train(const Common& common, const std::string& data_arg, const std::string& out) {
  const auto cfg = resolve(common);
  configure_threads(cfg);
  const auto data = load_dataset(split_dir(cfg, data_arg, "train"), cfg.litho, cfg.sim_size);
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochLog& e) {
    std::printf("epoch %d  total %.5f  focal %.5f  box %.5f  diou %.5f  (%.1fs)\n", e.epoch, e.total, e.focal,
                e.box_reg, e.diou, e.seconds);
    std::fflush(stdout);
  };
  const auto r = train_model(cfg, data, fs::path(out), hooks);
  std::printf("trained %zu clips in %.1fs -> %s\n", data.size(), r.seconds, (fs::path(out) / "checkpoint.bin").c_str());
  return kExitOk;
}

inline int cmd_eval(const Common& common, const std::string& checkpoint, const std::string& detections,
                    const std::string& data_arg, const std::string& out, bool plot) {
  auto cfg = resolve(common);
  EvalReport report;
  if (!detections.empty()) {
    const auto dir = split_dir(cfg, data_arg, "test");
    GroundTruth gts;
    for (const auto& a : read_annotations(dir / "annotations.jsonl")) gts[a.id] = a.boxes;
    const auto t0 = std::chrono::steady_clock::now();
    report = evaluate_detections(read_detections(detections), gts, {cfg.eval.match_iou, cfg.eval.operating_score});
    report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    auto [model, model_cfg] = load_model(checkpoint);
    configure_threads(cfg);
    const auto samples = load_dataset(split_dir(cfg, data_arg, "test"), model_cfg.litho, model_cfg.sim_size);
    report = evaluate_model(model, model_cfg, samples, cfg.eval);
  }
  fs::create_directories(out);
  write_text(fs::path(out) / "report.json", to_json(report).dump(2) + "\n");
  write_text(fs::path(out) / "curve.csv", curve_csv(report));
  write_text(fs::path(out) / "runtime.json",
             nlohmann::ordered_json{{"runtime_s", report.runtime_s}}.dump(2) + "\n");
  write_text(fs::path(out) / "config.ini", to_ini(cfg));
  if (plot) plot_curve(fs::path(out) / "curve.png", report);
  std::printf("recall %.4f  fa %d  fn %d  ap %.4f  auc %.4f\n", report.recall, report.fa, report.fn, report.ap,
              report.auc);
  return kExitOk;
}

inline int cmd_detect(const Common& common, const std::string& checkpoint, const std::string& data_arg,
                      const std::vector<std::string>& clips, const std::string& out) {
  const auto cfg = resolve(common);
  auto [model, model_cfg] = load_model(checkpoint);
  configure_threads(cfg);
  std::vector<Sample> samples;
  if (!clips.empty()) {
    const LithoSimulator sim(model_cfg.litho);
    for (const auto& c : clips) {
      samples.push_back(make_sample(fs::path(c).stem().string(), read_raster_png(c), {}, sim, model_cfg.sim_size));
    }
  } else {
    samples = load_dataset(split_dir(cfg, data_arg, "test"), model_cfg.litho, model_cfg.sim_size);
  }
  const auto dets = detect(model, samples, model_cfg.input_size, model_cfg.model.anchors, cfg.eval.post,
                           model_cfg.train.batch_size);
  write_detections(out, dets);
  std::printf("%zu detections over %zu clips -> %s\n", dets.size(), samples.size(), out.c_str());
  return kExitOk;
}

inline int cmd_selftest() {
  bool ok = true;
  for (const auto& r : selftest::run_all()) {
    std::printf("[%s] %s: %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitFailure;
}

inline int run(int argc, char** argv) {
  CLI::App app{"Lithography hotspot detection with deformation-guided fusion"};
  app.require_subcommand(1);
  Common common;

  std::string out, data, checkpoint, detections, input, resist, deformation, aerial;
  std::vector<std::string> clips;
  bool plot = false;

  auto* gen = app.add_subcommand("gen-data", "generate train/test clip datasets");
  add_common(gen, common);
  gen->add_option("--out", out, "dataset root (default: data.dir)");

  auto* sim = app.add_subcommand("litho-sim", "simulate one clip");
  add_common(sim, common);
  sim->add_option("--input", input, "clip PNG")->required();
  sim->add_option("--resist", resist, "output resist PNG")->required();
  sim->add_option("--deformation", deformation, "output deformation file")->required();
  sim->add_option("--aerial", aerial, "output aerial image PNG");

  auto* train = app.add_subcommand("train", "train a detector");
  add_common(train, common);
  train->add_option("--data", data, "training split (default: data.dir/train)");
  train->add_option("--out", out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a detection file");
  add_common(eval, common);
  auto* ck_opt = eval->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* det_opt = eval->add_option("--detections", detections, "detection JSONL");
  ck_opt->excludes(det_opt);
  eval->add_option("--data", data, "test split (default: data.dir/test)");
  eval->add_option("--out", out, "output directory")->required();
  eval->add_flag("--plot", plot, "also write curve.png");

  auto* det = app.add_subcommand("detect", "write detections for clips");
  add_common(det, common);
  det->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  det->add_option("--data", data, "dataset split (default: data.dir/test)");
  det->add_option("--clip", clips, "clip PNG (repeatable; overrides --data)");
  det->add_option("--out", out, "output JSONL")->required();

  auto* self = app.add_subcommand("selftest", "run gradient, normalization and oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out);
    if (sim->parsed()) return cmd_litho_sim(common, input, resist, deformation, aerial);
    if (train->parsed()) return cmd_train(common, data, out);
    if (eval->parsed()) {
      if (checkpoint.empty() && detections.empty()) {
        std::fprintf(stderr, "error: eval needs --checkpoint or --detections\n");
        return kExitConfig;
      }
      return cmd_eval(common, checkpoint, detections, data, out, plot);
    }
    if (det->parsed()) return cmd_detect(common, checkpoint, data, clips, out);
    if (self->parsed()) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const MissingFile& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitMissingFile;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace lithohod::cli
