#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lithohod/dataset.hpp"
#include "lithohod/losses.hpp"
#include "lithohod/matching.hpp"
#include "lithohod/model.hpp"

namespace lithohod {

/// Invalid configuration; `key()` names the offending setting.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct DataConfig {
  std::string dir = "data";
  int train_count = 500;
  int test_count = 100;
  int clip_size = 512;
  int layout_size = 1024;
  std::uint64_t seed = 1;
  std::uint64_t test_seed = 1000001;
  GenSpec gen;
  int box_size_px = 0;  // 0: 69 for clips up to 256 px, 100 above
  OracleRules rules;
};

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 50;
  double weight_decay = 0.0;
  bool augment = false;
  int log_every = 0;
};

struct LossConfig {
  FocalParams focal;
  double lambda = kDiouWeight;
  DiouDenominator diou_denominator = DiouDenominator::squared;
  double smooth_l1_beta = 1.0;
};

struct EvalConfig {
  double match_iou = 0.5;
  double operating_score = 0.5;
  PostprocessOptions post;
};

struct RunConfig {
  DataConfig data;
  LithoParams litho;
  int sim_size = 256;
  ModelOptions model;
  int input_size = 512;
  LossConfig loss;
  MatchThresholds match;
  TrainConfig train;
  EvalConfig eval;
  std::uint64_t seed = 1;
  int threads = 1;

  int box_size() const {
    if (data.box_size_px > 0) return data.box_size_px;
    return data.clip_size <= 256 ? 69 : 100;
  }

  DatasetSpec dataset_spec(bool test) const {
    DatasetSpec s;
    s.count = test ? data.test_count : data.train_count;
    s.clip_size = data.clip_size;
    s.layout_size = data.layout_size;
    s.gen = data.gen;
    s.litho = litho;
    s.rules = data.rules;
    s.rules.box_size_px = box_size();
    s.seed = test ? data.test_seed : data.seed;
    return s;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key, "cannot parse '" + s + "' as a number");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key, "expected a boolean, got '" + s + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError(key, "empty list element");
    out.push_back(parse_number<double>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

inline std::string format_list(const auto& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

struct Field {
  std::string key;  // "section.name"
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T, class Access>
Field number(std::string key, Access access) {
  return {key,
          [key, access](RunConfig& c, const std::string& s) { access(c) = parse_number<T>(key, s); },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(access(const_cast<RunConfig&>(c)));
            } else {
              return std::to_string(access(const_cast<RunConfig&>(c)));
            }
          }};
}

template <class Access>
Field boolean(std::string key, Access access) {
  return {key, [key, access](RunConfig& c, const std::string& s) { access(c) = parse_bool(key, s); },
          [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

inline const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    // run
    v.push_back(number<std::uint64_t>("run.seed", [](RunConfig& c) -> auto& { return c.seed; }));
    v.push_back(number<int>("run.threads", [](RunConfig& c) -> auto& { return c.threads; }));
    // data
    v.push_back({"data.dir", [](RunConfig& c, const std::string& s) { c.data.dir = s; },
                 [](const RunConfig& c) { return c.data.dir; }});
    v.push_back(number<int>("data.train_count", [](RunConfig& c) -> auto& { return c.data.train_count; }));
    v.push_back(number<int>("data.test_count", [](RunConfig& c) -> auto& { return c.data.test_count; }));
    v.push_back(number<int>("data.clip_size", [](RunConfig& c) -> auto& { return c.data.clip_size; }));
    v.push_back(number<int>("data.layout_size", [](RunConfig& c) -> auto& { return c.data.layout_size; }));
    v.push_back(number<std::uint64_t>("data.seed", [](RunConfig& c) -> auto& { return c.data.seed; }));
    v.push_back(number<std::uint64_t>("data.test_seed", [](RunConfig& c) -> auto& { return c.data.test_seed; }));
    v.push_back(number<int>("data.min_width", [](RunConfig& c) -> auto& { return c.data.gen.min_width; }));
    v.push_back(number<int>("data.max_width", [](RunConfig& c) -> auto& { return c.data.gen.max_width; }));
    v.push_back(number<int>("data.min_spacing", [](RunConfig& c) -> auto& { return c.data.gen.min_spacing; }));
    v.push_back(number<int>("data.max_spacing", [](RunConfig& c) -> auto& { return c.data.gen.max_spacing; }));
    v.push_back(number<double>("data.density", [](RunConfig& c) -> auto& { return c.data.gen.density; }));
    v.push_back(number<int>("data.block_size", [](RunConfig& c) -> auto& { return c.data.gen.block_size; }));
    v.push_back(number<double>("data.neck_rate", [](RunConfig& c) -> auto& { return c.data.gen.neck_rate; }));
    v.push_back(number<double>("data.bump_rate", [](RunConfig& c) -> auto& { return c.data.gen.bump_rate; }));
    v.push_back(number<double>("data.via_rate", [](RunConfig& c) -> auto& { return c.data.gen.via_rate; }));
    v.push_back(number<double>("data.pitch_nm", [](RunConfig& c) -> auto& { return c.data.gen.pitch_nm; }));
    v.push_back(number<int>("data.box_size_px", [](RunConfig& c) -> auto& { return c.data.box_size_px; }));
    v.push_back(number<int>("data.neck_width_px", [](RunConfig& c) -> auto& { return c.data.rules.neck_width_px; }));
    v.push_back(number<int>("data.bridge_gap_px", [](RunConfig& c) -> auto& { return c.data.rules.bridge_gap_px; }));
    v.push_back(number<int>("data.end_margin_px", [](RunConfig& c) -> auto& { return c.data.rules.end_margin_px; }));
    // litho
    v.push_back(number<double>("litho.blur_sigma_px", [](RunConfig& c) -> auto& { return c.litho.blur_sigma_px; }));
    v.push_back(number<double>("litho.threshold", [](RunConfig& c) -> auto& { return c.litho.threshold; }));
    v.push_back(number<double>("litho.corner_bias", [](RunConfig& c) -> auto& { return c.litho.corner_bias; }));
    v.push_back(number<int>("litho.max_radius_px", [](RunConfig& c) -> auto& { return c.litho.max_radius_px; }));
    v.push_back(number<int>("litho.sim_size", [](RunConfig& c) -> auto& { return c.sim_size; }));
    // model
    v.push_back(number<int>("model.input_size", [](RunConfig& c) -> auto& { return c.input_size; }));
    v.push_back(number<int>("model.depth", [](RunConfig& c) -> auto& { return c.model.backbone.depth; }));
    v.push_back(number<int>("model.base_width", [](RunConfig& c) -> auto& { return c.model.backbone.base_width; }));
    v.push_back(number<int>("model.pyramid_channels",
                            [](RunConfig& c) -> auto& { return c.model.backbone.pyramid_channels; }));
    v.push_back(number<int>("model.attention_reduction",
                            [](RunConfig& c) -> auto& { return c.model.backbone.attention_reduction; }));
    v.push_back(number<int64_t>("model.pyramid_inner", [](RunConfig& c) -> auto& { return c.model.pyramid_inner; }));
    v.push_back(number<int64_t>("model.cross_inner", [](RunConfig& c) -> auto& { return c.model.cross_inner; }));
    v.push_back(number<int64_t>("model.num_classes", [](RunConfig& c) -> auto& { return c.model.num_classes; }));
    v.push_back(boolean("model.detector_only", [](RunConfig& c) -> auto& { return c.model.detector_only; }));
    v.push_back(boolean("model.channel_attention",
                        [](RunConfig& c) -> auto& { return c.model.backbone.channel_attention; }));
    // anchors
    v.push_back({"anchors.base_sizes",
                 [](RunConfig& c, const std::string& s) {
                   const auto l = parse_list("anchors.base_sizes", s);
                   if (l.size() != 3) throw ConfigError("anchors.base_sizes", "expected three values");
                   std::copy(l.begin(), l.end(), c.model.anchors.base_sizes.begin());
                 },
                 [](const RunConfig& c) { return format_list(c.model.anchors.base_sizes); }});
    v.push_back({"anchors.scales",
                 [](RunConfig& c, const std::string& s) { c.model.anchors.scales = parse_list("anchors.scales", s); },
                 [](const RunConfig& c) { return format_list(c.model.anchors.scales); }});
    v.push_back({"anchors.ratios",
                 [](RunConfig& c, const std::string& s) { c.model.anchors.ratios = parse_list("anchors.ratios", s); },
                 [](const RunConfig& c) { return format_list(c.model.anchors.ratios); }});
    // loss
    v.push_back(number<double>("loss.alpha", [](RunConfig& c) -> auto& { return c.loss.focal.alpha; }));
    v.push_back(number<double>("loss.gamma", [](RunConfig& c) -> auto& { return c.loss.focal.gamma; }));
    v.push_back(number<double>("loss.lambda", [](RunConfig& c) -> auto& { return c.loss.lambda; }));
    v.push_back(number<double>("loss.smooth_l1_beta", [](RunConfig& c) -> auto& { return c.loss.smooth_l1_beta; }));
    v.push_back({"loss.diou_denominator",
                 [](RunConfig& c, const std::string& s) {
                   if (s == "squared") c.loss.diou_denominator = DiouDenominator::squared;
                   else if (s == "literal") c.loss.diou_denominator = DiouDenominator::literal;
                   else throw ConfigError("loss.diou_denominator", "expected 'squared' or 'literal'");
                 },
                 [](const RunConfig& c) {
                   return std::string(c.loss.diou_denominator == DiouDenominator::squared ? "squared" : "literal");
                 }});
    // match
    v.push_back(number<double>("match.positive_iou", [](RunConfig& c) -> auto& { return c.match.positive; }));
    v.push_back(number<double>("match.negative_iou", [](RunConfig& c) -> auto& { return c.match.negative; }));
    // train
    v.push_back(number<double>("train.lr", [](RunConfig& c) -> auto& { return c.train.lr; }));
    v.push_back(number<int>("train.batch_size", [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    v.push_back(number<int>("train.epochs", [](RunConfig& c) -> auto& { return c.train.epochs; }));
    v.push_back(number<double>("train.weight_decay", [](RunConfig& c) -> auto& { return c.train.weight_decay; }));
    v.push_back(boolean("train.augment", [](RunConfig& c) -> auto& { return c.train.augment; }));
    v.push_back(number<int>("train.log_every", [](RunConfig& c) -> auto& { return c.train.log_every; }));
    // eval
    v.push_back(number<double>("eval.match_iou", [](RunConfig& c) -> auto& { return c.eval.match_iou; }));
    v.push_back(number<double>("eval.operating_score", [](RunConfig& c) -> auto& { return c.eval.operating_score; }));
    v.push_back(number<double>("eval.nms_iou", [](RunConfig& c) -> auto& { return c.eval.post.nms_iou; }));
    v.push_back(number<double>("eval.score_floor", [](RunConfig& c) -> auto& { return c.eval.post.score_floor; }));
    v.push_back(number<int>("eval.max_detections", [](RunConfig& c) -> auto& { return c.eval.post.max_detections; }));
    v.push_back(number<int>("eval.pre_nms_top_k", [](RunConfig& c) -> auto& { return c.eval.post.pre_nms_top_k; }));
    return v;
  }();
  return f;
}

}  // namespace detail

/// Checks ranges and cross-field consistency.
inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(key, what);
  };
  need(c.threads >= 1, "run.threads", "must be >= 1");
  need(c.data.train_count > 0, "data.train_count", "must be positive");
  need(c.data.test_count > 0, "data.test_count", "must be positive");
  need(c.data.clip_size > 0 && c.data.clip_size % 32 == 0, "data.clip_size", "must be a positive multiple of 32");
  need(c.data.layout_size >= c.data.clip_size, "data.layout_size", "must be at least data.clip_size");
  need(c.data.gen.density >= 0 && c.data.gen.density <= 1, "data.density", "must lie in [0,1]");
  need(c.data.gen.min_width >= 2, "data.min_width", "must be >= 2");
  need(c.data.gen.max_width >= c.data.gen.min_width, "data.max_width", "must be >= data.min_width");
  need(c.data.gen.min_spacing >= 1, "data.min_spacing", "must be >= 1");
  need(c.data.gen.max_spacing >= c.data.gen.min_spacing, "data.max_spacing", "must be >= data.min_spacing");
  need(c.data.box_size_px >= 0 && c.data.box_size_px <= c.data.clip_size, "data.box_size_px",
       "must lie in [0, clip_size]");
  need(c.litho.blur_sigma_px > 0, "litho.blur_sigma_px", "must be positive");
  need(c.litho.threshold > 0 && c.litho.threshold < 1, "litho.threshold", "must lie in (0,1)");
  need(c.litho.max_radius_px >= 1, "litho.max_radius_px", "must be >= 1");
  need(c.sim_size > 0 && c.sim_size % 32 == 0, "litho.sim_size", "must be a positive multiple of 32");
  need(c.input_size == c.data.clip_size, "model.input_size", "must equal data.clip_size");
  need(c.input_size % std::min(c.input_size, c.sim_size) == 0, "litho.sim_size",
       "must divide model.input_size");
  const auto& b = c.model.backbone;
  need(b.depth == 18 || b.depth == 34 || b.depth == 50, "model.depth", "must be 18, 34 or 50");
  need(b.base_width >= 1, "model.base_width", "must be positive");
  need(b.pyramid_channels >= 1, "model.pyramid_channels", "must be positive");
  const int c5 = b.base_width * 8 * (b.depth == 50 ? 4 : 1);
  need(b.attention_reduction >= 1 && c5 % b.attention_reduction == 0, "model.attention_reduction",
       "must divide the C5 channel count");
  need(c.model.num_classes >= 1, "model.num_classes", "must be positive");
  need(c.model.pyramid_inner >= 1, "model.pyramid_inner", "must be positive");
  need(c.model.cross_inner >= 1, "model.cross_inner", "must be positive");
  for (double s : c.model.anchors.scales) need(s > 0, "anchors.scales", "must be positive");
  for (double r : c.model.anchors.ratios) need(r > 0, "anchors.ratios", "must be positive");
  for (double s : c.model.anchors.base_sizes) need(s > 0, "anchors.base_sizes", "must be positive");
  need(c.loss.focal.alpha >= 0 && c.loss.focal.alpha <= 1, "loss.alpha", "must lie in [0,1]");
  need(c.loss.focal.gamma >= 0, "loss.gamma", "must be >= 0");
  need(c.loss.lambda >= 0, "loss.lambda", "must be >= 0");
  need(c.loss.smooth_l1_beta > 0, "loss.smooth_l1_beta", "must be positive");
  need(c.match.negative <= c.match.positive, "match.negative_iou", "must not exceed match.positive_iou");
  need(c.train.lr > 0, "train.lr", "must be positive");
  need(c.train.batch_size >= 1, "train.batch_size", "must be >= 1");
  need(c.train.epochs >= 0, "train.epochs", "must be >= 0");
  need(c.eval.match_iou >= 0 && c.eval.match_iou < 1, "eval.match_iou", "must lie in [0,1)");
  need(c.eval.post.score_floor >= 0 && c.eval.post.score_floor < 1, "eval.score_floor", "must lie in [0,1)");
  need(c.eval.post.max_detections >= 1, "eval.max_detections", "must be >= 1");
}

/// Sets one "section.name" key; unknown keys are rejected.
inline void set_key(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : detail::fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

/// Applies "section.name=value".
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "expected key=value");
  set_key(c, assignment.substr(0, eq), assignment.substr(eq + 1));
}

inline void apply_ini(RunConfig& c, std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("<file>", e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "keys must live inside a [section]");
    for (const auto& [name, value] : body) set_key(c, section + "." + name, value.data());
  }
}

inline void apply_ini_file(RunConfig& c, const std::filesystem::path& path) {
  require_file(path);
  std::ifstream f(path);
  apply_ini(c, f);
}

/// Honors LITHOHOD_SEED for run.seed.
inline void apply_environment(RunConfig& c) {
  if (const char* s = std::getenv("LITHOHOD_SEED"); s && *s) set_key(c, "run.seed", s);
}

/// Every key with its resolved value, grouped by section in a fixed order.
inline std::string to_ini(const RunConfig& c) {
  std::string out, section;
  for (const auto& f : detail::fields()) {
    const auto dot = f.key.find('.');
    const auto sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(c) + "\n";
  }
  return out;
}

inline RunConfig from_ini_string(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  apply_ini(c, in);
  return c;
}

}  // namespace lithohod
