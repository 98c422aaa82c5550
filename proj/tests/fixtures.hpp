#pragma once

#include <filesystem>
#include <string>

#include "lithohod/config.hpp"

namespace fixture {

/// A configuration small enough to train in seconds: 128 px clips, an
/// 18-layer backbone of width 8 and 32-channel pyramid.
inline lithohod::RunConfig tiny_config(const std::filesystem::path& data_dir) {
  lithohod::RunConfig c;
  c.data.dir = data_dir.string();
  c.data.train_count = 8;
  c.data.test_count = 4;
  c.data.clip_size = 128;
  c.data.layout_size = 256;
  c.data.box_size_px = 32;
  c.data.gen.neck_rate = 0.4;
  c.data.gen.bump_rate = 0.4;
  c.sim_size = 64;
  c.input_size = 128;
  c.model.backbone.depth = 18;
  c.model.backbone.base_width = 8;
  c.model.backbone.pyramid_channels = 32;
  c.model.backbone.attention_reduction = 8;
  c.model.pyramid_inner = 8;
  c.model.cross_inner = 8;
  c.model.anchors.base_sizes = {16, 32, 64};
  c.train.lr = 1e-3;
  c.train.batch_size = 2;
  c.train.epochs = 2;
  return c;
}

/// A fresh directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("lithohod_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixture
