#pragma once

#include <png.h>
#include <torch/torch.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lithohod/evaluation.hpp"
#include "lithohod/grid.hpp"
#include "lithohod/hotspot_oracle.hpp"
#include "lithohod/layout_synth.hpp"
#include "lithohod/litho_proxy.hpp"

namespace lithohod {

namespace fs = std::filesystem;

/// Raised for absent input files so callers can tell them apart from bad content.
class MissingFile : public std::runtime_error {
 public:
  explicit MissingFile(const fs::path& p) : std::runtime_error("file not found: " + p.string()) {}
};

inline void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw MissingFile(p);
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

/// 8-bit grayscale PNG.
inline void write_gray_png(const fs::path& path, const Grid<std::uint8_t>& pixels) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(pixels.width());
  img.height = static_cast<png_uint_32>(pixels.height());
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.values().data(), 0, nullptr)) {
    throw std::runtime_error("write_png: " + path.string() + ": " + img.message);
  }
}

inline Grid<std::uint8_t> read_gray_png(const fs::path& path) {
  require_file(path);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  Grid<std::uint8_t> out(static_cast<int>(img.height), static_cast<int>(img.width));
  if (!png_image_finish_read(&img, nullptr, out.values().data(), 0, nullptr)) {
    throw std::runtime_error("read_png: " + path.string() + ": " + img.message);
  }
  return out;
}

/// Binary raster stored as 0/255.
inline void write_raster_png(const fs::path& path, const Raster& r) {
  Grid<std::uint8_t> px(r.height(), r.width());
  for (std::size_t i = 0; i < r.size(); ++i) px.values()[i] = r.values()[i] ? 255 : 0;
  write_gray_png(path, px);
}

inline Raster read_raster_png(const fs::path& path) {
  auto px = read_gray_png(path);
  for (auto& v : px.values()) v = v >= 128 ? 1 : 0;
  return px;
}

// ---------------------------------------------------------------------------
// Deformation file: "LHDEFORM", u32 H, u32 W, then dx, dy, magnitude planes
// as little-endian float32, row-major.
// ---------------------------------------------------------------------------

inline constexpr char kDeformationMagic[8] = {'L', 'H', 'D', 'E', 'F', 'O', 'R', 'M'};

inline void write_deformation(const fs::path& path, const DeformationMap& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_deformation: cannot open " + path.string());
  const std::uint32_t h = m.height(), w = m.width();
  f.write(kDeformationMagic, 8);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(&w), 4);
  for (const auto* g : {&m.dx, &m.dy, &m.magnitude}) {
    f.write(reinterpret_cast<const char*>(g->values().data()), static_cast<std::streamsize>(g->size() * 4));
  }
  if (!f) throw std::runtime_error("write_deformation: write failed for " + path.string());
}

inline DeformationMap read_deformation(const fs::path& path) {
  require_file(path);
  std::ifstream f(path, std::ios::binary);
  char magic[8];
  std::uint32_t h = 0, w = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&h), 4);
  f.read(reinterpret_cast<char*>(&w), 4);
  if (!f || std::memcmp(magic, kDeformationMagic, 8) != 0) {
    throw std::runtime_error("read_deformation: bad header in " + path.string());
  }
  DeformationMap m{Grid<float>(h, w), Grid<float>(h, w), Grid<float>(h, w), false};
  for (auto* g : {&m.dx, &m.dy, &m.magnitude}) {
    f.read(reinterpret_cast<char*>(g->values().data()), static_cast<std::streamsize>(g->size() * 4));
  }
  if (!f) throw std::runtime_error("read_deformation: truncated " + path.string());
  return m;
}

// ---------------------------------------------------------------------------
// Annotations: one JSON object per line
//   {"id", "clip_size", "pitch_nm", "boxes": [[x1,y1,x2,y2,class_id], ...]}
// ---------------------------------------------------------------------------

struct Annotation {
  std::string id;
  int clip_size = 0;
  double pitch_nm = 1.0;
  std::vector<HotspotBox> boxes;
};

inline nlohmann::ordered_json to_json(const Annotation& a) {
  nlohmann::ordered_json j;
  j["id"] = a.id;
  j["clip_size"] = a.clip_size;
  j["pitch_nm"] = a.pitch_nm;
  auto& boxes = j["boxes"] = nlohmann::ordered_json::array();
  for (const auto& b : a.boxes) boxes.push_back({b.x1, b.y1, b.x2, b.y2, b.class_id});
  return j;
}

inline Annotation annotation_from_json(const nlohmann::json& j) {
  Annotation a;
  a.id = j.at("id").get<std::string>();
  a.clip_size = j.at("clip_size").get<int>();
  a.pitch_nm = j.value("pitch_nm", 1.0);
  for (const auto& b : j.at("boxes")) {
    if (b.size() != 5) throw std::runtime_error("annotation " + a.id + ": box must have 5 entries");
    a.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>(),
                       b[4].get<int>(), 1.0});
  }
  return a;
}

inline std::vector<Annotation> read_annotations(const fs::path& path) {
  require_file(path);
  std::ifstream f(path);
  std::vector<Annotation> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(annotation_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

inline void write_annotations(const fs::path& path, const std::vector<Annotation>& anns) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_annotations: cannot open " + path.string());
  for (const auto& a : anns) f << to_json(a).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

struct DatasetSpec {
  int count = 500;
  int clip_size = 512;
  int layout_size = 1024;
  GenSpec gen;
  LithoParams litho;
  OracleRules rules;
  std::uint64_t seed = 1;
};

/// Layouts are generated one after another (seed, seed+1, ...) and tiled
/// into disjoint clips until `count` clips exist. Each clip is simulated on
/// its own and labelled by the oracle.
inline std::vector<Annotation> generate_dataset(const fs::path& dir, const DatasetSpec& spec) {
  if (spec.count <= 0) throw std::invalid_argument("generate_dataset: count must be positive");
  fs::create_directories(dir / "clips");
  const LithoSimulator sim(spec.litho);
  std::vector<Annotation> anns;
  for (std::uint64_t k = 0; static_cast<int>(anns.size()) < spec.count; ++k) {
    GenSpec g = spec.gen;
    g.height = g.width = spec.layout_size;
    g.seed = spec.seed + k;
    auto layout = generate_layout(g);
    layout.id = "layout" + std::to_string(k);
    for (auto& clip : clip_dataset(layout, ClipMode::tiling, spec.clip_size, 0, 0)) {
      if (static_cast<int>(anns.size()) >= spec.count) break;
      const auto res = sim.simulate(clip);
      Annotation a{clip.id, spec.clip_size, clip.pitch_nm, hotspot_oracle(clip, res.resist, spec.rules)};
      write_raster_png(dir / "clips" / (clip.id + ".png"), clip.raster);
      anns.push_back(std::move(a));
    }
  }
  write_annotations(dir / "annotations.jsonl", anns);
  return anns;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct Sample {
  std::string id;
  Raster raster;
  std::vector<HotspotBox> boxes;
  torch::Tensor image;        // [1, S, S] float in {0, 1}
  torch::Tensor deformation;  // [3, D, D]
};

/// (dx, dy, magnitude) at `size`; larger maps are block-averaged and their
/// displacements rescaled to the new pixel pitch.
inline torch::Tensor deformation_tensor(const DeformationMap& m, int size) {
  const int h = m.height(), w = m.width();
  if (h != w || size <= 0 || h % size != 0) {
    throw std::invalid_argument("deformation_tensor: map must be square with size dividing it");
  }
  const ChannelStack pooled = pool_deformation(m, size, size);
  const float scale = static_cast<float>(size) / static_cast<float>(h);
  auto t = torch::empty({3, size, size}, torch::kFloat32);
  for (int c = 0; c < 3; ++c) {
    std::memcpy(t[c].data_ptr<float>(), pooled[c].values().data(), sizeof(float) * pooled[c].size());
  }
  return scale == 1.0f ? t : t * scale;
}

inline torch::Tensor raster_tensor(const Raster& r) {
  auto t = torch::empty({1, r.height(), r.width()}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::size_t i = 0; i < r.size(); ++i) p[i] = r.values()[i];
  return t;
}

inline Sample make_sample(std::string id, Raster raster, std::vector<HotspotBox> boxes, const LithoSimulator& sim,
                          int sim_size) {
  Sample s;
  s.id = std::move(id);
  s.raster = std::move(raster);
  s.boxes = std::move(boxes);
  s.image = raster_tensor(s.raster);
  s.deformation = deformation_tensor(sim.simulate(s.raster).deformation, std::min(sim_size, s.raster.height()));
  return s;
}

/// Reads `dir/annotations.jsonl` and the referenced clips; the deformation
/// feature of every clip is recomputed by the simulator.
inline std::vector<Sample> load_dataset(const fs::path& dir, const LithoParams& litho, int sim_size) {
  const auto anns = read_annotations(dir / "annotations.jsonl");
  if (anns.empty()) throw std::runtime_error("load_dataset: no clips in " + dir.string());
  const LithoSimulator sim(litho);
  std::vector<Sample> out;
  out.reserve(anns.size());
  for (const auto& a : anns) {
    auto r = read_raster_png(dir / "clips" / (a.id + ".png"));
    if (r.height() != a.clip_size || r.width() != a.clip_size) {
      throw std::runtime_error("load_dataset: clip " + a.id + " does not match its clip_size");
    }
    out.push_back(make_sample(a.id, std::move(r), a.boxes, sim, sim_size));
  }
  return out;
}

inline GroundTruth ground_truth(const std::vector<Sample>& samples) {
  GroundTruth g;
  for (const auto& s : samples) g[s.id] = s.boxes;
  return g;
}

}  // namespace lithohod
