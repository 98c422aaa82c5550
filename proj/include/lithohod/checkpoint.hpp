#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "lithohod/dataset.hpp"

namespace lithohod {

// Layout (little-endian):
//   "LHODCKPT" | u32 schema | u64 len, config INI text
//   u64 count | count x { u32 name_len, name, u32 ndim, i64 dims[ndim], f32 data }
inline constexpr char kCheckpointMagic[8] = {'L', 'H', 'O', 'D', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointSchema = 1;

struct Checkpoint {
  std::string config_ini;
  std::map<std::string, torch::Tensor> tensors;  // parameters and buffers by qualified name
};

namespace detail {

template <class T>
void put(std::ostream& o, const T& v) {
  o.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline std::string get_string(std::istream& in, std::uint64_t n) {
  if (n > (1ull << 32)) throw std::runtime_error("checkpoint: corrupt string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace detail

/// Named parameters and buffers of a module, in registration order.
inline std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value());
  for (const auto& b : m.named_buffers()) out.emplace_back(b.key(), b.value());
  return out;
}

/// Writes to `path.tmp` and renames, so a crash never leaves a torn file.
inline void save_checkpoint(const std::filesystem::path& path, const torch::nn::Module& model,
                            const std::string& config_ini) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream o(tmp, std::ios::binary);
    if (!o) throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    o.write(kCheckpointMagic, 8);
    detail::put(o, kCheckpointSchema);
    detail::put(o, static_cast<std::uint64_t>(config_ini.size()));
    o.write(config_ini.data(), static_cast<std::streamsize>(config_ini.size()));
    const auto state = named_state(model);
    detail::put(o, static_cast<std::uint64_t>(state.size()));
    for (const auto& [name, t] : state) {
      detail::put(o, static_cast<std::uint32_t>(name.size()));
      o.write(name.data(), static_cast<std::streamsize>(name.size()));
      detail::put(o, static_cast<std::uint32_t>(t.dim()));
      for (const auto d : t.sizes()) detail::put(o, static_cast<std::int64_t>(d));
      const auto f = t.detach().to(torch::kFloat32).contiguous();
      o.write(reinterpret_cast<const char*>(f.data_ptr<float>()), static_cast<std::streamsize>(f.numel() * 4));
    }
    if (!o) throw std::runtime_error("save_checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("read_checkpoint: not a checkpoint: " + path.string());
  }
  const auto schema = detail::get<std::uint32_t>(in);
  if (schema != kCheckpointSchema) {
    throw std::runtime_error("read_checkpoint: unsupported schema " + std::to_string(schema));
  }
  Checkpoint ck;
  ck.config_ini = detail::get_string(in, detail::get<std::uint64_t>(in));
  const auto count = detail::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = detail::get_string(in, detail::get<std::uint32_t>(in));
    const auto ndim = detail::get<std::uint32_t>(in);
    if (ndim > 8) throw std::runtime_error("read_checkpoint: corrupt tensor rank");
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = detail::get<std::int64_t>(in);
    auto t = torch::empty(dims, torch::kFloat32);
    in.read(reinterpret_cast<char*>(t.data_ptr<float>()), static_cast<std::streamsize>(t.numel() * 4));
    if (!in) throw std::runtime_error("read_checkpoint: truncated tensor " + name);
    ck.tensors.emplace(name, t);
  }
  return ck;
}

/// Copies every stored tensor into the module; names and shapes must match exactly.
inline void load_state(torch::nn::Module& model, const Checkpoint& ck) {
  torch::NoGradGuard ng;
  const auto state = named_state(model);
  if (state.size() != ck.tensors.size()) {
    throw std::runtime_error("load_state: checkpoint holds " + std::to_string(ck.tensors.size()) +
                             " tensors, model has " + std::to_string(state.size()));
  }
  for (const auto& [name, t] : state) {
    const auto it = ck.tensors.find(name);
    if (it == ck.tensors.end()) throw std::runtime_error("load_state: missing tensor " + name);
    if (it->second.sizes() != t.sizes()) throw std::runtime_error("load_state: shape mismatch for " + name);
    t.copy_(it->second.to(t.dtype()));
  }
}

}  // namespace lithohod
