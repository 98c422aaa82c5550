#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lithohod {

/// Dense row-major 2-D grid. Row index is y, column index is x.
template <class T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width) {
    if (height < 0 || width < 0) {
      throw std::invalid_argument("Grid: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool contains(int y, int x) const {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool same_shape(const auto& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

/// Binary raster; every value is 0 or 1.
using Raster = Grid<std::uint8_t>;

inline bool is_binary(const Raster& raster) {
  return std::ranges::all_of(raster.values(), [](std::uint8_t v) { return v <= 1; });
}

inline std::size_t count_foreground(const Raster& raster) {
  return static_cast<std::size_t>(std::ranges::count(raster.values(), std::uint8_t{1}));
}

inline Raster crop(const Raster& src, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > src.height() || x0 + width > src.width()) {
    throw std::invalid_argument("crop: window outside source");
  }
  Raster out(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out(y, x) = src(y0 + y, x0 + x);
  }
  return out;
}

template <class A, class B>
void require_same_shape(const A& a, const B& b, const std::string& what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument(what + ": shape mismatch");
  }
}

}  // namespace lithohod
