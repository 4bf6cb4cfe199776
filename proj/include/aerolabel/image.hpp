#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "aerolabel/error.hpp"

namespace aerolabel {

/// Row-major single-channel image in camera (pixel) space.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 0 || h < 0) throw DataError("image dimensions must be non-negative");
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <typename U>
  bool same_shape(const Image<U>& o) const { return width == o.width && height == o.height; }

  friend bool operator==(const Image&, const Image&) = default;
};

using LabelImage = Image<std::uint16_t>;
using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using DepthImage = Image<double>;

/// Sentinel for pixels without a class: uncovered by the renderer, left
/// unlabeled by refinement, or excluded from scoring.
inline constexpr std::uint16_t kUnlabeled = 255;

}  // namespace aerolabel
