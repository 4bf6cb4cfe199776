#include "aerolabel/refine.hpp"

#include <algorithm>
#include <numeric>

#include "aerolabel/error.hpp"

namespace aerolabel {

LabelImage refine(const LabelImage& projected, const MaskSet& masks, Fallback fallback) {
  if (!masks.masks.empty() && (masks.width != projected.width || masks.height != projected.height))
    throw DataError("mask set is " + std::to_string(masks.width) + "x" + std::to_string(masks.height) +
                    " but the label image is " + std::to_string(projected.width) + "x" +
                    std::to_string(projected.height));
  LabelImage out = fallback == Fallback::KeepProjected ? projected
                                                       : LabelImage(projected.width, projected.height, kUnlabeled);
  std::vector<std::size_t> order(masks.masks.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return masks.masks[a].area > masks.masks[b].area; });
  std::vector<std::uint32_t> hist(65536, 0);
  std::vector<std::uint16_t> touched;
  for (std::size_t mi : order) {
    const auto pixels = rle_pixels(masks.masks[mi].counts, masks.width, masks.height);
    if (pixels.empty()) continue;
    touched.clear();
    for (auto p : pixels) {
      const std::uint16_t l = projected.data[p];
      if (hist[l]++ == 0) touched.push_back(l);
    }
    std::uint16_t best = touched.front();
    for (auto l : touched)
      if (hist[l] > hist[best] || (hist[l] == hist[best] && l < best)) best = l;
    for (auto l : touched) hist[l] = 0;
    for (auto p : pixels) out.data[p] = best;
  }
  return out;
}

}  // namespace aerolabel
