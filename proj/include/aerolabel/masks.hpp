#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aerolabel/image.hpp"

namespace aerolabel {

/// Uncompressed COCO-style RLE: run lengths over the column-major pixel
/// order, alternating background/foreground and starting with background
/// (a leading run may be 0).
struct Mask {
  std::vector<std::uint32_t> counts;
  std::size_t area = 0;
  std::optional<double> score;
};

struct MaskSet {
  int width = 0;
  int height = 0;
  std::vector<Mask> masks;
  /// Declared by the producer; refinement accepts overlapping masks either way.
  bool overlapping = true;

  /// Throws DataError on empty masks, run sums != width*height, or area mismatch.
  void validate() const;
};

std::vector<std::uint32_t> rle_encode(const ImageU8& binary);
/// Pixel indices (row-major, ascending) covered by `counts`.
std::vector<std::uint32_t> rle_pixels(const std::vector<std::uint32_t>& counts, int width, int height);
ImageU8 rle_decode(const std::vector<std::uint32_t>& counts, int width, int height);

Mask make_mask(const ImageU8& binary, std::optional<double> score = std::nullopt);

/// One mask per distinct segment id, ordered by id. Negative ids are skipped.
MaskSet masks_from_segments(const Image<std::int32_t>& segments);

std::string masks_to_json(const MaskSet& set);
MaskSet masks_from_json(const std::string& text);
void save_masks(const std::filesystem::path& path, const MaskSet& set);
MaskSet load_masks(const std::filesystem::path& path);

}  // namespace aerolabel
