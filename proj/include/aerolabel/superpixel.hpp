#pragma once

#include <cstdint>

#include "aerolabel/image.hpp"
#include "aerolabel/masks.hpp"

namespace aerolabel {

struct SlicOptions {
  int n_segments = 100;
  double compactness = 10.0;
  int iterations = 10;
};

/// Segment ids 0..k-1 in raster order of first appearance. Gray levels are
/// compared as CIELAB lightness (0..100) of the equivalent sRGB gray; the
/// spatial term is weighted by compactness / S with S = sqrt(W*H / n_segments).
/// Components under half the nominal segment area are absorbed by a
/// neighbour, so every segment is 4-connected.
Image<std::int32_t> slic_segments(const ImageU8& img, const SlicOptions& options = {});
MaskSet slic(const ImageU8& img, const SlicOptions& options = {});

struct FelzenszwalbOptions {
  double scale = 1e4;
  /// Gaussian pre-smoothing; 0 disables it.
  double sigma = 0.8;
  int min_size = 20;
};

Image<std::int32_t> felzenszwalb_segments(const ImageU8& img, const FelzenszwalbOptions& options = {});
MaskSet felzenszwalb(const ImageU8& img, const FelzenszwalbOptions& options = {});

/// Renumbers ids to 0..k-1 in raster order of first appearance.
void compact_segment_ids(Image<std::int32_t>& segments);

}  // namespace aerolabel
