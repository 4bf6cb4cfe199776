#pragma once

#include "aerolabel/image.hpp"

namespace aerolabel {

/// Linear-interpolated percentile (q in [0, 100]) of the pixel values.
double percentile(const ImageU16& img, double q);

/// Clips to [p_lo, p_hi] and rescales linearly to 0..255 (rounded). A
/// constant image (p_lo == p_hi) maps to all 128.
ImageU8 rescale_percentile(const ImageU16& raw, double lo = 2.0, double hi = 98.0);

struct ClaheOptions {
  int tiles_x = 8;
  int tiles_y = 8;
  /// Fraction of a tile's pixel count, floored at one pixel.
  double clip_limit = 0.02;
};

/// Contrast-limited adaptive histogram equalization with bilinear blending
/// between tile mappings.
ImageU8 clahe(const ImageU8& img, const ClaheOptions& options = {});

/// Percentile rescale then CLAHE; a constant input yields all 128.
ImageU8 preprocess_thermal(const ImageU16& raw, const ClaheOptions& options = {});

}  // namespace aerolabel
