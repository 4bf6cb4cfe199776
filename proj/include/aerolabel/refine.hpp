#pragma once

#include "aerolabel/image.hpp"
#include "aerolabel/masks.hpp"

namespace aerolabel {

/// What pixels outside every mask become.
enum class Fallback { KeepProjected, Unlabeled };

/// Masks are applied largest first (ties by position in the set); each sets
/// its pixels to the most frequent projected value inside it, ties to the
/// smallest value. Modes are taken over `projected`, not the partial output.
LabelImage refine(const LabelImage& projected, const MaskSet& masks, Fallback fallback = Fallback::KeepProjected);

}  // namespace aerolabel
