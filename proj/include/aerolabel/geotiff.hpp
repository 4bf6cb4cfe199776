#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "aerolabel/raster.hpp"

namespace aerolabel {

/// Pixel window for partial reads. Chunks (strips or tiles) that do not
/// intersect the window are never decompressed.
struct Window {
  int col = 0;
  int row = 0;
  int width = 0;
  int height = 0;
};

struct GeoTiffReadOptions {
  std::optional<Window> window;
};

enum class TiffCompression { None, Deflate };
enum class TiffInterleave { Pixel, Planar };

struct GeoTiffWriteOptions {
  TiffCompression compression = TiffCompression::Deflate;
  TiffInterleave interleave = TiffInterleave::Pixel;
  int rows_per_strip = 0;  // 0 picks ~8 KiB strips
};

/// Classic (non-Big) TIFF in either byte order, strip or tile layout, no or
/// deflate compression, uint8/uint16/int16/float32 samples, pixel or planar
/// interleave. Georeferencing comes from ModelPixelScale + ModelTiepoint and
/// EPSG geokeys; rasters without geokeys must use the sidecar format.
Raster read_geotiff(const std::filesystem::path& path, const GeoTiffReadOptions& options = {});
Raster decode_geotiff(std::span<const std::uint8_t> bytes, const GeoTiffReadOptions& options = {});

/// Little-endian, strip layout. Rotated or south-up transforms are rejected.
void write_geotiff(const Raster& r, const std::filesystem::path& path, const GeoTiffWriteOptions& options = {});
std::vector<std::uint8_t> encode_geotiff(const Raster& r, const GeoTiffWriteOptions& options = {});

/// Sidecar format: `<name>.hdr` (UTF-8 key=value lines) describing a raw
/// little-endian band-major payload `<name>.raw`.
void write_sidecar(const Raster& r, const std::filesystem::path& header_path);
Raster read_sidecar(const std::filesystem::path& header_path);

/// Dispatches on extension: .hdr -> sidecar, anything else -> GeoTIFF.
Raster read_raster(const std::filesystem::path& path);
void write_raster(const Raster& r, const std::filesystem::path& path);

/// Multi-band float32 logits, one band per class, preserved unnormalized.
Raster read_logits(const std::filesystem::path& path, int num_classes);

/// Per-pixel softmax across bands (numerically stabilized).
Raster softmax_bands(const Raster& logits);

/// Per-pixel argmax across bands (ties -> lowest band) as a uint8 label raster.
Raster argmax_bands(const Raster& r);

}  // namespace aerolabel
