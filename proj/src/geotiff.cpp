#include "aerolabel/geotiff.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "aerolabel/error.hpp"

namespace aerolabel {
namespace {

enum Tag : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kPhotometric = 262,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kPlanarConfig = 284,
  kPredictor = 317,
  kTileWidth = 322,
  kTileLength = 323,
  kTileOffsets = 324,
  kTileByteCounts = 325,
  kExtraSamples = 338,
  kSampleFormat = 339,
  kModelPixelScale = 33550,
  kModelTiepoint = 33922,
  kGeoKeyDirectory = 34735,
  kGdalNodata = 42113,
};

enum FieldType : std::uint16_t {
  kByte = 1,
  kAscii = 2,
  kShort = 3,
  kLong = 4,
  kRational = 5,
  kDouble = 12,
};

std::size_t field_size(std::uint16_t type) {
  switch (type) {
    case kByte:
    case kAscii: return 1;
    case kShort: return 2;
    case kLong: return 4;
    case kRational:
    case kDouble: return 8;
    default: return 0;
  }
}

// Bounds-checked view over the file; every read past the end throws.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, bool little) : bytes_(bytes), little_(little) {}

  std::span<const std::uint8_t> slice(std::uint64_t offset, std::uint64_t length) const {
    if (offset > bytes_.size() || length > bytes_.size() - offset)
      throw DataError("TIFF: read of " + std::to_string(length) + " bytes at offset " + std::to_string(offset) +
                      " runs past end of file (" + std::to_string(bytes_.size()) + " bytes)");
    return bytes_.subspan(offset, length);
  }

  std::uint16_t u16(std::uint64_t off) const {
    const auto s = slice(off, 2);
    return little_ ? static_cast<std::uint16_t>(s[0] | (s[1] << 8)) : static_cast<std::uint16_t>((s[0] << 8) | s[1]);
  }
  std::uint32_t u32(std::uint64_t off) const {
    const auto s = slice(off, 4);
    if (little_) return s[0] | (s[1] << 8) | (s[2] << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
    return (static_cast<std::uint32_t>(s[0]) << 24) | (s[1] << 16) | (s[2] << 8) | s[3];
  }
  double f64(std::uint64_t off) const {
    const auto s = slice(off, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      const int shift = little_ ? 8 * i : 8 * (7 - i);
      v |= static_cast<std::uint64_t>(s[i]) << shift;
    }
    return std::bit_cast<double>(v);
  }

  std::size_t size() const { return bytes_.size(); }
  bool little() const { return little_; }

 private:
  std::span<const std::uint8_t> bytes_;
  bool little_;
};

struct Entry {
  std::uint16_t tag = 0;
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::uint64_t value_offset = 0;  // absolute offset of the value bytes
};

std::vector<double> read_numbers(const ByteReader& br, const Entry& e) {
  const std::size_t sz = field_size(e.type);
  if (sz == 0 || e.type == kAscii)
    throw DataError("TIFF: tag " + std::to_string(e.tag) + " has unsupported field type " + std::to_string(e.type));
  br.slice(e.value_offset, static_cast<std::uint64_t>(e.count) * sz);
  std::vector<double> out(e.count);
  for (std::uint32_t i = 0; i < e.count; ++i) {
    const std::uint64_t off = e.value_offset + static_cast<std::uint64_t>(i) * sz;
    switch (e.type) {
      case kByte: out[i] = br.slice(off, 1)[0]; break;
      case kShort: out[i] = br.u16(off); break;
      case kLong: out[i] = br.u32(off); break;
      case kRational: {
        const double den = br.u32(off + 4);
        out[i] = den == 0 ? 0.0 : br.u32(off) / den;
        break;
      }
      case kDouble: out[i] = br.f64(off); break;
      default: break;
    }
  }
  return out;
}

std::string read_ascii(const ByteReader& br, const Entry& e) {
  if (e.type != kAscii) throw DataError("TIFF: tag " + std::to_string(e.tag) + " must be ASCII");
  const auto s = br.slice(e.value_offset, e.count);
  std::string out(s.begin(), s.end());
  while (!out.empty() && out.back() == '\0') out.pop_back();
  return out;
}

std::optional<double> parse_double(std::string text) {
  text.erase(0, text.find_first_not_of(" \t"));
  text.erase(text.find_last_not_of(" \t") + 1);
  if (text.empty()) return std::nullopt;
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

SampleType sample_type_for(int bits, int format) {
  if (format == 1 && bits == 8) return SampleType::UInt8;
  if (format == 1 && bits == 16) return SampleType::UInt16;
  if (format == 2 && bits == 16) return SampleType::Int16;
  if (format == 3 && bits == 32) return SampleType::Float32;
  throw DataError("TIFF: unsupported sample format (SampleFormat tag 339 = " + std::to_string(format) +
                  ", BitsPerSample tag 258 = " + std::to_string(bits) +
                  "); supported: uint8, uint16, int16, float32");
}

double decode_sample(const std::uint8_t* p, SampleType t, bool little) {
  auto load = [&](int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(p[i]) << (little ? 8 * i : 8 * (n - 1 - i));
    return v;
  };
  switch (t) {
    case SampleType::UInt8: return p[0];
    case SampleType::UInt16: return static_cast<std::uint16_t>(load(2));
    case SampleType::Int16: return static_cast<std::int16_t>(static_cast<std::uint16_t>(load(2)));
    case SampleType::Float32: return std::bit_cast<float>(load(4));
  }
  return 0;
}

void encode_sample(double v, SampleType t, std::uint8_t* p) {
  std::uint32_t bits = 0;
  int n = static_cast<int>(sample_bytes(t));
  switch (t) {
    case SampleType::UInt8: bits = static_cast<std::uint8_t>(v); break;
    case SampleType::UInt16: bits = static_cast<std::uint16_t>(v); break;
    case SampleType::Int16: bits = static_cast<std::uint16_t>(static_cast<std::int16_t>(v)); break;
    case SampleType::Float32: bits = std::bit_cast<std::uint32_t>(static_cast<float>(v)); break;
  }
  for (int i = 0; i < n; ++i) p[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

std::vector<std::uint8_t> inflate_chunk(std::span<const std::uint8_t> in, std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) throw DataError("TIFF: zlib initialisation failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = Z_OK;
  while (zs.avail_out > 0) {
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc == Z_STREAM_END) break;
    if (rc != Z_OK) {
      inflateEnd(&zs);
      throw DataError("TIFF: corrupt deflate stream");
    }
  }
  const std::size_t produced = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (produced < expected)
    throw DataError("TIFF: deflate chunk decoded to " + std::to_string(produced) + " bytes, expected " +
                    std::to_string(expected));
  return out;
}

std::vector<std::uint8_t> deflate_chunk(std::span<const std::uint8_t> in) {
  uLongf bound = compressBound(static_cast<uLong>(in.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
    throw DataError("TIFF: deflate compression failed");
  out.resize(bound);
  return out;
}

struct GeoKeys {
  int model_type = 0;
  int raster_type = 1;
  int geographic_cs = 0;
  int projected_cs = 0;
};

GeoKeys parse_geokeys(const std::vector<double>& v) {
  if (v.size() < 4) throw DataError("TIFF: GeoKeyDirectory (tag 34735) is truncated");
  GeoKeys g;
  const std::size_t n = static_cast<std::size_t>(v[3]);
  if (v.size() < 4 + 4 * n) throw DataError("TIFF: GeoKeyDirectory declares more keys than it holds");
  for (std::size_t i = 0; i < n; ++i) {
    const int key = static_cast<int>(v[4 + 4 * i]);
    const int location = static_cast<int>(v[5 + 4 * i]);
    const int value = static_cast<int>(v[7 + 4 * i]);
    if (location != 0) continue;  // values stored in other tags are not needed
    switch (key) {
      case 1024: g.model_type = value; break;
      case 1025: g.raster_type = value; break;
      case 2048: g.geographic_cs = value; break;
      case 3072: g.projected_cs = value; break;
      default: break;
    }
  }
  return g;
}

Crs crs_from_geokeys(const GeoKeys& g) {
  switch (g.model_type) {
    case 1:
      if (g.projected_cs == 0) throw DataError("TIFF: projected model without ProjectedCSTypeGeoKey (3072)");
      return Crs::from_epsg(g.projected_cs);
    case 2:
      if (g.geographic_cs != 4326)
        throw DataError("TIFF: geographic model requires GeographicTypeGeoKey 4326, found " +
                        std::to_string(g.geographic_cs));
      return Crs::wgs84();
    case 32767: return Crs::local();
    default:
      throw DataError("TIFF: unsupported GTModelTypeGeoKey " + std::to_string(g.model_type) +
                      "; use the sidecar format (.hdr) for this raster");
  }
}

}  // namespace

Raster decode_geotiff(std::span<const std::uint8_t> bytes, const GeoTiffReadOptions& options) {
  if (bytes.size() < 8) throw DataError("TIFF: file too small for a header");
  bool little = false;
  if (bytes[0] == 'I' && bytes[1] == 'I') {
    little = true;
  } else if (bytes[0] == 'M' && bytes[1] == 'M') {
    little = false;
  } else {
    throw DataError("TIFF: bad byte-order mark");
  }
  const ByteReader br(bytes, little);
  const std::uint16_t magic = br.u16(2);
  if (magic == 43) throw DataError("TIFF: BigTIFF is not supported");
  if (magic != 42) throw DataError("TIFF: bad magic number " + std::to_string(magic));

  // Walk the IFD chain, rejecting cycles; only the first IFD carries data.
  const std::uint32_t first_ifd = br.u32(4);
  std::map<std::uint16_t, Entry> entries;
  {
    std::set<std::uint32_t> visited;
    std::uint32_t ifd = first_ifd;
    bool first = true;
    while (ifd != 0) {
      if (!visited.insert(ifd).second) throw DataError("TIFF: cyclic IFD chain");
      if (visited.size() > 4096) throw DataError("TIFF: too many IFDs");
      const std::uint16_t n = br.u16(ifd);
      br.slice(ifd + 2, static_cast<std::uint64_t>(n) * 12 + 4);
      for (std::uint16_t i = 0; first && i < n; ++i) {
        const std::uint64_t off = ifd + 2 + static_cast<std::uint64_t>(i) * 12;
        Entry e;
        e.tag = br.u16(off);
        e.type = br.u16(off + 2);
        e.count = br.u32(off + 4);
        const std::size_t sz = field_size(e.type);
        const std::uint64_t total = static_cast<std::uint64_t>(e.count) * (sz == 0 ? 1 : sz);
        e.value_offset = total <= 4 ? off + 8 : br.u32(off + 8);
        entries[e.tag] = e;
      }
      first = false;
      ifd = br.u32(ifd + 2 + static_cast<std::uint64_t>(n) * 12);
    }
  }

  auto has = [&](std::uint16_t tag) { return entries.count(tag) > 0; };
  auto numbers = [&](std::uint16_t tag) { return read_numbers(br, entries.at(tag)); };
  auto scalar = [&](std::uint16_t tag, double fallback) -> double {
    if (!has(tag)) return fallback;
    const auto v = numbers(tag);
    if (v.empty()) throw DataError("TIFF: tag " + std::to_string(tag) + " has zero count");
    return v[0];
  };

  if (!has(kImageWidth) || !has(kImageLength)) throw DataError("TIFF: missing ImageWidth/ImageLength");
  const double wd = scalar(kImageWidth, 0), hd = scalar(kImageLength, 0);
  const double sppd = scalar(kSamplesPerPixel, 1);
  if (!(wd >= 1 && hd >= 1 && sppd >= 1) || wd > 1e6 || hd > 1e6 || sppd > 4096)
    throw DataError("TIFF: invalid image dimensions");
  const int width = static_cast<int>(wd), height = static_cast<int>(hd), spp = static_cast<int>(sppd);

  const int compression = static_cast<int>(scalar(kCompression, 1));
  if (compression != 1 && compression != 8 && compression != 32946)
    throw DataError("TIFF: unsupported compression (tag 259 = " + std::to_string(compression) +
                    "); supported: 1 (none), 8/32946 (deflate)");
  const int predictor = static_cast<int>(scalar(kPredictor, 1));
  if (predictor != 1) throw DataError("TIFF: unsupported predictor (tag 317 = " + std::to_string(predictor) + ")");
  const int planar = static_cast<int>(scalar(kPlanarConfig, 1));
  if (planar != 1 && planar != 2)
    throw DataError("TIFF: invalid PlanarConfiguration (tag 284 = " + std::to_string(planar) + ")");

  std::vector<double> bits = has(kBitsPerSample) ? numbers(kBitsPerSample) : std::vector<double>{1};
  std::vector<double> fmts = has(kSampleFormat) ? numbers(kSampleFormat) : std::vector<double>{1};
  if (bits.empty() || fmts.empty()) throw DataError("TIFF: empty BitsPerSample/SampleFormat");
  for (double b : bits)
    if (b != bits[0]) throw DataError("TIFF: mixed BitsPerSample across bands is unsupported");
  for (double f : fmts)
    if (f != fmts[0]) throw DataError("TIFF: mixed SampleFormat across bands is unsupported");
  const SampleType stype = sample_type_for(static_cast<int>(bits[0]), static_cast<int>(fmts[0]));
  const std::size_t bps = sample_bytes(stype);

  // Decoded size is bounded by the deflate expansion limit, so hostile
  // headers cannot request absurd allocations.
  const double decoded = static_cast<double>(width) * height * spp * bps;
  if (decoded > 1032.0 * static_cast<double>(bytes.size()) + (1 << 20) || decoded > 4.0e9)
    throw DataError("TIFF: declared image size is inconsistent with the file size");

  if (!has(kGeoKeyDirectory))
    throw DataError("TIFF: missing GeoKeyDirectory (tag 34735); write a sidecar (.hdr) header for this raster");
  if (!has(kModelPixelScale) || !has(kModelTiepoint))
    throw DataError("TIFF: missing ModelPixelScale (33550) or ModelTiepoint (33922); use the sidecar format");
  const GeoKeys keys = parse_geokeys(numbers(kGeoKeyDirectory));
  const Crs crs = crs_from_geokeys(keys);
  const auto scale = numbers(kModelPixelScale);
  const auto tie = numbers(kModelTiepoint);
  if (scale.size() < 2 || tie.size() < 6) throw DataError("TIFF: truncated pixel scale / tiepoint");
  if (!(scale[0] > 0 && scale[1] > 0) || !std::isfinite(scale[0]) || !std::isfinite(scale[1]))
    throw DataError("TIFF: ModelPixelScale components must be strictly positive");

  GeoTransform gt;
  gt.pixel_width = scale[0];
  gt.pixel_height = -scale[1];
  gt.origin_x = tie[3] - tie[0] * scale[0];
  gt.origin_y = tie[4] + tie[1] * scale[1];
  if (keys.raster_type == 2) {  // PixelIsPoint: tiepoint refers to the pixel center
    gt.origin_x -= 0.5 * gt.pixel_width;
    gt.origin_y -= 0.5 * gt.pixel_height;
  }

  std::optional<double> nodata;
  if (has(kGdalNodata)) {
    nodata = parse_double(read_ascii(br, entries.at(kGdalNodata)));
    if (!nodata) throw DataError("TIFF: unparsable GDAL_NODATA value");
  }

  Window win{0, 0, width, height};
  if (options.window) {
    win = *options.window;
    if (win.col < 0 || win.row < 0 || win.width < 1 || win.height < 1 || win.col + win.width > width ||
        win.row + win.height > height)
      throw DataError("TIFF: read window outside image bounds");
    gt.origin_x += win.col * gt.pixel_width;
    gt.origin_y += win.row * gt.pixel_height;
  }

  Raster r = Raster::zeros(spp, win.height, win.width, stype, gt, crs);
  r.nodata = nodata;

  const bool tiled = has(kTileOffsets);
  int chunk_w = width, chunk_h = 0;
  std::vector<double> offsets, counts;
  if (tiled) {
    if (!has(kTileWidth) || !has(kTileLength) || !has(kTileByteCounts))
      throw DataError("TIFF: tiled image missing TileWidth/TileLength/TileByteCounts");
    chunk_w = static_cast<int>(scalar(kTileWidth, 0));
    chunk_h = static_cast<int>(scalar(kTileLength, 0));
    offsets = numbers(kTileOffsets);
    counts = numbers(kTileByteCounts);
  } else {
    if (!has(kStripOffsets) || !has(kStripByteCounts)) throw DataError("TIFF: missing strip offsets/byte counts");
    chunk_h = static_cast<int>(std::min<double>(scalar(kRowsPerStrip, height), height));
    offsets = numbers(kStripOffsets);
    counts = numbers(kStripByteCounts);
  }
  if (chunk_w < 1 || chunk_h < 1 || chunk_w > 1 << 20 || chunk_h > 1 << 20)
    throw DataError("TIFF: invalid chunk dimensions");
  const int across = (width + chunk_w - 1) / chunk_w;
  const int down = (height + chunk_h - 1) / chunk_h;
  const int planes = planar == 2 ? spp : 1;
  const int samples_per_chunk_px = planar == 2 ? 1 : spp;
  const std::size_t expected_chunks = static_cast<std::size_t>(across) * down * planes;
  if (offsets.size() < expected_chunks || counts.size() < expected_chunks)
    throw DataError("TIFF: expected " + std::to_string(expected_chunks) + " chunks, found " +
                    std::to_string(std::min(offsets.size(), counts.size())));

  for (int plane = 0; plane < planes; ++plane) {
    for (int ty = 0; ty < down; ++ty) {
      const int y0 = ty * chunk_h;
      const int rows_here = tiled ? chunk_h : std::min(chunk_h, height - y0);
      if (y0 + rows_here <= win.row || y0 >= win.row + win.height) continue;
      for (int tx = 0; tx < across; ++tx) {
        const int x0 = tx * chunk_w;
        if (x0 + chunk_w <= win.col || x0 >= win.col + win.width) continue;
        const std::size_t ci = static_cast<std::size_t>(plane) * across * down + static_cast<std::size_t>(ty) * across + tx;
        const std::size_t raw_size =
            static_cast<std::size_t>(chunk_w) * rows_here * samples_per_chunk_px * bps;
        const auto stored = br.slice(static_cast<std::uint64_t>(offsets[ci]), static_cast<std::uint64_t>(counts[ci]));
        std::vector<std::uint8_t> inflated;
        const std::uint8_t* px = nullptr;
        if (compression == 1) {
          if (stored.size() < raw_size)
            throw DataError("TIFF: uncompressed chunk holds " + std::to_string(stored.size()) + " bytes, expected " +
                            std::to_string(raw_size));
          px = stored.data();
        } else {
          if (static_cast<double>(raw_size) > 1032.0 * static_cast<double>(stored.size()) + 1024.0)
            throw DataError("TIFF: chunk " + std::to_string(ci) + " cannot inflate to " + std::to_string(raw_size) +
                            " bytes");
          inflated = inflate_chunk(stored, raw_size);
          px = inflated.data();
        }
        const int yb = std::max(y0, win.row), ye = std::min({y0 + rows_here, height, win.row + win.height});
        const int xb = std::max(x0, win.col), xe = std::min({x0 + chunk_w, width, win.col + win.width});
        for (int y = yb; y < ye; ++y) {
          for (int x = xb; x < xe; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y - y0) * chunk_w + (x - x0);
            for (int s = 0; s < samples_per_chunk_px; ++s) {
              const int band = planar == 2 ? plane : s;
              const std::uint8_t* p = px + (pix * samples_per_chunk_px + s) * bps;
              r.at(band, y - win.row, x - win.col) = decode_sample(p, stype, little);
            }
          }
        }
      }
    }
  }
  return r;
}

Raster read_geotiff(const std::filesystem::path& path, const GeoTiffReadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_geotiff(bytes, options);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_geotiff(const Raster& r, const GeoTiffWriteOptions& options) {
  validate(r);
  if (!r.transform.is_north_up() || !(r.transform.pixel_width > 0) || !(r.transform.pixel_height < 0))
    throw DataError("GeoTIFF writer requires a north-up transform with positive width and negative height");
  const std::size_t bps = sample_bytes(r.sample_type);
  const bool planar = options.interleave == TiffInterleave::Planar && r.bands > 1;
  const int spp_chunk = planar ? 1 : r.bands;
  const std::size_t row_bytes = static_cast<std::size_t>(r.width) * spp_chunk * bps;
  int rps = options.rows_per_strip;
  if (rps <= 0) rps = static_cast<int>(std::max<std::size_t>(1, 8192 / std::max<std::size_t>(1, row_bytes)));
  rps = std::min(rps, r.height);
  const int strips_per_plane = (r.height + rps - 1) / rps;
  const int planes = planar ? r.bands : 1;

  std::vector<std::vector<std::uint8_t>> strips;
  strips.reserve(static_cast<std::size_t>(strips_per_plane) * planes);
  for (int plane = 0; plane < planes; ++plane) {
    for (int s = 0; s < strips_per_plane; ++s) {
      const int y0 = s * rps;
      const int rows = std::min(rps, r.height - y0);
      std::vector<std::uint8_t> raw(row_bytes * rows);
      for (int y = 0; y < rows; ++y) {
        for (int x = 0; x < r.width; ++x) {
          for (int k = 0; k < spp_chunk; ++k) {
            const int band = planar ? plane : k;
            std::uint8_t* p = raw.data() + (static_cast<std::size_t>(y) * r.width + x) * spp_chunk * bps + k * bps;
            encode_sample(r.at(band, y0 + y, x), r.sample_type, p);
          }
        }
      }
      strips.push_back(options.compression == TiffCompression::Deflate ? deflate_chunk(raw) : std::move(raw));
    }
  }

  struct OutEntry {
    std::uint16_t tag;
    std::uint16_t type;
    std::uint32_t count;
    std::vector<std::uint8_t> payload;  // little-endian value bytes
  };
  std::vector<OutEntry> out;
  auto put_u16s = [&](std::uint16_t tag, const std::vector<std::uint32_t>& v) {
    OutEntry e{tag, kShort, static_cast<std::uint32_t>(v.size()), {}};
    for (auto x : v) {
      e.payload.push_back(static_cast<std::uint8_t>(x));
      e.payload.push_back(static_cast<std::uint8_t>(x >> 8));
    }
    out.push_back(std::move(e));
  };
  auto put_u32s = [&](std::uint16_t tag, const std::vector<std::uint32_t>& v) {
    OutEntry e{tag, kLong, static_cast<std::uint32_t>(v.size()), {}};
    for (auto x : v)
      for (int i = 0; i < 4; ++i) e.payload.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    out.push_back(std::move(e));
  };
  auto put_f64s = [&](std::uint16_t tag, const std::vector<double>& v) {
    OutEntry e{tag, kDouble, static_cast<std::uint32_t>(v.size()), {}};
    for (double d : v) {
      const auto bits = std::bit_cast<std::uint64_t>(d);
      for (int i = 0; i < 8; ++i) e.payload.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    out.push_back(std::move(e));
  };
  auto put_ascii = [&](std::uint16_t tag, const std::string& s) {
    OutEntry e{tag, kAscii, static_cast<std::uint32_t>(s.size() + 1), {}};
    e.payload.assign(s.begin(), s.end());
    e.payload.push_back(0);
    out.push_back(std::move(e));
  };

  int sample_format = 1;
  if (r.sample_type == SampleType::Int16) sample_format = 2;
  if (r.sample_type == SampleType::Float32) sample_format = 3;

  const std::size_t n_strips = strips.size();
  put_u32s(kImageWidth, {static_cast<std::uint32_t>(r.width)});
  put_u32s(kImageLength, {static_cast<std::uint32_t>(r.height)});
  put_u16s(kBitsPerSample, std::vector<std::uint32_t>(r.bands, static_cast<std::uint32_t>(bps * 8)));
  put_u16s(kCompression, {options.compression == TiffCompression::Deflate ? 8u : 1u});
  put_u16s(kPhotometric, {1});
  put_u32s(kStripOffsets, std::vector<std::uint32_t>(n_strips, 0));  // patched below
  put_u16s(kSamplesPerPixel, {static_cast<std::uint32_t>(r.bands)});
  put_u32s(kRowsPerStrip, {static_cast<std::uint32_t>(rps)});
  {
    std::vector<std::uint32_t> counts;
    for (const auto& s : strips) counts.push_back(static_cast<std::uint32_t>(s.size()));
    put_u32s(kStripByteCounts, counts);
  }
  put_u16s(kPlanarConfig, {planar ? 2u : 1u});
  if (r.bands > 1) put_u16s(kExtraSamples, std::vector<std::uint32_t>(r.bands - 1, 0));
  put_u16s(kSampleFormat, std::vector<std::uint32_t>(r.bands, static_cast<std::uint32_t>(sample_format)));
  put_f64s(kModelPixelScale, {r.transform.pixel_width, -r.transform.pixel_height, 0.0});
  put_f64s(kModelTiepoint, {0.0, 0.0, 0.0, r.transform.origin_x, r.transform.origin_y, 0.0});
  {
    std::vector<std::uint32_t> keys;
    auto key = [&](std::uint32_t id, std::uint32_t value) {
      keys.insert(keys.end(), {id, 0, 1, value});
    };
    switch (r.crs.kind) {
      case Crs::Kind::Utm:
        key(1024, 1);
        key(1025, 1);
        key(3072, static_cast<std::uint32_t>(r.crs.epsg()));
        key(3076, 9001);
        break;
      case Crs::Kind::Wgs84Geographic:
        key(1024, 2);
        key(1025, 1);
        key(2048, 4326);
        key(2054, 9102);
        break;
      case Crs::Kind::Local:
        key(1024, 32767);
        key(1025, 1);
        break;
    }
    std::vector<std::uint32_t> dir{1, 1, 0, static_cast<std::uint32_t>(keys.size() / 4)};
    dir.insert(dir.end(), keys.begin(), keys.end());
    put_u16s(kGeoKeyDirectory, dir);
  }
  if (r.nodata) put_ascii(kGdalNodata, format_double(*r.nodata));

  // Layout: header | IFD | out-of-line values | strip data.
  const std::uint32_t ifd_offset = 8;
  const std::uint32_t ifd_size = 2 + 12 * static_cast<std::uint32_t>(out.size()) + 4;
  std::uint32_t cursor = ifd_offset + ifd_size;
  std::vector<std::uint32_t> value_offsets(out.size(), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].payload.size() > 4) {
      cursor += cursor & 1u;
      value_offsets[i] = cursor;
      cursor += static_cast<std::uint32_t>(out[i].payload.size());
    }
  }
  cursor += cursor & 1u;
  std::vector<std::uint32_t> strip_offsets;
  for (const auto& s : strips) {
    strip_offsets.push_back(cursor);
    cursor += static_cast<std::uint32_t>(s.size());
  }
  for (auto& e : out) {
    if (e.tag == kStripOffsets) {
      e.payload.clear();
      for (auto x : strip_offsets)
        for (int i = 0; i < 4; ++i) e.payload.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
    }
  }

  std::vector<std::uint8_t> file(cursor, 0);
  auto w16 = [&](std::size_t off, std::uint32_t v) {
    file[off] = static_cast<std::uint8_t>(v);
    file[off + 1] = static_cast<std::uint8_t>(v >> 8);
  };
  auto w32 = [&](std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) file[off + i] = static_cast<std::uint8_t>(v >> (8 * i));
  };
  file[0] = 'I';
  file[1] = 'I';
  w16(2, 42);
  w32(4, ifd_offset);
  w16(ifd_offset, static_cast<std::uint32_t>(out.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t off = ifd_offset + 2 + 12 * i;
    w16(off, out[i].tag);
    w16(off + 2, out[i].type);
    w32(off + 4, out[i].count);
    if (out[i].payload.size() <= 4) {
      std::copy(out[i].payload.begin(), out[i].payload.end(), file.begin() + static_cast<std::ptrdiff_t>(off + 8));
    } else {
      w32(off + 8, value_offsets[i]);
      std::copy(out[i].payload.begin(), out[i].payload.end(), file.begin() + value_offsets[i]);
    }
  }
  w32(ifd_offset + 2 + 12 * out.size(), 0);
  for (std::size_t i = 0; i < strips.size(); ++i)
    std::copy(strips[i].begin(), strips[i].end(), file.begin() + strip_offsets[i]);
  return file;
}

void write_geotiff(const Raster& r, const std::filesystem::path& path, const GeoTiffWriteOptions& options) {
  const auto bytes = encode_geotiff(r, options);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void write_sidecar(const Raster& r, const std::filesystem::path& header_path) {
  validate(r);
  auto raw_path = header_path;
  raw_path.replace_extension(".raw");
  std::ostringstream hdr;
  const auto& t = r.transform;
  hdr << "aerolabel_raster=1\n"
      << "width=" << r.width << "\n"
      << "height=" << r.height << "\n"
      << "bands=" << r.bands << "\n"
      << "dtype=" << to_string(r.sample_type) << "\n"
      << "kind=" << (r.kind == RasterKind::Categorical ? "categorical" : "continuous") << "\n"
      << "byte_order=little\n"
      << "interleave=band\n"
      << "transform=" << format_double(t.origin_x) << "," << format_double(t.pixel_width) << ","
      << format_double(t.row_rotation) << "," << format_double(t.origin_y) << "," << format_double(t.col_rotation)
      << "," << format_double(t.pixel_height) << "\n"
      << "epsg=" << r.crs.epsg() << "\n";
  if (r.nodata) hdr << "nodata=" << format_double(*r.nodata) << "\n";
  hdr << "data_file=" << raw_path.filename().string() << "\n";

  const std::size_t bps = sample_bytes(r.sample_type);
  std::vector<std::uint8_t> raw(r.data.size() * bps);
  for (std::size_t i = 0; i < r.data.size(); ++i) encode_sample(r.data[i], r.sample_type, raw.data() + i * bps);
  std::ofstream h(header_path, std::ios::trunc);
  if (!h) throw DataError("cannot open " + header_path.string() + " for writing");
  h << hdr.str();
  std::ofstream d(raw_path, std::ios::binary | std::ios::trunc);
  if (!d) throw DataError("cannot open " + raw_path.string() + " for writing");
  d.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

Raster read_sidecar(const std::filesystem::path& header_path) {
  std::ifstream h(header_path);
  if (!h) throw DataError("cannot open " + header_path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  static const std::set<std::string> known{"aerolabel_raster", "width", "height", "bands", "dtype", "kind",
                                           "byte_order", "interleave", "transform", "epsg", "nodata", "data_file"};
  while (std::getline(h, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(header_path.string() + ": malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    if (!known.count(key)) throw DataError(header_path.string() + ": unknown key '" + key + "'");
    kv[key] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw DataError(header_path.string() + ": missing key '" + k + "'");
    return it->second;
  };
  auto to_int = [&](const std::string& k) {
    const auto v = parse_double(need(k));
    if (!v) throw DataError(header_path.string() + ": bad integer for '" + k + "'");
    return static_cast<int>(*v);
  };
  if (need("aerolabel_raster") != "1") throw DataError(header_path.string() + ": unsupported sidecar version");
  if (kv.count("byte_order") && kv["byte_order"] != "little")
    throw DataError(header_path.string() + ": only little-endian payloads are supported");
  if (kv.count("interleave") && kv["interleave"] != "band")
    throw DataError(header_path.string() + ": only band-major payloads are supported");
  const std::string& dtype = need("dtype");
  SampleType st;
  if (dtype == "uint8") st = SampleType::UInt8;
  else if (dtype == "uint16") st = SampleType::UInt16;
  else if (dtype == "int16") st = SampleType::Int16;
  else if (dtype == "float32") st = SampleType::Float32;
  else throw DataError(header_path.string() + ": unsupported dtype '" + dtype + "'");

  GeoTransform gt;
  {
    std::vector<double> v;
    std::stringstream ss(need("transform"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto d = parse_double(item);
      if (!d) throw DataError(header_path.string() + ": bad transform component '" + item + "'");
      v.push_back(*d);
    }
    if (v.size() != 6) throw DataError(header_path.string() + ": transform needs 6 components");
    gt = {v[0], v[3], v[1], v[5], v[2], v[4]};
  }
  const RasterKind kind = kv.count("kind") && kv["kind"] == "categorical" ? RasterKind::Categorical
                                                                          : RasterKind::Continuous;
  Raster r = Raster::zeros(to_int("bands"), to_int("height"), to_int("width"), st, gt, Crs::from_epsg(to_int("epsg")),
                           kind);
  if (kv.count("nodata")) {
    r.nodata = parse_double(kv["nodata"]);
    if (!r.nodata) throw DataError(header_path.string() + ": bad nodata value");
  }
  const auto raw_path = header_path.parent_path() / need("data_file");
  std::ifstream d(raw_path, std::ios::binary);
  if (!d) throw DataError("cannot open sidecar payload " + raw_path.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(d)), std::istreambuf_iterator<char>());
  const std::size_t bps = sample_bytes(st);
  if (raw.size() != r.data.size() * bps)
    throw DataError(raw_path.string() + ": payload holds " + std::to_string(raw.size()) + " bytes, expected " +
                    std::to_string(r.data.size() * bps));
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = decode_sample(raw.data() + i * bps, st, true);
  validate(r);
  return r;
}

Raster read_raster(const std::filesystem::path& path) {
  if (path.extension() == ".hdr") return read_sidecar(path);
  return read_geotiff(path);
}

void write_raster(const Raster& r, const std::filesystem::path& path) {
  if (path.extension() == ".hdr") {
    write_sidecar(r, path);
  } else {
    write_geotiff(r, path);
  }
}

Raster read_logits(const std::filesystem::path& path, int num_classes) {
  Raster r = read_raster(path);
  if (r.bands != num_classes)
    throw DataError(path.string() + ": logits raster has " + std::to_string(r.bands) + " bands but " +
                    std::to_string(num_classes) + " classes are configured");
  r.kind = RasterKind::Continuous;
  return r;
}

Raster softmax_bands(const Raster& logits) {
  validate(logits);
  Raster out = logits;
  out.sample_type = SampleType::Float32;
  const std::size_t plane = logits.plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    bool missing = false;
    double mx = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < logits.bands; ++b) {
      const double v = logits.data[b * plane + p];
      if (logits.is_nodata(v)) missing = true;
      mx = std::max(mx, v);
    }
    if (missing) continue;
    double sum = 0;
    for (int b = 0; b < logits.bands; ++b) sum += std::exp(logits.data[b * plane + p] - mx);
    for (int b = 0; b < logits.bands; ++b)
      out.data[b * plane + p] = std::exp(logits.data[b * plane + p] - mx) / sum;
  }
  return out;
}

Raster argmax_bands(const Raster& r) {
  validate(r);
  if (r.bands > 255) throw DataError("argmax supports at most 255 bands");
  Raster out = Raster::zeros(1, r.height, r.width, SampleType::UInt8, r.transform, r.crs, RasterKind::Categorical);
  const std::size_t plane = r.plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    int best = 0;
    bool missing = false;
    for (int b = 0; b < r.bands; ++b) {
      const double v = r.data[b * plane + p];
      if (r.is_nodata(v)) missing = true;
      if (v > r.data[best * plane + p]) best = b;
    }
    if (missing) {
      out.data[p] = 255;
      out.nodata = 255;
    } else {
      out.data[p] = best;
    }
  }
  return out;
}

}  // namespace aerolabel
