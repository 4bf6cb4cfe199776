#include "aerolabel/thermal.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "aerolabel/error.hpp"

namespace aerolabel {

double percentile(const ImageU16& img, double q) {
  if (img.empty()) throw DataError("percentile of an empty image");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile must be in [0, 100]");
  std::array<std::size_t, 65536> hist{};
  for (auto v : img.data) ++hist[v];
  const double pos = q / 100.0 * static_cast<double>(img.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, img.size() - 1);
  // value at sorted rank r
  auto at_rank = [&](std::size_t r) {
    std::size_t acc = 0;
    for (std::size_t v = 0; v < hist.size(); ++v) {
      acc += hist[v];
      if (acc > r) return static_cast<double>(v);
    }
    return 65535.0;
  };
  const double a = at_rank(lo), b = at_rank(hi);
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

ImageU8 rescale_percentile(const ImageU16& raw, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("percentile bounds must satisfy lo < hi");
  const double p_lo = percentile(raw, lo), p_hi = percentile(raw, hi);
  ImageU8 out(raw.width, raw.height, 128);
  if (!(p_hi > p_lo)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double t = std::clamp((raw.data[i] - p_lo) / (p_hi - p_lo), 0.0, 1.0);
    out.data[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  return out;
}

ImageU8 clahe(const ImageU8& img, const ClaheOptions& options) {
  if (img.empty()) throw DataError("CLAHE needs a non-empty image");
  if (options.tiles_x < 1 || options.tiles_y < 1) throw ConfigError("CLAHE tile counts must be >= 1");
  if (!(options.clip_limit > 0.0)) throw ConfigError("CLAHE clip limit must be > 0");
  const int W = img.width, H = img.height;
  const int tx = std::min(options.tiles_x, W), ty = std::min(options.tiles_y, H);
  auto bound_x = [&](int i) { return static_cast<int>(static_cast<long long>(i) * W / tx); };
  auto bound_y = [&](int j) { return static_cast<int>(static_cast<long long>(j) * H / ty); };

  std::vector<std::array<std::uint8_t, 256>> lut(static_cast<std::size_t>(tx) * ty);
  for (int j = 0; j < ty; ++j) {
    for (int i = 0; i < tx; ++i) {
      std::array<std::int64_t, 256> hist{};
      const int x0 = bound_x(i), x1 = bound_x(i + 1), y0 = bound_y(j), y1 = bound_y(j + 1);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) ++hist[img.at(x, y)];
      const std::int64_t n = static_cast<std::int64_t>(x1 - x0) * (y1 - y0);
      const auto limit =
          std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(options.clip_limit * static_cast<double>(n))));
      std::int64_t excess = 0;
      for (auto& h : hist) {
        if (h > limit) {
          excess += h - limit;
          h = limit;
        }
      }
      const std::int64_t each = excess / 256, rest = excess % 256;
      for (int b = 0; b < 256; ++b) hist[b] += each + (b * rest / 256 != (b + 1) * rest / 256 ? 1 : 0);
      std::int64_t cdf = 0;
      auto& m = lut[static_cast<std::size_t>(j) * tx + i];
      for (int b = 0; b < 256; ++b) {
        cdf += hist[b];
        m[b] = static_cast<std::uint8_t>(std::clamp<std::int64_t>((cdf * 255 + n / 2) / n, 0, 255));
      }
    }
  }

  auto centre_x = [&](int i) { return 0.5 * (bound_x(i) + bound_x(i + 1)); };
  auto centre_y = [&](int j) { return 0.5 * (bound_y(j) + bound_y(j + 1)); };
  ImageU8 out(W, H);
  for (int y = 0; y < H; ++y) {
    const double py = y + 0.5;
    int j0 = 0;
    while (j0 + 1 < ty && centre_y(j0 + 1) <= py) ++j0;
    const int j1 = std::min(j0 + 1, ty - 1);
    const double fy = j1 == j0 ? 0.0 : std::clamp((py - centre_y(j0)) / (centre_y(j1) - centre_y(j0)), 0.0, 1.0);
    for (int x = 0; x < W; ++x) {
      const double px = x + 0.5;
      int i0 = 0;
      while (i0 + 1 < tx && centre_x(i0 + 1) <= px) ++i0;
      const int i1 = std::min(i0 + 1, tx - 1);
      const double fx =
          i1 == i0 ? 0.0 : std::clamp((px - centre_x(i0)) / (centre_x(i1) - centre_x(i0)), 0.0, 1.0);
      const std::uint8_t v = img.at(x, y);
      const double a = lut[static_cast<std::size_t>(j0) * tx + i0][v], b = lut[static_cast<std::size_t>(j0) * tx + i1][v];
      const double c = lut[static_cast<std::size_t>(j1) * tx + i0][v], d = lut[static_cast<std::size_t>(j1) * tx + i1][v];
      const double r = (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(r), 0L, 255L));
    }
  }
  return out;
}

ImageU8 preprocess_thermal(const ImageU16& raw, const ClaheOptions& options) {
  const ImageU8 scaled = rescale_percentile(raw);
  if (percentile(raw, 2.0) == percentile(raw, 98.0)) return scaled;
  return clahe(scaled, options);
}

}  // namespace aerolabel
