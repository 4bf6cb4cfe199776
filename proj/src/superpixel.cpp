#include "aerolabel/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "aerolabel/error.hpp"

namespace aerolabel {

void compact_segment_ids(Image<std::int32_t>& segments) {
  std::unordered_map<std::int32_t, std::int32_t> remap;
  for (auto& v : segments.data) {
    auto [it, fresh] = remap.try_emplace(v, static_cast<std::int32_t>(remap.size()));
    v = it->second;
  }
}

namespace {

// Raster-order relabelling into 4-connected components. A component smaller
// than `min_size` takes the label of an already relabelled neighbour of its
// first pixel, so the output is connected and free of speckle.
void enforce_connectivity(Image<std::int32_t>& seg, std::size_t min_size) {
  const int W = seg.width, H = seg.height;
  std::vector<std::int32_t> out(seg.size(), -1);
  std::vector<std::size_t> members;
  std::int32_t next = 0;
  for (std::size_t start = 0; start < seg.size(); ++start) {
    if (out[start] >= 0) continue;
    const int sx = static_cast<int>(start % W), sy = static_cast<int>(start / W);
    std::int32_t adjacent = -1;
    const int ax[4] = {sx - 1, sx, sx + 1, sx};
    const int ay[4] = {sy, sy - 1, sy, sy + 1};
    for (int k = 0; k < 4 && adjacent < 0; ++k) {
      if (ax[k] < 0 || ay[k] < 0 || ax[k] >= W || ay[k] >= H) continue;
      adjacent = out[static_cast<std::size_t>(ay[k]) * W + ax[k]];
    }
    const std::int32_t id = seg.data[start];
    members.clear();
    members.push_back(start);
    out[start] = next;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const std::size_t p = members[m];
      const int x = static_cast<int>(p % W), y = static_cast<int>(p / W);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= W || ny[k] >= H) continue;
        const std::size_t q = static_cast<std::size_t>(ny[k]) * W + nx[k];
        if (out[q] < 0 && seg.data[q] == id) {
          out[q] = next;
          members.push_back(q);
        }
      }
    }
    if (members.size() < min_size && adjacent >= 0) {
      for (std::size_t p : members) out[p] = adjacent;
    } else {
      ++next;
    }
  }
  seg.data = std::move(out);
}

// CIELAB lightness of an sRGB gray level.
double gray_lightness(std::uint8_t v) {
  const double c = v / 255.0;
  const double y = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
  const double f = y > 216.0 / 24389.0 ? std::cbrt(y) : (24389.0 / 27.0 * y + 16.0) / 116.0;
  return 116.0 * f - 16.0;
}

}  // namespace

Image<std::int32_t> slic_segments(const ImageU8& img, const SlicOptions& options) {
  if (img.empty()) throw DataError("SLIC needs a non-empty image");
  if (options.n_segments < 1) throw ConfigError("n_segments must be >= 1");
  if (!(options.compactness > 0.0)) throw ConfigError("compactness must be > 0");
  if (options.iterations < 1) throw ConfigError("SLIC iterations must be >= 1");
  const int W = img.width, H = img.height;
  if (static_cast<std::size_t>(options.n_segments) > img.size())
    throw DataError("n_segments (" + std::to_string(options.n_segments) + ") exceeds the pixel count");
  const double S = std::sqrt(static_cast<double>(W) * H / options.n_segments);
  const int nx = std::max(1, static_cast<int>(std::lround(W / S)));
  const int ny = std::max(1, static_cast<int>(std::lround(H / S)));
  struct Center {
    double x, y, i;
  };
  std::vector<double> lightness(256);
  for (int v = 0; v < 256; ++v) lightness[v] = gray_lightness(static_cast<std::uint8_t>(v));
  auto L = [&](int x, int y) { return lightness[img.at(x, y)]; };
  std::vector<Center> centers;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double cx = (i + 0.5) * W / nx, cy = (j + 0.5) * H / ny;
      const int px = std::min(W - 1, static_cast<int>(cx)), py = std::min(H - 1, static_cast<int>(cy));
      centers.push_back({cx, cy, L(px, py)});
    }
  }
  const double spatial = options.compactness / S;
  const double w2 = spatial * spatial;
  Image<std::int32_t> label(W, H, -1);
  std::vector<double> dist(img.size());
  const int reach = static_cast<int>(std::ceil(S));
  for (int it = 0; it < options.iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Center& c = centers[k];
      const int x0 = std::max(0, static_cast<int>(std::floor(c.x - reach)));
      const int x1 = std::min(W - 1, static_cast<int>(std::ceil(c.x + reach)));
      const int y0 = std::max(0, static_cast<int>(std::floor(c.y - reach)));
      const int y1 = std::min(H - 1, static_cast<int>(std::ceil(c.y + reach)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double di = L(x, y) - c.i;
          const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
          const double d = di * di + w2 * (dx * dx + dy * dy);
          const std::size_t p = static_cast<std::size_t>(y) * W + x;
          if (d < dist[p]) {
            dist[p] = d;
            label.data[p] = static_cast<std::int32_t>(k);
          }
        }
      }
    }
    std::vector<Center> sum(centers.size(), {0, 0, 0});
    std::vector<std::size_t> count(centers.size(), 0);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::int32_t k = label.at(x, y);
        if (k < 0) continue;
        sum[k].x += x + 0.5;
        sum[k].y += y + 0.5;
        sum[k].i += L(x, y);
        ++count[k];
      }
    }
    for (std::size_t k = 0; k < centers.size(); ++k)
      if (count[k]) centers[k] = {sum[k].x / count[k], sum[k].y / count[k], sum[k].i / count[k]};
  }
  // Pixels no window reached join the nearest center spatially.
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (label.at(x, y) >= 0) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centers.size(); ++k) {
        const double dx = x + 0.5 - centers[k].x, dy = y + 0.5 - centers[k].y;
        if (dx * dx + dy * dy < best) {
          best = dx * dx + dy * dy;
          label.at(x, y) = static_cast<std::int32_t>(k);
        }
      }
    }
  }
  const double nominal = static_cast<double>(W) * H / static_cast<double>(centers.size());
  enforce_connectivity(label, static_cast<std::size_t>(0.5 * nominal));
  compact_segment_ids(label);
  return label;
}

MaskSet slic(const ImageU8& img, const SlicOptions& options) { return masks_from_segments(slic_segments(img, options)); }

namespace {

struct DisjointSet {
  std::vector<std::int32_t> parent;
  std::vector<std::size_t> size;
  std::vector<double> internal;

  explicit DisjointSet(std::size_t n) : parent(n), size(n, 1), internal(n, 0.0) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::int32_t find(std::int32_t a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  std::int32_t join(std::int32_t a, std::int32_t b, double w) {
    if (size[a] < size[b] || (size[a] == size[b] && b < a)) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
    internal[a] = std::max({internal[a], internal[b], w});
    return a;
  }
};

std::vector<double> gaussian_smooth(const ImageU8& img, double sigma) {
  const int W = img.width, H = img.height;
  std::vector<double> src(img.data.begin(), img.data.end());
  if (!(sigma > 0.0)) return src;
  const int r = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double s = 0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= s;
  auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double a = 0;
      for (int i = -r; i <= r; ++i) a += k[i + r] * src[static_cast<std::size_t>(y) * W + clampi(x + i, W)];
      tmp[static_cast<std::size_t>(y) * W + x] = a;
    }
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double a = 0;
      for (int i = -r; i <= r; ++i) a += k[i + r] * tmp[static_cast<std::size_t>(clampi(y + i, H)) * W + x];
      out[static_cast<std::size_t>(y) * W + x] = a;
    }
  return out;
}

}  // namespace

Image<std::int32_t> felzenszwalb_segments(const ImageU8& img, const FelzenszwalbOptions& options) {
  if (img.empty()) throw DataError("Felzenszwalb segmentation needs a non-empty image");
  if (!(options.scale > 0.0)) throw ConfigError("Felzenszwalb scale must be > 0");
  if (!(options.sigma >= 0.0)) throw ConfigError("Felzenszwalb sigma must be >= 0");
  if (options.min_size < 0) throw ConfigError("Felzenszwalb min_size must be >= 0");
  const int W = img.width, H = img.height;
  const auto v = gaussian_smooth(img, options.sigma);
  struct Edge {
    double w;
    std::int32_t a, b;
  };
  std::vector<Edge> edges;
  edges.reserve(img.size() * 4);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto a = static_cast<std::int32_t>(y * W + x);
      const int dx[4] = {1, 0, 1, -1};
      const int dy[4] = {0, 1, 1, 1};
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || nx >= W || ny >= H) continue;
        const auto b = static_cast<std::int32_t>(ny * W + nx);
        edges.push_back({std::abs(v[a] - v[b]), a, b});
      }
    }
  }
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& p, const Edge& q) { return p.w < q.w; });
  DisjointSet ds(img.size());
  for (const Edge& e : edges) {
    const std::int32_t a = ds.find(e.a), b = ds.find(e.b);
    if (a == b) continue;
    const double ta = ds.internal[a] + options.scale / static_cast<double>(ds.size[a]);
    const double tb = ds.internal[b] + options.scale / static_cast<double>(ds.size[b]);
    if (e.w <= std::min(ta, tb)) ds.join(a, b, e.w);
  }
  for (const Edge& e : edges) {
    const std::int32_t a = ds.find(e.a), b = ds.find(e.b);
    if (a != b && (ds.size[a] < static_cast<std::size_t>(options.min_size) ||
                   ds.size[b] < static_cast<std::size_t>(options.min_size)))
      ds.join(a, b, e.w);
  }
  Image<std::int32_t> seg(W, H, 0);
  for (std::size_t p = 0; p < seg.size(); ++p) seg.data[p] = ds.find(static_cast<std::int32_t>(p));
  compact_segment_ids(seg);
  return seg;
}

MaskSet felzenszwalb(const ImageU8& img, const FelzenszwalbOptions& options) {
  return masks_from_segments(felzenszwalb_segments(img, options));
}

}  // namespace aerolabel
