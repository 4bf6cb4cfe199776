#include "aerolabel/permutohedral.hpp"

#include <cmath>
#include <algorithm>
#include <bit>
#include <cstring>
#include <numbers>
#include <string>

#include "aerolabel/error.hpp"
#include "aerolabel/hash.hpp"

namespace aerolabel {
namespace {

// Open-addressing table from lattice keys (dim shorts) to dense vertex ids.
class KeyTable {
 public:
  KeyTable(int key_size, std::size_t expected) : key_size_(key_size) {
    std::size_t cap = 64;
    while (cap < expected * 2) cap <<= 1;
    slots_.assign(cap, -1);
  }

  int find(const std::int16_t* key, bool create) {
    if (keys_.size() / key_size_ * 2 >= slots_.size()) grow();
    std::size_t h = hash(key) & (slots_.size() - 1);
    while (true) {
      const int id = slots_[h];
      if (id < 0) {
        if (!create) return -1;
        const int nid = static_cast<int>(keys_.size() / key_size_);
        keys_.insert(keys_.end(), key, key + key_size_);
        slots_[h] = nid;
        return nid;
      }
      if (std::memcmp(&keys_[static_cast<std::size_t>(id) * key_size_], key, key_size_ * sizeof(std::int16_t)) == 0)
        return id;
      h = (h + 1) & (slots_.size() - 1);
    }
  }

  int size() const { return static_cast<int>(keys_.size() / key_size_); }
  const std::int16_t* key(int id) const { return &keys_[static_cast<std::size_t>(id) * key_size_]; }

 private:
  std::size_t hash(const std::int16_t* key) const {
    std::size_t h = 0;
    for (int i = 0; i < key_size_; ++i) {
      h += static_cast<std::uint16_t>(key[i]);
      h *= 1664525u;
    }
    return h ^ (h >> 16);
  }

  void grow() {
    std::vector<int> old = std::move(slots_);
    slots_.assign(old.size() * 2, -1);
    for (int id = 0; id < size(); ++id) {
      std::size_t h = hash(key(id)) & (slots_.size() - 1);
      while (slots_[h] >= 0) h = (h + 1) & (slots_.size() - 1);
      slots_[h] = id;
    }
  }

  int key_size_;
  std::vector<std::int16_t> keys_;
  std::vector<int> slots_;
};

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

double PermutohedralLattice::refinement(int blur_passes) { return std::sqrt((3.0 * blur_passes + 1.0) / 4.0); }

double PermutohedralLattice::lattice_gain(int d, int blur_passes) {
  // A dense unit-density cloud deposits one lattice covolume of mass per
  // vertex; each [1/2 1 1/2] pass along the d+1 directions doubles the mass
  // per direction. Dividing by the Gaussian integral (2 pi)^(d/2) gives the
  // factor to undo. Covolume of the scaled A*_d lattice in feature units is
  // (d+1)^d / sqrt(d+1) / s^d with s = kappa * sqrt(2/3) * (d+1).
  const double s = refinement(blur_passes) * std::sqrt(2.0 / 3.0) * (d + 1);
  const double covolume = std::pow(d + 1.0, d) / std::sqrt(d + 1.0) / std::pow(s, d);
  return covolume * std::pow(2.0, static_cast<double>(d + 1) * blur_passes) / std::pow(2.0 * std::numbers::pi, d / 2.0);
}

PermutohedralLattice::PermutohedralLattice(std::span<const double> features, int dim, const LatticeOptions& options)
    : dim_(dim), blur_passes_(options.blur_passes) {
  const int blur_passes = options.blur_passes;
  if (dim < 1 || dim > 16) throw DataError("permutohedral lattice supports 1..16 feature dimensions");
  if (blur_passes < 1 || blur_passes > 16) throw DataError("blur passes must be in [1, 16]");
  if (options.dilation < 0 || options.dilation > 8) throw DataError("lattice dilation must be in [0, 8]");
  if (options.calibration_samples < 0) throw DataError("calibration sample count must be >= 0");
  if (features.size() % dim != 0) throw DataError("feature array length is not a multiple of the dimension");
  num_points_ = static_cast<int>(features.size() / dim);
  const int d = dim;
  const int d1 = d + 1;

  // Variance budget: each blur pass contributes 3/4 and splat+slice about
  // 1/4 (in units of the lattice spacing), so refining the lattice by kappa
  // with m passes keeps the kernel at unit variance.
  std::vector<double> scale(d);
  const double inv_std = refinement(blur_passes) * std::sqrt(2.0 / 3.0) * d1;
  for (int i = 0; i < d; ++i) scale[i] = inv_std / std::sqrt((i + 1.0) * (i + 2.0));

  // canonical[r * d1 + i]: coordinate i of the remainder-r simplex vertex.
  std::vector<int> canonical(static_cast<std::size_t>(d1) * d1);
  for (int r = 0; r <= d; ++r) {
    for (int i = 0; i <= d - r; ++i) canonical[r * d1 + i] = r;
    for (int i = d - r + 1; i <= d; ++i) canonical[r * d1 + i] = r - d1;
  }

  KeyTable table(d, static_cast<std::size_t>(num_points_) * d1);
  offsets_.assign(static_cast<std::size_t>(num_points_) * d1, 0);
  barycentric_.assign(static_cast<std::size_t>(num_points_) * d1, 0.0);

  std::vector<double> elevated(d1), bary(d1 + 1);
  std::vector<int> rem0(d1), rank(d1);
  std::vector<std::int16_t> key(d1);
  const double down = 1.0 / d1;

  for (int k = 0; k < num_points_; ++k) {
    const double* f = features.data() + static_cast<std::size_t>(k) * d;
    for (int i = 0; i < d; ++i)
      if (!std::isfinite(f[i])) throw NumericalError("non-finite lattice feature at point " + std::to_string(k));

    double sm = 0.0;
    for (int j = d; j > 0; --j) {
      const double cf = f[j - 1] * scale[j - 1];
      elevated[j] = sm - j * cf;
      sm += cf;
    }
    elevated[0] = sm;

    // Nearest remainder-0 point.
    int sum = 0;
    for (int i = 0; i <= d; ++i) {
      const double v = down * elevated[i];
      const double up = std::ceil(v) * d1;
      const double dn = std::floor(v) * d1;
      rem0[i] = static_cast<int>(up - elevated[i] < elevated[i] - dn ? up : dn);
      sum += rem0[i] / d1;
    }

    // Rank of each coordinate's residual.
    std::fill(rank.begin(), rank.end(), 0);
    for (int i = 0; i < d; ++i) {
      const double di = elevated[i] - rem0[i];
      for (int j = i + 1; j <= d; ++j) {
        if (di < elevated[j] - rem0[j]) {
          ++rank[i];
        } else {
          ++rank[j];
        }
      }
    }
    // Project back onto the hyperplane if rounding left it.
    for (int i = 0; i <= d; ++i) {
      rank[i] += sum;
      if (rank[i] < 0) {
        rank[i] += d1;
        rem0[i] += d1;
      } else if (rank[i] > d) {
        rank[i] -= d1;
        rem0[i] -= d1;
      }
    }

    std::fill(bary.begin(), bary.end(), 0.0);
    for (int i = 0; i <= d; ++i) {
      const double v = (elevated[i] - rem0[i]) * down;
      bary[d - rank[i]] += v;
      bary[d - rank[i] + 1] -= v;
    }
    bary[0] += 1.0 + bary[d1];

    for (int r = 0; r <= d; ++r) {
      for (int i = 0; i < d; ++i) {
        const int c = rem0[i] + canonical[r * d1 + rank[i]];
        if (c < -32000 || c > 32000) throw NumericalError("lattice feature magnitude exceeds key range");
        key[i] = static_cast<std::int16_t>(c);
      }
      offsets_[static_cast<std::size_t>(k) * d1 + r] = table.find(key.data(), true);
      barycentric_[static_cast<std::size_t>(k) * d1 + r] = bary[r];
    }
  }

  // Blur operators along the d+1 lattice directions commute, so the response
  // between two vertices of one simplex whose remainders differ by k is the
  // coefficient of the matching monomial in prod_j (1 + x_j/2 + 1/(2 x_j))^m,
  // summed over the equivalent exponent shifts (prod_j x_j = 1).
  {
    const int m = blur_passes;
    auto coeff = [&](int e) { return binomial(2 * m, m + e) / std::pow(2.0, m); };
    std::vector<double> g(d1, 0.0);
    for (int k = 0; k <= d; ++k)
      for (int c = -m; c <= m + 1; ++c) g[k] += std::pow(coeff(c - 1), k) * std::pow(coeff(c), d1 - k);
    self_raw_.assign(num_points_, 0.0);
    for (int k = 0; k < num_points_; ++k) {
      const double* b = &barycentric_[static_cast<std::size_t>(k) * d1];
      double s = 0.0;
      for (int r = 0; r < d1; ++r)
        for (int q = 0; q < d1; ++q) s += b[r] * b[q] * g[std::abs(r - q)];
      self_raw_[k] = s;
    }
  }

  // Grow the vertex set so mass spread by repeated blurring is not dropped.
  {
    const int rings = options.dilation;
    std::vector<std::int16_t> nk(d1);
    int begin = 0;
    for (int ring = 0; ring < rings; ++ring) {
      const int end = table.size();
      for (int v = begin; v < end; ++v) {
        for (int j = 0; j <= d; ++j) {
          for (int sgn : {-1, 1}) {
            const std::int16_t* kv = table.key(v);
            for (int i = 0; i < d; ++i) nk[i] = static_cast<std::int16_t>(kv[i] - sgn);
            if (j < d) nk[j] = static_cast<std::int16_t>(kv[j] + sgn * d);
            table.find(nk.data(), true);
          }
        }
      }
      begin = end;
    }
  }

  num_vertices_ = table.size();
  neighbours_.assign(static_cast<std::size_t>(d1) * num_vertices_ * 2, -1);
  std::vector<std::int16_t> n1(d1), n2(d1);
  for (int j = 0; j <= d; ++j) {
    for (int v = 0; v < num_vertices_; ++v) {
      const std::int16_t* kv = table.key(v);
      for (int i = 0; i < d; ++i) {
        n1[i] = static_cast<std::int16_t>(kv[i] - 1);
        n2[i] = static_cast<std::int16_t>(kv[i] + 1);
      }
      if (j < d) {
        n1[j] = static_cast<std::int16_t>(kv[j] + d);
        n2[j] = static_cast<std::int16_t>(kv[j] - d);
      }
      const std::size_t base = (static_cast<std::size_t>(j) * num_vertices_ + v) * 2;
      neighbours_[base] = table.find(n1.data(), false);
      neighbours_[base + 1] = table.find(n2.data(), false);
    }
  }

  scale_ = 1.0 / lattice_gain(d, blur_passes);
  calibrate(features, options.calibration_samples);
  self_weight_.resize(self_raw_.size());
  for (std::size_t k = 0; k < self_raw_.size(); ++k) self_weight_[k] = self_raw_[k] * scale_;
}

// Fits one multiplicative correction so the self-excluded kernel sums match
// exact ones at a few points. Points are picked by a hash of their features,
// so the choice does not depend on input order.
void PermutohedralLattice::calibrate(std::span<const double> features, int samples) {
  const int n = num_points_;
  if (samples <= 0 || n < 2) return;
  const int d = dim_;
  std::vector<std::pair<std::uint64_t, int>> keyed(n);
  for (int i = 0; i < n; ++i) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (int k = 0; k < d; ++k) {
      const double f = features[static_cast<std::size_t>(i) * d + k] + 0.0;  // folds -0 into +0
      h = splitmix64(h ^ std::bit_cast<std::uint64_t>(f));
    }
    keyed[i] = {h, i};
  }
  const int s = std::min(samples, n);
  std::nth_element(keyed.begin(), keyed.begin() + (s - 1), keyed.end());
  std::sort(keyed.begin(), keyed.begin() + s);

  std::vector<double> ones(n, 1.0), approx(n);
  raw_filter(ones, approx, 1);
  double num = 0.0, den = 0.0;
  for (int t = 0; t < s; ++t) {
    const int i = keyed[t].second;
    const double* fi = &features[static_cast<std::size_t>(i) * d];
    double exact = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* fj = &features[static_cast<std::size_t>(j) * d];
      double q = 0.0;
      for (int k = 0; k < d; ++k) q += (fi[k] - fj[k]) * (fi[k] - fj[k]);
      exact += std::exp(-0.5 * q);
    }
    const double a = (approx[i] - self_raw_[i]) * scale_;
    num += a * exact;
    den += a * a;
  }
  if (den > 0.0 && num > 0.0) scale_ *= num / den;
}

void PermutohedralLattice::filter(std::span<const double> values, std::span<double> out, int value_dim) const {
  const std::size_t n = static_cast<std::size_t>(num_points_);
  if (value_dim < 1 || values.size() != n * value_dim || out.size() != n * value_dim)
    throw DataError("lattice filter: value array has the wrong length");
  raw_filter(values, out, value_dim);
  for (double& v : out) v *= scale_;
}

void PermutohedralLattice::raw_filter(std::span<const double> values, std::span<double> out, int value_dim) const {
  const std::size_t n = static_cast<std::size_t>(num_points_);
  const int d1 = dim_ + 1;
  const std::size_t m = static_cast<std::size_t>(num_vertices_);

  // Row 0 of each buffer is a permanent zero row for missing neighbours.
  std::vector<double> cur((m + 1) * value_dim, 0.0), next((m + 1) * value_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int r = 0; r < d1; ++r) {
      const std::size_t o = static_cast<std::size_t>(offsets_[i * d1 + r]) + 1;
      const double w = barycentric_[i * d1 + r];
      for (int c = 0; c < value_dim; ++c) cur[o * value_dim + c] += w * values[i * value_dim + c];
    }
  }

  for (int pass = 0; pass < blur_passes_; ++pass) {
    for (int j = 0; j < d1; ++j) {
      for (std::size_t v = 0; v < m; ++v) {
        const std::size_t base = (static_cast<std::size_t>(j) * m + v) * 2;
        const std::size_t a = static_cast<std::size_t>(neighbours_[base] + 1);
        const std::size_t b = static_cast<std::size_t>(neighbours_[base + 1] + 1);
        const double* self = &cur[(v + 1) * value_dim];
        const double* na = &cur[a * value_dim];
        const double* nb = &cur[b * value_dim];
        double* dst = &next[(v + 1) * value_dim];
        for (int c = 0; c < value_dim; ++c) dst[c] = self[c] + 0.5 * (na[c] + nb[c]);
      }
      std::swap(cur, next);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < value_dim; ++c) out[i * value_dim + c] = 0.0;
    for (int r = 0; r < d1; ++r) {
      const std::size_t o = static_cast<std::size_t>(offsets_[i * d1 + r]) + 1;
      const double w = barycentric_[i * d1 + r];
      for (int c = 0; c < value_dim; ++c) out[i * value_dim + c] += w * cur[o * value_dim + c];
    }
  }
}

}  // namespace aerolabel
