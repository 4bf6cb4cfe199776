#include "aerolabel/densecrf.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "aerolabel/error.hpp"
#include "aerolabel/parallel.hpp"
#include "aerolabel/resample.hpp"

namespace aerolabel {
namespace {

std::vector<double> exact_filter(std::span<const double> values, int value_dim, std::span<const double> features,
                                 int feature_dim, int workers) {
  const std::size_t n = features.size() / feature_dim;
  std::vector<double> out(n * value_dim, 0.0);
  parallel_for(n, workers, [&](std::size_t i) {
    const double* fi = &features[i * feature_dim];
    double* oi = &out[i * value_dim];
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* fj = &features[j * feature_dim];
      double q = 0.0;
      for (int k = 0; k < feature_dim; ++k) q += (fi[k] - fj[k]) * (fi[k] - fj[k]);
      const double w = std::exp(-0.5 * q);
      const double* vj = &values[j * value_dim];
      for (int c = 0; c < value_dim; ++c) oi[c] += w * vj[c];
    }
  });
  return out;
}

void check_filter_args(std::span<const double> values, int value_dim, std::span<const double> features,
                       int feature_dim) {
  if (value_dim < 1 || feature_dim < 1) throw DataError("filter dimensions must be positive");
  if (features.size() % feature_dim != 0) throw DataError("feature array length is not a multiple of D");
  const std::size_t n = features.size() / feature_dim;
  if (values.size() != n * value_dim) throw DataError("value array does not match the feature point count");
}

// Self-excluded Gaussian filtering over one feature set, either exact or via
// a lattice built once and reused across iterations.
class Kernel {
 public:
  Kernel(std::vector<double> features, int dim, InferenceMode mode, const LatticeOptions& lattice,
         KernelNormalization normalization, int workers)
      : features_(std::move(features)), dim_(dim), workers_(workers) {
    const std::size_t n = features_.size() / dim_;
    if (mode == InferenceMode::Lattice) lattice_.emplace(features_, dim_, lattice);
    if (normalization == KernelNormalization::Symmetric) {
      std::vector<double> ones(n, 1.0);
      std::vector<double> sums = raw(ones, 1);
      norm_.resize(n);
      for (std::size_t i = 0; i < n; ++i) norm_[i] = sums[i] > 1e-300 ? 1.0 / std::sqrt(sums[i]) : 0.0;
    }
  }

  std::vector<double> apply(const std::vector<double>& values, int value_dim) const {
    if (norm_.empty()) return raw(values, value_dim);
    std::vector<double> scaled(values.size());
    const std::size_t n = norm_.size();
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < value_dim; ++c) scaled[i * value_dim + c] = norm_[i] * values[i * value_dim + c];
    std::vector<double> out = raw(scaled, value_dim);
    for (std::size_t i = 0; i < n; ++i)
      for (int c = 0; c < value_dim; ++c) out[i * value_dim + c] *= norm_[i];
    return out;
  }

 private:
  std::vector<double> raw(const std::vector<double>& values, int value_dim) const {
    if (!lattice_) return exact_filter(values, value_dim, features_, dim_, workers_);
    std::vector<double> out(values.size());
    lattice_->filter(values, out, value_dim);
    const std::size_t n = values.size() / value_dim;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = lattice_->self_weight(static_cast<int>(i));
      for (int c = 0; c < value_dim; ++c) {
        double& o = out[i * value_dim + c];
        o -= s * values[i * value_dim + c];
        // The lattice never produces negative mass; clamp rounding residue.
        if (o < 0.0 && values[i * value_dim + c] >= 0.0) o = 0.0;
      }
    }
    return out;
  }

  std::vector<double> features_;
  int dim_;
  int workers_;
  std::optional<PermutohedralLattice> lattice_;
  std::vector<double> norm_;
};

void softmax_rows(std::vector<double>& q, std::size_t n, int L) {
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &q[i * L];
    const double mx = *std::max_element(row, row + L);
    double sum = 0.0;
    for (int l = 0; l < L; ++l) {
      row[l] = std::exp(row[l] - mx);
      sum += row[l];
    }
    for (int l = 0; l < L; ++l) row[l] /= sum;
  }
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw DataError(std::string(what) + " contains NaN or infinite values");
}

// Bands of a raster as an N x bands pixel-major array.
std::vector<double> interleave(const Raster& r) {
  const std::size_t n = r.plane_size();
  std::vector<double> out(n * r.bands);
  for (int b = 0; b < r.bands; ++b)
    for (std::size_t i = 0; i < n; ++i) out[i * r.bands + b] = r.data[static_cast<std::size_t>(b) * n + i];
  return out;
}

GridSpec grid_of(const Raster& r) { return {r.width, r.height, r.transform, r.crs}; }

}  // namespace

void CrfParams::validate(int bands) const {
  if (!(w1 >= 0.0) || !(w2 >= 0.0)) throw ConfigError("CRF weights must be >= 0");
  if (!(theta_alpha > 0.0) || !(theta_gamma > 0.0)) throw ConfigError("CRF spatial bandwidths must be > 0");
  if (!(theta_z > 0.0)) throw ConfigError("CRF elevation bandwidth must be > 0");
  if (static_cast<int>(theta_beta.size()) != bands)
    throw ConfigError("theta_beta has " + std::to_string(theta_beta.size()) + " entries but the conditioning image has " +
                      std::to_string(bands) + " bands");
  for (double t : theta_beta)
    if (!(t > 0.0)) throw ConfigError("CRF intensity bandwidths must be > 0");
  if (num_iterations < 1) throw ConfigError("num_iterations must be >= 1");
}

CompatibilityMatrix CompatibilityMatrix::potts(int num_classes) {
  CompatibilityMatrix m;
  m.num_classes = num_classes;
  m.mu.assign(static_cast<std::size_t>(num_classes) * num_classes, 1.0);
  for (int l = 0; l < num_classes; ++l) m.mu[static_cast<std::size_t>(l) * num_classes + l] = 0.0;
  return m;
}

void CompatibilityMatrix::validate() const {
  if (num_classes < 1 || mu.size() != static_cast<std::size_t>(num_classes) * num_classes)
    throw ConfigError("compatibility matrix must be L x L");
  for (int a = 0; a < num_classes; ++a)
    for (int b = 0; b < num_classes; ++b) {
      if (!std::isfinite((*this)(a, b))) throw ConfigError("compatibility matrix has non-finite entries");
      if ((*this)(a, b) != (*this)(b, a)) throw ConfigError("compatibility matrix must be symmetric");
    }
}

LabelImage MarginalField::argmax() const {
  LabelImage out(width, height);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const double* row = &q[i * num_classes];
    out.data[i] = static_cast<std::uint16_t>(std::max_element(row, row + num_classes) - row);
  }
  return out;
}

std::vector<double> gaussian_filter_bruteforce(std::span<const double> values, int value_dim,
                                               std::span<const double> features, int feature_dim, int workers) {
  check_filter_args(values, value_dim, features, feature_dim);
  if (features.size() / feature_dim > kMaxExactPoints)
    throw DataError("brute-force filtering is limited to " + std::to_string(kMaxExactPoints) + " points");
  return exact_filter(values, value_dim, features, feature_dim, workers);
}

std::vector<double> permutohedral_filter(std::span<const double> values, int value_dim,
                                         std::span<const double> features, int feature_dim,
                                         const LatticeOptions& options) {
  check_filter_args(values, value_dim, features, feature_dim);
  PermutohedralLattice lattice(features, feature_dim, options);
  std::vector<double> out(values.size());
  lattice.filter(values, out, value_dim);
  return out;
}

MarginalField mean_field_infer(int width, int height, std::span<const double> logits, int num_classes,
                               std::span<const double> cond, int cond_bands, const CrfParams& params,
                               const CompatibilityMatrix& mu, const InferenceOptions& options,
                               std::span<const double> elevation) {
  if (width < 1 || height < 1) throw DataError("inference needs a non-empty image");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  const int L = num_classes;
  if (L < 1) throw DataError("inference needs at least one class");
  if (logits.size() != n * L) throw DataError("logit array does not match the image size");
  if (cond_bands < 0 || cond.size() != n * cond_bands) throw DataError("conditioning array does not match the image size");
  if (!elevation.empty() && elevation.size() != n) throw DataError("elevation array does not match the image size");
  params.validate(cond_bands);
  mu.validate();
  if (mu.num_classes != L)
    throw ConfigError("compatibility matrix is " + std::to_string(mu.num_classes) + "x" +
                      std::to_string(mu.num_classes) + " but there are " + std::to_string(L) + " classes");
  if (options.mode == InferenceMode::Exact && n > kMaxExactPoints)
    throw DataError("exact inference is limited to 64x64 pixels");
  require_finite(logits, "logits");
  require_finite(cond, "conditioning image");
  require_finite(elevation, "elevation");

  const bool with_z = !elevation.empty();
  const int da = 2 + (with_z ? 1 : 0) + cond_bands;
  const int ds = 2 + (with_z ? 1 : 0);
  std::vector<double> fa(n * da), fs(n * ds);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      double* a = &fa[i * da];
      double* s = &fs[i * ds];
      int k = 0;
      a[k] = x / params.theta_alpha;
      s[k++] = x / params.theta_gamma;
      a[k] = y / params.theta_alpha;
      s[k++] = y / params.theta_gamma;
      if (with_z) {
        a[k] = elevation[i] / params.theta_z;
        s[k++] = elevation[i] / params.theta_z;
      }
      for (int c = 0; c < cond_bands; ++c) a[k + c] = cond[i * cond_bands + c] / params.theta_beta[c];
    }
  }

  MarginalField field{width, height, L, std::vector<double>(logits.begin(), logits.end())};
  softmax_rows(field.q, n, L);
  if (n == 1 || (params.w1 == 0.0 && params.w2 == 0.0)) return field;

  std::optional<Kernel> appearance, smoothness;
  if (params.w1 != 0.0)
    appearance.emplace(std::move(fa), da, options.mode, options.lattice, params.normalization, options.workers);
  if (params.w2 != 0.0)
    smoothness.emplace(std::move(fs), ds, options.mode, options.lattice, params.normalization, options.workers);

  std::vector<double> message(n * L);
  for (int it = 0; it < params.num_iterations; ++it) {
    std::fill(message.begin(), message.end(), 0.0);
    if (appearance) {
      const std::vector<double> m = appearance->apply(field.q, L);
      for (std::size_t k = 0; k < message.size(); ++k) message[k] += params.w1 * m[k];
    }
    if (smoothness) {
      const std::vector<double> m = smoothness->apply(field.q, L);
      for (std::size_t k = 0; k < message.size(); ++k) message[k] += params.w2 * m[k];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* qi = &field.q[i * L];
      const double* mi = &message[i * L];
      for (int l = 0; l < L; ++l) {
        double pairwise = 0.0;
        for (int lp = 0; lp < L; ++lp) pairwise += mu(l, lp) * mi[lp];
        qi[l] = logits[i * L + l] - pairwise;
      }
    }
    softmax_rows(field.q, n, L);
  }
  return field;
}

MarginalField mean_field_infer(const Raster& unary_logits, const Raster& cond_image, const CrfParams& params,
                               const CompatibilityMatrix& mu, const InferenceOptions& options) {
  validate(unary_logits);
  validate(cond_image);
  if (unary_logits.width != cond_image.width || unary_logits.height != cond_image.height ||
      !(unary_logits.transform == cond_image.transform) || !(unary_logits.crs == cond_image.crs))
    throw DataError("logits and conditioning image are not aligned (shape, transform and CRS must match)");
  for (double v : unary_logits.data)
    if (unary_logits.is_nodata(v)) throw DataError("logits contain nodata pixels");
  std::vector<double> elevation;
  if (options.elevation) {
    const Raster& z = *options.elevation;
    if (z.bands != 1 || z.width != cond_image.width || z.height != cond_image.height)
      throw DataError("elevation raster must be one band aligned with the conditioning image");
    elevation = z.data;
  }
  const std::vector<double> logits = interleave(unary_logits);
  const std::vector<double> cond = interleave(cond_image);
  return mean_field_infer(cond_image.width, cond_image.height, logits, unary_logits.bands, cond, cond_image.bands,
                          params, mu, options, elevation);
}

namespace {

Raster logits_on_grid(const Raster& lulc_logits, const Raster& cond_image, int workers) {
  validate(lulc_logits);
  validate(cond_image);
  if (lulc_logits.width == cond_image.width && lulc_logits.height == cond_image.height &&
      lulc_logits.transform == cond_image.transform && lulc_logits.crs == cond_image.crs)
    return lulc_logits;
  Raster src = lulc_logits;
  src.kind = RasterKind::Continuous;
  if (src.sample_type != SampleType::Float32) {
    src.sample_type = SampleType::Float32;
    if (src.nodata) src.nodata = static_cast<double>(static_cast<float>(*src.nodata));
  }
  return warp(src, grid_of(cond_image), ResampleMethod::Bilinear, workers);
}

Raster label_raster_like(const Raster& cond_image) {
  Raster out = Raster::zeros(1, cond_image.height, cond_image.width, SampleType::UInt8, cond_image.transform,
                             cond_image.crs, RasterKind::Categorical);
  out.nodata = kUnlabeled;
  return out;
}

}  // namespace

Raster upsample_argmax(const Raster& lulc_logits, const Raster& cond_image, int workers) {
  const Raster up = logits_on_grid(lulc_logits, cond_image, workers);
  Raster out = label_raster_like(cond_image);
  const std::size_t n = up.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    int best = -1;
    double bv = 0.0;
    for (int b = 0; b < up.bands; ++b) {
      const double v = up.data[static_cast<std::size_t>(b) * n + i];
      if (up.is_nodata(v)) {
        best = -1;
        break;
      }
      if (best < 0 || v > bv) {
        best = b;
        bv = v;
      }
    }
    out.data[i] = best < 0 ? kUnlabeled : best;
  }
  return out;
}

LulcRefinement refine_lulc_marginals(const Raster& lulc_logits, const Raster& cond_image, const CrfParams& params,
                                     const RefineLulcOptions& options) {
  const Raster up = logits_on_grid(lulc_logits, cond_image, options.inference.workers);
  const std::size_t n = cond_image.plane_size();
  const int L = up.bands;
  if (L > 255) throw DataError("at most 255 classes fit a uint8 label raster");

  std::vector<double> logits(n * L);
  std::vector<char> valid(n, 1);
  for (int b = 0; b < L; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const double v = up.data[static_cast<std::size_t>(b) * n + i];
      if (up.is_nodata(v)) valid[i] = 0;
      logits[i * L + b] = v;
    }
  for (std::size_t i = 0; i < n; ++i)
    if (!valid[i])
      for (int b = 0; b < L; ++b) logits[i * L + b] = 0.0;

  const int C = cond_image.bands;
  std::vector<double> cond(n * C);
  for (int b = 0; b < C; ++b) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cond_image.data[static_cast<std::size_t>(b) * n + i];
      if (cond_image.is_nodata(v)) continue;
      sum += v;
      ++count;
    }
    const double mean = count ? sum / count : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cond_image.data[static_cast<std::size_t>(b) * n + i];
      if (!cond_image.is_nodata(v)) sq += (v - mean) * (v - mean);
    }
    const double sd = count ? std::sqrt(sq / count) : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = cond_image.data[static_cast<std::size_t>(b) * n + i];
      double f = cond_image.is_nodata(v) ? mean : v;
      if (options.standardize) f = sd > 0.0 ? (f - mean) / sd : 0.0;
      cond[i * C + b] = f;
    }
  }

  std::vector<double> elevation;
  if (options.inference.elevation) {
    const Raster& z = *options.inference.elevation;
    if (z.bands != 1 || z.width != cond_image.width || z.height != cond_image.height)
      throw DataError("elevation raster must be one band aligned with the conditioning image");
    elevation = z.data;
    for (double& v : elevation)
      if (z.is_nodata(v)) v = 0.0;
  }

  const MarginalField q = mean_field_infer(cond_image.width, cond_image.height, logits, L, cond, C, params,
                                           CompatibilityMatrix::potts(L), options.inference, elevation);
  const LabelImage labels = q.argmax();
  LulcRefinement out;
  out.labels = label_raster_like(cond_image);
  for (std::size_t i = 0; i < n; ++i) out.labels.data[i] = valid[i] ? labels.data[i] : kUnlabeled;
  out.log_marginals = Raster::zeros(L, cond_image.height, cond_image.width, SampleType::Float32, cond_image.transform,
                                    cond_image.crs);
  out.log_marginals.nodata = -9999.0;
  for (int b = 0; b < L; ++b)
    for (std::size_t i = 0; i < n; ++i)
      out.log_marginals.data[static_cast<std::size_t>(b) * n + i] =
          valid[i] ? static_cast<float>(std::log(std::max(q.q[i * L + b], 1e-30))) : -9999.0;
  return out;
}

Raster refine_lulc(const Raster& lulc_logits, const Raster& cond_image, const CrfParams& params,
                   const RefineLulcOptions& options) {
  return refine_lulc_marginals(lulc_logits, cond_image, params, options).labels;
}

}  // namespace aerolabel
