#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "aerolabel/image.hpp"
#include "aerolabel/permutohedral.hpp"
#include "aerolabel/raster.hpp"

namespace aerolabel {

/// How kernel sums are scaled before they enter the mean-field message.
/// None uses the raw Gaussian sums. Symmetric uses
/// n_i * sum_{j != i} k_ij * n_j * v_j with n_i = (sum_{j != i} k_ij)^(-1/2).
enum class KernelNormalization { None, Symmetric };

enum class InferenceMode { Exact, Lattice };

struct CrfParams {
  double w1 = 10.0;
  double w2 = 3.0;
  double theta_alpha = 80.0;
  double theta_gamma = 3.0;
  std::vector<double> theta_beta;
  int num_iterations = 5;
  KernelNormalization normalization = KernelNormalization::Symmetric;
  /// Bandwidth of the optional elevation channel (meters); used only when an
  /// elevation raster is supplied.
  double theta_z = 10.0;

  /// Throws ConfigError on an invalid combination; `bands` is the
  /// conditioning image band count.
  void validate(int bands) const;
};

struct CompatibilityMatrix {
  int num_classes = 0;
  std::vector<double> mu;  // row-major L x L

  static CompatibilityMatrix potts(int num_classes);
  double operator()(int a, int b) const { return mu[static_cast<std::size_t>(a) * num_classes + b]; }
  void validate() const;
};

/// Per-pixel class distribution, pixel-major: q[(row * width + col) * L + l].
struct MarginalField {
  int width = 0;
  int height = 0;
  int num_classes = 0;
  std::vector<double> q;

  double at(int row, int col, int l) const {
    return q[(static_cast<std::size_t>(row) * width + col) * num_classes + l];
  }
  /// Ties go to the smallest class id.
  LabelImage argmax() const;
};

/// Largest point count accepted by the O(N^2) exact paths (64 x 64).
inline constexpr std::size_t kMaxExactPoints = 4096;

/// out_i = sum_{j != i} exp(-|f_i - f_j|^2 / 2) * v_j. `values` is N x L and
/// `features` N x D, both row-major, with features in unit-bandwidth form.
std::vector<double> gaussian_filter_bruteforce(std::span<const double> values, int value_dim,
                                               std::span<const double> features, int feature_dim, int workers = 1);

/// Lattice approximation of the same sum, but including the j == i term;
/// subtract self_weight * v_i (see PermutohedralLattice) for the self-excluded form.
std::vector<double> permutohedral_filter(std::span<const double> values, int value_dim,
                                         std::span<const double> features, int feature_dim,
                                         const LatticeOptions& options = {});

struct InferenceOptions {
  InferenceMode mode = InferenceMode::Lattice;
  LatticeOptions lattice;
  int workers = 1;
  /// Optional 1-band elevation raster aligned with the conditioning image;
  /// adds z / theta_z to both kernels' spatial features.
  const Raster* elevation = nullptr;
};

/// Mean-field inference of the fully connected CRF. `unary_logits` holds one
/// band per class; `cond_image` is used as given (bandwidths apply directly).
MarginalField mean_field_infer(const Raster& unary_logits, const Raster& cond_image, const CrfParams& params,
                               const CompatibilityMatrix& mu, const InferenceOptions& options = {});

/// Same as mean_field_infer on plain arrays: logits N x L pixel-major,
/// cond N x C pixel-major, optional elevation N.
MarginalField mean_field_infer(int width, int height, std::span<const double> logits, int num_classes,
                               std::span<const double> cond, int cond_bands, const CrfParams& params,
                               const CompatibilityMatrix& mu, const InferenceOptions& options = {},
                               std::span<const double> elevation = {});

struct RefineLulcOptions {
  InferenceOptions inference;
  /// Standardize each conditioning band to zero mean and unit variance
  /// before bandwidth scaling.
  bool standardize = true;
};

/// Upsamples logits (bilinear) onto the conditioning grid, runs inference and
/// returns a uint8 categorical label raster on that grid. Pixels without
/// logits get 255.
Raster refine_lulc(const Raster& lulc_logits, const Raster& cond_image, const CrfParams& params,
                   const RefineLulcOptions& options = {});

struct LulcRefinement {
  Raster labels;
  /// Float32 log of the final marginals, one band per class; -9999 where the
  /// input had no logits.
  Raster log_marginals;
};

LulcRefinement refine_lulc_marginals(const Raster& lulc_logits, const Raster& cond_image, const CrfParams& params,
                                     const RefineLulcOptions& options = {});

/// Upsampled argmax without refinement, on the conditioning grid.
Raster upsample_argmax(const Raster& lulc_logits, const Raster& cond_image, int workers = 1);

}  // namespace aerolabel
