#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace aerolabel {

struct LatticeOptions {
  /// Blur passes per lattice direction. The lattice is refined so the total
  /// kernel variance stays 1; 1 is the classic coarse lattice.
  int blur_passes = 2;
  /// Rings of empty vertices added around the splatted ones so blurred mass
  /// is not lost at the edge of the occupied set.
  int dilation = 2;
  /// Points at which exact kernel sums are computed to fit one global gain.
  /// 0 keeps the analytic dense-cloud gain.
  int calibration_samples = 64;
};

/// Sparse permutohedral lattice for approximate high-dimensional Gaussian
/// filtering (splat -> blur -> slice).
///
/// Features are expected in unit-bandwidth form, i.e. already divided by
/// their kernel bandwidths, so the filter approximates
///   out_i = sum_j exp(-|f_i - f_j|^2 / 2) * v_j
/// including the j == i term.
class PermutohedralLattice {
 public:
  /// `features` is row-major N x dim; dim must be in [1, 16].
  PermutohedralLattice(std::span<const double> features, int dim, const LatticeOptions& options = {});

  /// `values`/`out` are row-major N x value_dim.
  void filter(std::span<const double> values, std::span<double> out, int value_dim) const;

  /// Response of point i to its own splat, in the same units as `filter`.
  /// Subtracting self_weight(i) * v_i gives the sum over j != i. Computed
  /// for a fully populated lattice; with little dilation, isolated points
  /// lose part of their own blurred mass and the difference can dip below 0.
  double self_weight(int i) const { return self_weight_[static_cast<std::size_t>(i)]; }

  int num_points() const { return num_points_; }
  int dim() const { return dim_; }
  int num_vertices() const { return num_vertices_; }
  /// Output scale actually applied (analytic gain times calibration).
  double scale() const { return scale_; }

  /// Raw lattice mass per unit Gaussian integral for a dense uniform cloud.
  static double lattice_gain(int dim, int blur_passes);
  static double refinement(int blur_passes);

 private:
  void raw_filter(std::span<const double> values, std::span<double> out, int value_dim) const;
  void calibrate(std::span<const double> features, int samples);

  int num_points_ = 0;
  int dim_ = 0;
  int num_vertices_ = 0;
  int blur_passes_ = 1;
  double scale_ = 1.0;
  std::vector<std::int32_t> offsets_;     // N x (dim+1) lattice vertex ids
  std::vector<double> barycentric_;       // N x (dim+1)
  std::vector<double> self_raw_;          // N, unscaled
  std::vector<double> self_weight_;       // N
  std::vector<std::int32_t> neighbours_;  // (dim+1) x M x 2, -1 when absent
};

}  // namespace aerolabel
