#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aerolabel/image.hpp"

namespace aerolabel {

/// Source id -> target id, with ignored sources. Target ids are 0..T-1 with
/// names in `targets`. The unlabeled sentinel passes through unless mapped.
struct ClassMap {
  std::string name;
  std::vector<std::string> targets;
  std::map<int, int> mapping;
  std::set<int> ignore;

  int num_targets() const { return static_cast<int>(targets.size()); }
  /// Throws ConfigError: targets out of range, unreached targets, ids both
  /// mapped and ignored.
  void validate() const;

  static ClassMap identity(int num_classes, const std::vector<std::string>& names = {});
};

/// `second` applied after `first`.
ClassMap compose(const ClassMap& first, const ClassMap& second);

/// Strict JSON: {"name", "targets": [...], "map": {"src": dst, ...}, "ignore": [...]};
/// unknown keys are rejected.
ClassMap parse_class_map(const std::string& json_text);
ClassMap load_class_map(const std::filesystem::path& path);
std::string class_map_to_json(const ClassMap& map);

/// Throws DataError listing every unmapped id.
LabelImage apply_class_map(const LabelImage& labels, const ClassMap& map);

/// Rows are ground truth, columns prediction. Pixels with a valid ground
/// truth but an unlabeled prediction are counted per row in `unpredicted`
/// (they enlarge that class's union).
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes);

  int num_classes() const { return n_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * n_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * n_ + pred]; }
  std::uint64_t unpredicted(int gt) const { return unpredicted_[gt]; }
  std::uint64_t& unpredicted(int gt) { return unpredicted_[gt]; }
  std::uint64_t total() const;
  bool empty() const { return total() == 0; }

  /// Ground-truth pixels equal to kUnlabeled are skipped.
  void accumulate(const LabelImage& pred, const LabelImage& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int n_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::uint64_t> unpredicted_;
};

struct MiouResult {
  /// Empty for classes with zero union.
  std::vector<std::optional<double>> per_class;
  double miou = 0.0;
};

/// Zero-union classes are excluded from the mean; an all-zero matrix throws DataError.
MiouResult miou(const ConfusionMatrix& cm);

struct Trajectory {
  std::string name;
  std::vector<ConfusionMatrix> images;
};

enum class TrajectoryMode {
  /// mIoU of the trajectory's summed confusion matrix.
  SummedConfusion,
  /// Mean of per-image mIoU (images without labeled pixels skipped).
  MeanImageMiou,
};

struct TrajectoryMetrics {
  double dataset_miou = 0.0;
  double traj_avg_miou = 0.0;
  MiouResult dataset;
  std::vector<std::pair<std::string, MiouResult>> per_trajectory;
};

TrajectoryMetrics trajectory_average(const std::vector<Trajectory>& trajectories,
                                     TrajectoryMode mode = TrajectoryMode::SummedConfusion);

/// Long-format CSV: trajectory,class,iou (blank iou for zero-union classes),
/// one block per trajectory followed by the dataset block.
std::string metrics_csv(const TrajectoryMetrics& m, const std::vector<std::string>& class_names);
/// Summary table: dataset_miou,traj_avg_miou.
std::string summary_csv(const TrajectoryMetrics& m);

}  // namespace aerolabel
