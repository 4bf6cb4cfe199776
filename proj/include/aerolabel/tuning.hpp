#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "aerolabel/densecrf.hpp"
#include "aerolabel/image.hpp"

namespace aerolabel {

struct BoundaryLossConfig {
  int theta0 = 3;  // boundary extraction radius, pixels
  int theta = 5;   // matching tolerance, pixels

  void validate() const;
};

/// Pixels whose Euclidean distance to the opposite side of class c's mask is
/// at most `radius` (dilation minus erosion with a disk; the image border is
/// not a boundary).
ImageU8 class_boundary(const LabelImage& labels, int cls, int radius);

/// Exact squared Euclidean distance to the nearest nonzero pixel of `mask`
/// (a large sentinel when the mask is empty).
Image<double> squared_distance_to(const ImageU8& mask);

/// 1 - mean over classes of boundary F1. Classes are the ids present in
/// either input, excluding kUnlabeled.
double boundary_loss(const LabelImage& pred, const LabelImage& gt, const BoundaryLossConfig& cfg = {});

/// Mean over labeled gt pixels of w_y * -log(max(Q_y, 1e-12)).
double weighted_cross_entropy(const MarginalField& q, const LabelImage& gt, const std::vector<double>& class_weights);

enum class SearchStrategy { Random, Tpe };

struct ParamSpec {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool log_scale = false;
};

struct SearchSpace {
  std::vector<ParamSpec> params;
  int budget = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TpeOptions {
  double gamma = 0.25;
  int candidates = 24;
  int startup_trials = 10;
};

enum class TrialStatus { Ok, Failed };

struct Trial {
  int id = 0;
  std::vector<double> params;
  double score = 0.0;
  TrialStatus status = TrialStatus::Ok;
  double duration_s = 0.0;
  std::string error;
};

struct TuneResult {
  std::vector<double> best_params;
  double best_score = 0.0;
  int best_trial = -1;
  std::vector<Trial> trials;
};

/// Objective: parameters (in SearchSpace order) and a per-trial seed; lower
/// is better. Exceptions mark the trial failed.
using Objective = std::function<double(const std::vector<double>&, std::uint64_t)>;

/// Trials run in batches of `width` (concurrently when width > 1); each batch
/// is proposed from the trials completed before it, so the trial set depends
/// only on the seed and width.
TuneResult tune(const SearchSpace& space, const Objective& objective, SearchStrategy strategy, int width = 1,
                const TpeOptions& tpe = {});

/// One JSON object per line: trial, params (by name), score, status and,
/// unless disabled, duration_s (wall time, so not reproducible).
void write_trial_log(const TuneResult& result, const SearchSpace& space, const std::filesystem::path& path,
                     bool with_duration = true);
std::string trial_log_line(const Trial& t, const SearchSpace& space, bool with_duration = true);

/// Default CRF search space for `bands` conditioning bands.
SearchSpace crf_search_space(int bands, int budget, std::uint64_t seed);
/// Maps a parameter vector from crf_search_space onto `base`.
CrfParams crf_params_from(const std::vector<double>& x, const SearchSpace& space, CrfParams base);

}  // namespace aerolabel
