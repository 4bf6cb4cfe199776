#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "aerolabel/error.hpp"
#include "aerolabel/tuning.hpp"

using namespace aerolabel;

namespace {

LabelImage split(int W, int H, int col) {
  LabelImage im(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) im.at(x, y) = x < col ? 0 : 1;
  return im;
}

// Brute-force squared distance for the transform check.
double brute_sq(const ImageU8& m, int x, int y) {
  double best = 1e20;
  for (int j = 0; j < m.height; ++j)
    for (int i = 0; i < m.width; ++i)
      if (m.at(i, j)) best = std::min(best, static_cast<double>((i - x) * (i - x) + (j - y) * (j - y)));
  return best;
}

}  // namespace

TEST(DistanceTransform, MatchesBruteForce) {
  std::mt19937 g(9);
  ImageU8 m(23, 17);
  for (auto& v : m.data) v = g() % 11 == 0;
  const auto d = squared_distance_to(m);
  for (int y = 0; y < 17; ++y)
    for (int x = 0; x < 23; ++x) EXPECT_EQ(d.at(x, y), brute_sq(m, x, y));
}

TEST(BoundaryLoss, IdenticalInputsGiveZero) {
  std::mt19937 g(1);
  LabelImage a(20, 20);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) a.at(x, y) = static_cast<std::uint16_t>((x / 5 + y / 7) % 3);
  EXPECT_EQ(boundary_loss(a, a), 0.0);
}

TEST(BoundaryLoss, ShiftedEdgeHandCases) {
  // gt edge between cols 7|8, band (theta0 = 3) covers cols 5..10.
  const LabelImage gt = split(16, 16, 8);
  EXPECT_EQ(boundary_loss(split(16, 16, 9), gt, {3, 5}), 0.0);
  // Edge at 14|15: pred band cols 12..15, all within 5 of the gt band
  // (P = 1); gt cols 7..10 are within 5 of col 12, cols 5, 6 are not
  // (R = 4/6). BF1 = 0.8 for both classes.
  EXPECT_NEAR(boundary_loss(split(16, 16, 15), gt, {3, 5}), 0.2, 1e-12);
  EXPECT_NEAR(boundary_loss(gt, split(16, 16, 15), {3, 5}), 0.2, 1e-12);
}

TEST(BoundaryLoss, FullySeparatedBoundariesGiveOne) {
  EXPECT_EQ(boundary_loss(split(64, 8, 50), split(64, 8, 8), {3, 5}), 1.0);
}

TEST(BoundaryLoss, ClassMissingFromOneSideScoresZeroForThatClass) {
  LabelImage gt = split(16, 16, 8);
  LabelImage pred(16, 16, 0);  // class 1 absent, class 0 has no boundary
  EXPECT_EQ(boundary_loss(pred, gt), 1.0);
}

TEST(BoundaryLoss, PermutationAndSymmetryInvariance) {
  std::mt19937 g(3);
  for (int rep = 0; rep < 10; ++rep) {
    LabelImage a(24, 24), b(24, 24);
    const int ca = 4 + g() % 16, cb = 4 + g() % 16, r = 3 + g() % 15;
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        a.at(x, y) = x < ca ? (y < r ? 0 : 2) : 1;
        b.at(x, y) = x < cb ? 0 : (y < 12 ? 1 : 2);
      }
    const double l = boundary_loss(a, b);
    EXPECT_GE(l, 0.0);
    EXPECT_LE(l, 1.0);
    EXPECT_NEAR(boundary_loss(b, a), l, 1e-12);
    const std::uint16_t perm[3] = {2, 0, 1};
    LabelImage pa = a, pb = b;
    for (auto& v : pa.data) v = perm[v];
    for (auto& v : pb.data) v = perm[v];
    EXPECT_NEAR(boundary_loss(pa, pb), l, 1e-12);
  }
}

TEST(BoundaryLoss, RejectsBadConfigAndShapes) {
  EXPECT_THROW(boundary_loss(split(8, 8, 4), split(8, 8, 4), {0, 5}), ConfigError);
  EXPECT_THROW(boundary_loss(split(8, 8, 4), split(8, 8, 4), {4, 3}), ConfigError);
  EXPECT_THROW(boundary_loss(split(8, 8, 4), split(9, 8, 4)), DataError);
}

TEST(WeightedCrossEntropy, AnalyticCases) {
  MarginalField q{2, 2, 3, std::vector<double>(12, 0.0)};
  LabelImage gt(2, 2);
  gt.data = {0, 1, 2, 1};
  for (int i = 0; i < 4; ++i) q.q[i * 3 + gt.data[i]] = 1.0;
  EXPECT_EQ(weighted_cross_entropy(q, gt, {1, 1, 1}), 0.0);
  std::fill(q.q.begin(), q.q.end(), 1.0 / 3.0);
  EXPECT_NEAR(weighted_cross_entropy(q, gt, {1, 1, 1}), std::log(3.0), 1e-12);
}

TEST(WeightedCrossEntropy, TwoByTwoHandCase) {
  MarginalField q{2, 2, 2, {0.7, 0.3, 0.4, 0.6, 0.9, 0.1, 0.2, 0.8}};
  LabelImage gt(2, 2);
  gt.data = {0, 0, 1, kUnlabeled};
  const double expected = (1.0 * -std::log(0.7) + 1.0 * -std::log(0.4) + 2.0 * -std::log(0.1)) / 3.0;
  EXPECT_NEAR(weighted_cross_entropy(q, gt, {1.0, 2.0}), expected, 1e-12);
  gt.data = {kUnlabeled, kUnlabeled, kUnlabeled, kUnlabeled};
  EXPECT_THROW(weighted_cross_entropy(q, gt, {1.0, 2.0}), DataError);
}

namespace {

SearchSpace line(int budget, std::uint64_t seed) {
  SearchSpace s;
  s.params = {{"x", -10.0, 10.0, false}};
  s.budget = budget;
  s.seed = seed;
  return s;
}

double quad(const std::vector<double>& x, std::uint64_t) { return (x[0] - 3.7) * (x[0] - 3.7); }

}  // namespace

TEST(Tune, BudgetOneReturnsTheSample) {
  const TuneResult r = tune(line(1, 5), quad, SearchStrategy::Tpe);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.best_params, r.trials[0].params);
  EXPECT_EQ(r.best_score, r.trials[0].score);
}

TEST(Tune, RandomFindsQuadraticMinimum) {
  const TuneResult r = tune(line(200, 77), quad, SearchStrategy::Random);
  EXPECT_EQ(r.trials.size(), 200u);
  EXPECT_LE(std::abs(r.best_params[0] - 3.7), 0.05 * 20.0);
}

TEST(Tune, TpeBeatsRandomOnMostSeeds) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const double t = tune(line(50, seed), quad, SearchStrategy::Tpe).best_score;
    const double r = tune(line(50, seed + 1000), quad, SearchStrategy::Random).best_score;
    wins += t <= r;
  }
  EXPECT_GE(wins, 7);
}

TEST(Tune, StaysInBoundsIncludingLogScale) {
  SearchSpace s;
  s.params = {{"a", 0.01, 100.0, true}, {"b", 1.0, 200.0, false}};
  s.budget = 60;
  s.seed = 3;
  const TuneResult r = tune(
      s, [](const std::vector<double>& x, std::uint64_t) { return std::pow(std::log(x[0]) - 1.0, 2) + x[1] / 200.0; },
      SearchStrategy::Tpe, 3);
  EXPECT_EQ(r.trials.size(), 60u);
  for (const auto& t : r.trials) {
    EXPECT_GE(t.params[0], 0.01);
    EXPECT_LE(t.params[0], 100.0);
    EXPECT_GE(t.params[1], 1.0);
    EXPECT_LE(t.params[1], 200.0);
  }
}

TEST(Tune, FailedTrialsAreLoggedAndSkipped) {
  const TuneResult r = tune(
      line(20, 9),
      [](const std::vector<double>& x, std::uint64_t) {
        if (x[0] < 0.0) throw NumericalError("negative");
        return x[0];
      },
      SearchStrategy::Tpe);
  int failed = 0;
  for (const auto& t : r.trials) failed += t.status == TrialStatus::Failed;
  EXPECT_GT(failed, 0);
  EXPECT_GE(r.best_params[0], 0.0);
  EXPECT_EQ(trial_log_line(r.trials[0], line(20, 9)).find("\"trial\":0"), 1u);
}

TEST(Tune, SameSeedAndWidthGiveSameTrials) {
  for (int width : {1, 4}) {
    const TuneResult a = tune(line(30, 12), quad, SearchStrategy::Tpe, width);
    const TuneResult b = tune(line(30, 12), quad, SearchStrategy::Tpe, width);
    ASSERT_EQ(a.trials.size(), b.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) EXPECT_EQ(a.trials[i].params, b.trials[i].params);
  }
}

TEST(Tune, CrfSpaceMapsOntoParams) {
  const SearchSpace s = crf_search_space(2, 10, 1);
  ASSERT_EQ(s.params.size(), 6u);
  const CrfParams p = crf_params_from({1, 2, 3, 4, 5, 6}, s, CrfParams{});
  EXPECT_EQ(p.w1, 1);
  EXPECT_EQ(p.w2, 2);
  EXPECT_EQ(p.theta_alpha, 3);
  EXPECT_EQ(p.theta_gamma, 4);
  EXPECT_EQ(p.theta_beta, (std::vector<double>{5, 6}));
}

TEST(Tune, TrialLogFile) {
  const auto path = std::filesystem::temp_directory_path() / "aerolabel_trials.jsonl";
  const SearchSpace s = line(5, 2);
  write_trial_log(tune(s, quad, SearchStrategy::Random), s, path);
  std::ifstream in(path);
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 5);
  std::filesystem::remove(path);
}
