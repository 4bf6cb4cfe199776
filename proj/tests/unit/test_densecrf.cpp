#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "aerolabel/densecrf.hpp"
#include "aerolabel/error.hpp"

using namespace aerolabel;

namespace {

// Literal double loop over (i, j != i).
std::vector<double> double_loop(const std::vector<double>& v, int L, const std::vector<double>& f, int D) {
  const int n = static_cast<int>(f.size()) / D;
  std::vector<double> out(v.size(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (int k = 0; k < D; ++k) d2 += (f[i * D + k] - f[j * D + k]) * (f[i * D + k] - f[j * D + k]);
      for (int c = 0; c < L; ++c) out[i * L + c] += std::exp(-0.5 * d2) * v[j * L + c];
    }
  return out;
}

// Step-by-step mean field on a tiny grid written directly from the model
// definition: kernels evaluated from pixel coordinates and intensities.
std::vector<double> reference_mean_field(int W, int H, const std::vector<double>& logits, int L,
                                         const std::vector<double>& img, int C, const CrfParams& p, bool symmetric) {
  const int n = W * H;
  auto k_app = [&](int i, int j) {
    const double dx = (i % W - j % W) / p.theta_alpha, dy = (i / W - j / W) / p.theta_alpha;
    double e = dx * dx + dy * dy;
    for (int c = 0; c < C; ++c) {
      const double di = (img[i * C + c] - img[j * C + c]) / p.theta_beta[c];
      e += di * di;
    }
    return std::exp(-0.5 * e);
  };
  auto k_smooth = [&](int i, int j) {
    const double dx = (i % W - j % W) / p.theta_gamma, dy = (i / W - j / W) / p.theta_gamma;
    return std::exp(-0.5 * (dx * dx + dy * dy));
  };
  std::vector<double> na(n, 1.0), ns(n, 1.0);
  if (symmetric) {
    for (int i = 0; i < n; ++i) {
      double sa = 0, ss = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          sa += k_app(i, j);
          ss += k_smooth(i, j);
        }
      na[i] = 1.0 / std::sqrt(sa);
      ns[i] = 1.0 / std::sqrt(ss);
    }
  }
  std::vector<double> q(n * L);
  auto normalize = [&](std::vector<double>& e) {
    for (int i = 0; i < n; ++i) {
      double mx = -1e300;
      for (int l = 0; l < L; ++l) mx = std::max(mx, e[i * L + l]);
      double s = 0;
      for (int l = 0; l < L; ++l) s += std::exp(e[i * L + l] - mx);
      for (int l = 0; l < L; ++l) q[i * L + l] = std::exp(e[i * L + l] - mx) / s;
    }
  };
  normalize(const_cast<std::vector<double>&>(logits));
  for (int it = 0; it < p.num_iterations; ++it) {
    std::vector<double> energy(n * L);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < L; ++l) {
        double pen = 0.0;
        for (int lp = 0; lp < L; ++lp) {
          if (lp == l) continue;  // Potts
          double m = 0.0;
          for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            m += p.w1 * na[i] * k_app(i, j) * na[j] * q[j * L + lp] + p.w2 * ns[i] * k_smooth(i, j) * ns[j] * q[j * L + lp];
          }
          pen += m;
        }
        energy[i * L + l] = logits[i * L + l] - pen;
      }
    normalize(energy);
  }
  return q;
}

struct Instance {
  int W, H, L, C;
  std::vector<double> logits, img;
};

// Piecewise-constant image with a few Voronoi regions; logits favour each
// region's class with noise.
Instance blob_instance(std::uint64_t seed, int W, int H, int L, int C, double noise) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> U(0, 1);
  std::normal_distribution<double> N(0, 1);
  const int K = 6;
  std::vector<double> cx(K), cy(K), col(K * C);
  std::vector<int> cls(K);
  for (int k = 0; k < K; ++k) {
    cx[k] = U(g) * W;
    cy[k] = U(g) * H;
    cls[k] = static_cast<int>(g() % L);
    for (int c = 0; c < C; ++c) col[k * C + c] = U(g);
  }
  Instance in{W, H, L, C, std::vector<double>(W * H * L), std::vector<double>(W * H * C)};
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      int best = 0;
      double bd = 1e300;
      for (int k = 0; k < K; ++k) {
        const double d = (x - cx[k]) * (x - cx[k]) + (y - cy[k]) * (y - cy[k]);
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      const int i = y * W + x;
      for (int c = 0; c < C; ++c) in.img[i * C + c] = col[best * C + c] + 0.02 * N(g);
      for (int l = 0; l < L; ++l) in.logits[i * L + l] = (l == cls[best] ? 1.0 : 0.0) + noise * N(g);
    }
  return in;
}

}  // namespace

TEST(BruteForceFilter, SinglePixelIsZero) {
  const std::vector<double> v{3.0, 4.0}, f{0.1, 0.2, 0.3};
  EXPECT_EQ(gaussian_filter_bruteforce(v, 2, f, 3), (std::vector<double>{0.0, 0.0}));
}

TEST(BruteForceFilter, IdenticalFeaturesSwapValues) {
  const std::vector<double> v{1.5, -2.0}, f{0.7, 0.7};
  EXPECT_EQ(gaussian_filter_bruteforce(v, 1, f, 1), (std::vector<double>{-2.0, 1.5}));
}

TEST(BruteForceFilter, MatchesDoubleLoopOnRandom8x8) {
  std::mt19937_64 g(8);
  std::uniform_real_distribution<double> U(-2, 2);
  std::vector<double> v(64 * 3), f(64 * 5);
  for (auto& x : v) x = U(g);
  for (auto& x : f) x = U(g);
  const auto ref = double_loop(v, 3, f, 5);
  for (int workers : {1, 3}) {
    const auto out = gaussian_filter_bruteforce(v, 3, f, 5, workers);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  }
}

TEST(BruteForceFilter, EnforcesSizeCap) {
  std::vector<double> v(4097, 1.0), f(4097, 0.0);
  EXPECT_THROW(gaussian_filter_bruteforce(v, 1, f, 1), DataError);
}

TEST(Permutohedral, ConstantFieldAfterNormalization) {
  const Instance in = blob_instance(3, 24, 24, 2, 3, 0.0);
  std::vector<double> f(24 * 24 * 5);
  for (int i = 0; i < 24 * 24; ++i) {
    f[i * 5] = (i % 24) / 5.0;
    f[i * 5 + 1] = (i / 24) / 5.0;
    for (int c = 0; c < 3; ++c) f[i * 5 + 2 + c] = in.img[i * 3 + c] / 0.3;
  }
  std::vector<double> ones(24 * 24, 1.0), v(24 * 24, 2.5);
  const auto a = permutohedral_filter(v, 1, f, 5);
  const auto b = permutohedral_filter(ones, 1, f, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i] / b[i], 2.5, 2.5e-3);
}

TEST(Permutohedral, PointOrderIndependent) {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> U(0, 3);
  const int n = 300, D = 4, L = 2;
  std::vector<double> f(n * D), v(n * L);
  for (auto& x : f) x = U(g);
  for (auto& x : v) x = U(g);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), g);
  std::vector<double> fp(n * D), vp(n * L);
  for (int i = 0; i < n; ++i) {
    std::copy_n(&f[perm[i] * D], D, &fp[i * D]);
    std::copy_n(&v[perm[i] * L], L, &vp[i * L]);
  }
  const auto a = permutohedral_filter(v, L, f, D);
  const auto b = permutohedral_filter(vp, L, fp, D);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < L; ++c) EXPECT_NEAR(b[i * L + c], a[perm[i] * L + c], 1e-12 * std::max(1.0, std::abs(a[perm[i] * L + c])));
}

TEST(Permutohedral, SelfWeightRemovesOwnContribution) {
  // Two far-apart points: the self-excluded response is ~0. One ring of
  // dilation completes every blur path between a 2-D simplex's vertices.
  const std::vector<double> f{0.0, 0.0, 50.0, 50.0};
  PermutohedralLattice lat(f, 2, LatticeOptions{1, 1, 0});
  const std::vector<double> v{1.0, 1.0};
  std::vector<double> out(2);
  lat.filter(v, out, 1);
  EXPECT_NEAR(out[0] - lat.self_weight(0), 0.0, 1e-12);
  EXPECT_GT(lat.self_weight(0), 0.0);
}

TEST(Permutohedral, RejectsBadDimensions) {
  std::vector<double> f(17, 0.0);
  EXPECT_THROW(PermutohedralLattice(f, 17), DataError);
  EXPECT_THROW(PermutohedralLattice(std::vector<double>(5, 0.0), 2), DataError);
}

TEST(MeanField, ZeroWeightsKeepUnaryArgmax) {
  for (int seed = 0; seed < 20; ++seed) {
    const Instance in = blob_instance(seed, 9, 7, 4, 2, 1.0);
    CrfParams p;
    p.w1 = p.w2 = 0.0;
    p.theta_beta = {0.5, 0.5};
    p.num_iterations = 1 + seed % 7;
    const MarginalField q = mean_field_infer(9, 7, in.logits, 4, in.img, 2, p, CompatibilityMatrix::potts(4));
    for (int i = 0; i < 63; ++i) {
      const auto* row = &in.logits[i * 4];
      EXPECT_EQ(q.argmax().data[i], std::max_element(row, row + 4) - row);
    }
  }
}

TEST(MeanField, SinglePixelIsSoftmax) {
  const std::vector<double> logits{0.3, -1.2, 2.0}, img{0.5};
  CrfParams p;
  p.theta_beta = {1.0};
  p.w1 = 50;
  p.w2 = 7;
  for (auto mode : {InferenceMode::Exact, InferenceMode::Lattice}) {
    const MarginalField q = mean_field_infer(1, 1, logits, 3, img, 1, p, CompatibilityMatrix::potts(3), {mode});
    const double z = std::exp(0.3) + std::exp(-1.2) + std::exp(2.0);
    EXPECT_DOUBLE_EQ(q.q[0], std::exp(0.3) / z);
    EXPECT_DOUBLE_EQ(q.q[1], std::exp(-1.2) / z);
    EXPECT_DOUBLE_EQ(q.q[2], std::exp(2.0) / z);
  }
}

TEST(MeanField, ExactMatchesHandRolledReference3x3) {
  std::mt19937_64 g(33);
  std::normal_distribution<double> N(0, 1);
  std::vector<double> logits(18), img(9 * 2);
  for (auto& x : logits) x = N(g);
  for (auto& x : img) x = N(g);
  CrfParams p;
  p.w1 = 2.5;
  p.w2 = 1.25;
  p.theta_alpha = 2.0;
  p.theta_gamma = 1.5;
  p.theta_beta = {0.8, 1.7};
  p.num_iterations = 5;
  for (auto norm : {KernelNormalization::None, KernelNormalization::Symmetric}) {
    p.normalization = norm;
    const auto ref = reference_mean_field(3, 3, logits, 2, img, 2, p, norm == KernelNormalization::Symmetric);
    const MarginalField q = mean_field_infer(3, 3, logits, 2, img, 2, p, CompatibilityMatrix::potts(2), {InferenceMode::Exact});
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(q.q[i], ref[i], 1e-9);
  }
}

TEST(MeanField, MarginalsNormalizedAndInOpenSimplex) {
  const Instance in = blob_instance(5, 20, 16, 3, 3, 0.8);
  CrfParams p;
  p.w1 = 47.4;
  p.w2 = 10.0;
  p.theta_alpha = 194;
  p.theta_gamma = 3;
  p.theta_beta = {0.22, 2.71, 1.0};
  for (int iters : {1, 5, 20}) {
    p.num_iterations = iters;
    for (auto mode : {InferenceMode::Exact, InferenceMode::Lattice}) {
      const MarginalField q = mean_field_infer(20, 16, in.logits, 3, in.img, 3, p, CompatibilityMatrix::potts(3), {mode});
      for (int i = 0; i < 320; ++i) {
        double s = 0.0;
        for (int l = 0; l < 3; ++l) {
          EXPECT_GT(q.q[i * 3 + l], 0.0);
          s += q.q[i * 3 + l];
        }
        EXPECT_NEAR(s, 1.0, 1e-6);
      }
    }
  }
}

TEST(MeanField, ExactIndependentOfWorkerCount) {
  const Instance in = blob_instance(6, 16, 16, 3, 2, 0.5);
  CrfParams p;
  p.theta_beta = {0.3, 0.3};
  p.theta_alpha = 8;
  InferenceOptions o{InferenceMode::Exact};
  const MarginalField a = mean_field_infer(16, 16, in.logits, 3, in.img, 2, p, CompatibilityMatrix::potts(3), o);
  o.workers = 4;
  const MarginalField b = mean_field_infer(16, 16, in.logits, 3, in.img, 2, p, CompatibilityMatrix::potts(3), o);
  EXPECT_EQ(a.q, b.q);
}

TEST(MeanField, LatticeAgreesWithExactOnRandomInstances) {
  CrfParams p;
  p.w1 = 10.0;
  p.w2 = 3.0;
  p.theta_alpha = 10.0;
  p.theta_gamma = 3.0;
  p.theta_beta = {0.25, 0.25, 0.25};
  p.num_iterations = 5;
  for (int seed = 0; seed < 10; ++seed) {
    const Instance in = blob_instance(100 + seed, 32, 32, 4, 3, 1.0);
    const auto mu = CompatibilityMatrix::potts(4);
    const MarginalField e = mean_field_infer(32, 32, in.logits, 4, in.img, 3, p, mu, {InferenceMode::Exact});
    const MarginalField l = mean_field_infer(32, 32, in.logits, 4, in.img, 3, p, mu, {InferenceMode::Lattice});
    const auto ae = e.argmax(), al = l.argmax();
    int agree = 0;
    double mad = 0.0;
    for (int i = 0; i < 1024; ++i) agree += ae.data[i] == al.data[i];
    for (std::size_t k = 0; k < e.q.size(); ++k) mad += std::abs(e.q[k] - l.q[k]);
    mad /= static_cast<double>(e.q.size());
    EXPECT_GE(agree, 0.95 * 1024) << seed;
    EXPECT_LE(mad, 0.02) << seed;
  }
}

TEST(MeanField, Lattice3x3ArgmaxMatchesExact) {
  std::mt19937_64 g(33);
  std::normal_distribution<double> N(0, 1);
  std::vector<double> logits(18), img(9 * 2);
  for (auto& x : logits) x = N(g);
  for (auto& x : img) x = N(g);
  CrfParams p;
  p.w1 = 2.5;
  p.w2 = 1.25;
  p.theta_alpha = 2.0;
  p.theta_gamma = 1.5;
  p.theta_beta = {0.8, 1.7};
  const auto mu = CompatibilityMatrix::potts(2);
  const auto e = mean_field_infer(3, 3, logits, 2, img, 2, p, mu, {InferenceMode::Exact}).argmax();
  const auto l = mean_field_infer(3, 3, logits, 2, img, 2, p, mu, {InferenceMode::Lattice}).argmax();
  int agree = 0;
  for (int i = 0; i < 9; ++i) agree += e.data[i] == l.data[i];
  EXPECT_GE(agree, 9);
}

TEST(MeanField, ValidatesInputs) {
  const std::vector<double> logits(8, 0.0), img(4, 0.0);
  CrfParams p;
  p.theta_beta = {1.0};
  const auto mu = CompatibilityMatrix::potts(2);
  EXPECT_NO_THROW(mean_field_infer(2, 2, logits, 2, img, 1, p, mu));
  CrfParams bad = p;
  bad.theta_beta = {1.0, 1.0};
  EXPECT_THROW(mean_field_infer(2, 2, logits, 2, img, 1, bad, mu), ConfigError);
  bad = p;
  bad.num_iterations = 0;
  EXPECT_THROW(mean_field_infer(2, 2, logits, 2, img, 1, bad, mu), ConfigError);
  bad = p;
  bad.w1 = -1;
  EXPECT_THROW(mean_field_infer(2, 2, logits, 2, img, 1, bad, mu), ConfigError);
  std::vector<double> nan_logits = logits;
  nan_logits[3] = std::nan("");
  EXPECT_THROW(mean_field_infer(2, 2, nan_logits, 2, img, 1, p, mu), DataError);
  EXPECT_THROW(mean_field_infer(2, 2, logits, 2, img, 1, p, CompatibilityMatrix::potts(3)), ConfigError);
  std::vector<double> big_logits(65 * 65 * 2, 0.0), big_img(65 * 65, 0.0);
  EXPECT_THROW(mean_field_infer(65, 65, big_logits, 2, big_img, 1, p, mu, {InferenceMode::Exact}), DataError);
}

TEST(MeanField, RasterOverloadChecksAlignment) {
  Raster logits = Raster::zeros(2, 4, 4, SampleType::Float32, GeoTransform{}, Crs::local());
  Raster img = Raster::zeros(1, 4, 4, SampleType::Float32, GeoTransform{}, Crs::local());
  CrfParams p;
  p.theta_beta = {1.0};
  EXPECT_NO_THROW(mean_field_infer(logits, img, p, CompatibilityMatrix::potts(2)));
  img.transform.origin_x = 1.0;
  EXPECT_THROW(mean_field_infer(logits, img, p, CompatibilityMatrix::potts(2)), DataError);
}
