#include "aerolabel/tuning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <set>

#include "aerolabel/error.hpp"
#include "aerolabel/hash.hpp"
#include "aerolabel/parallel.hpp"
#include "json.hpp"

namespace aerolabel {
namespace {

constexpr double kFar = 1e20;

// Felzenszwalb-Huttenlocher 1-D squared distance transform of f (in place).
void dt1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      s = ((f[q] + static_cast<double>(q) * q) - (f[v[k]] + static_cast<double>(v[k]) * v[k])) / (2.0 * q - 2.0 * v[k]);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = static_cast<double>(q - v[k]) * (q - v[k]) + f[v[k]];
  }
  f.swap(d);
}

}  // namespace

Image<double> squared_distance_to(const ImageU8& mask) {
  const int W = mask.width, H = mask.height;
  Image<double> out(W, H, kFar);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i]) out.data[i] = 0.0;
  const int m = std::max(W, H);
  std::vector<double> f, d(m);
  std::vector<int> v(m);
  std::vector<double> z(m + 1);
  for (int x = 0; x < W; ++x) {
    f.resize(H);
    d.resize(H);
    for (int y = 0; y < H; ++y) f[y] = out.at(x, y);
    dt1d(f, d, v, z);
    for (int y = 0; y < H; ++y) out.at(x, y) = std::min(f[y], kFar);
  }
  for (int y = 0; y < H; ++y) {
    f.resize(W);
    d.resize(W);
    for (int x = 0; x < W; ++x) f[x] = out.at(x, y);
    dt1d(f, d, v, z);
    for (int x = 0; x < W; ++x) out.at(x, y) = std::min(f[x], kFar);
  }
  return out;
}

void BoundaryLossConfig::validate() const {
  if (theta0 < 1 || theta < theta0) throw ConfigError("boundary loss radii must satisfy theta >= theta0 >= 1");
}

ImageU8 class_boundary(const LabelImage& labels, int cls, int radius) {
  ImageU8 in(labels.width, labels.height), out_(labels.width, labels.height);
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    in.data[i] = labels.data[i] == cls;
    out_.data[i] = !in.data[i];
  }
  const Image<double> to_in = squared_distance_to(in);
  const Image<double> to_out = squared_distance_to(out_);
  const double r2 = static_cast<double>(radius) * radius;
  ImageU8 b(labels.width, labels.height);
  for (std::size_t i = 0; i < labels.data.size(); ++i) b.data[i] = (in.data[i] ? to_out.data[i] : to_in.data[i]) <= r2;
  return b;
}

double boundary_loss(const LabelImage& pred, const LabelImage& gt, const BoundaryLossConfig& cfg) {
  cfg.validate();
  if (!pred.same_shape(gt)) throw DataError("boundary loss inputs differ in shape");
  std::set<int> classes;
  for (auto v : pred.data)
    if (v != kUnlabeled) classes.insert(v);
  for (auto v : gt.data)
    if (v != kUnlabeled) classes.insert(v);
  const double t2 = static_cast<double>(cfg.theta) * cfg.theta;
  double sum = 0.0;
  int counted = 0;
  for (int c : classes) {
    const ImageU8 bp = class_boundary(pred, c, cfg.theta0);
    const ImageU8 bg = class_boundary(gt, c, cfg.theta0);
    const std::size_t np = static_cast<std::size_t>(std::count(bp.data.begin(), bp.data.end(), 1));
    const std::size_t ng = static_cast<std::size_t>(std::count(bg.data.begin(), bg.data.end(), 1));
    if (np == 0 && ng == 0) continue;
    ++counted;
    if (np == 0 || ng == 0) continue;  // BF1 = 0
    const Image<double> dg = squared_distance_to(bg);
    const Image<double> dp = squared_distance_to(bp);
    std::size_t mp = 0, mg = 0;
    for (std::size_t i = 0; i < bp.data.size(); ++i) {
      if (bp.data[i] && dg.data[i] <= t2) ++mp;
      if (bg.data[i] && dp.data[i] <= t2) ++mg;
    }
    const double P = static_cast<double>(mp) / np;
    const double R = static_cast<double>(mg) / ng;
    if (P + R > 0.0) sum += 2.0 * P * R / (P + R);
  }
  return counted ? 1.0 - sum / counted : 0.0;
}

double weighted_cross_entropy(const MarginalField& q, const LabelImage& gt, const std::vector<double>& class_weights) {
  if (gt.width != q.width || gt.height != q.height) throw DataError("marginals and ground truth differ in shape");
  if (static_cast<int>(class_weights.size()) != q.num_classes)
    throw ConfigError("class weight count must equal the number of classes");
  for (double w : class_weights)
    if (!(w >= 0.0)) throw ConfigError("class weights must be >= 0");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const int y = gt.data[i];
    if (y == kUnlabeled || y >= q.num_classes) continue;
    sum += class_weights[y] * -std::log(std::max(q.q[i * q.num_classes + y], 1e-12));
    ++n;
  }
  if (n == 0) throw DataError("ground truth has no labeled pixels");
  return sum / static_cast<double>(n);
}

void SearchSpace::validate() const {
  if (budget < 1) throw ConfigError("search budget must be >= 1");
  if (params.empty()) throw ConfigError("search space has no parameters");
  for (const auto& p : params) {
    if (!(p.lower < p.upper)) throw ConfigError("search bound for '" + p.name + "' needs lower < upper");
    if (p.log_scale && !(p.lower > 0.0)) throw ConfigError("log-scale bound for '" + p.name + "' must be positive");
  }
}

namespace {

// Unit-cube coordinate <-> parameter value.
double to_unit(const ParamSpec& p, double x) {
  if (p.log_scale) return (std::log(x) - std::log(p.lower)) / (std::log(p.upper) - std::log(p.lower));
  return (x - p.lower) / (p.upper - p.lower);
}

double from_unit(const ParamSpec& p, double u) {
  u = std::clamp(u, 0.0, 1.0);
  double x = p.log_scale ? std::exp(std::log(p.lower) + u * (std::log(p.upper) - std::log(p.lower)))
                         : p.lower + u * (p.upper - p.lower);
  return std::clamp(x, p.lower, p.upper);
}

// Truncated-Gaussian Parzen estimator on [0, 1] with a broad prior component.
class Parzen {
 public:
  explicit Parzen(std::vector<double> pts) {
    std::sort(pts.begin(), pts.end());
    mus_ = pts;
    mus_.push_back(0.5);
    const int n = static_cast<int>(pts.size());
    const double min_bw = 1.0 / std::min(100.0, 1.0 + n);
    for (int i = 0; i < n; ++i) {
      const double left = i > 0 ? pts[i] - pts[i - 1] : pts[i];
      const double right = i + 1 < n ? pts[i + 1] - pts[i] : 1.0 - pts[i];
      sigmas_.push_back(std::clamp(std::max(left, right), min_bw, 1.0));
    }
    sigmas_.push_back(1.0);
    for (std::size_t k = 0; k < mus_.size(); ++k) mass_.push_back(cdf(1.0, k) - cdf(0.0, k));
  }

  double sample(std::mt19937_64& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, mus_.size() - 1);
    const std::size_t k = pick(rng);
    std::normal_distribution<double> N(mus_[k], sigmas_[k]);
    for (int tries = 0; tries < 64; ++tries) {
      const double x = N(rng);
      if (x >= 0.0 && x <= 1.0) return x;
    }
    return std::clamp(mus_[k], 0.0, 1.0);
  }

  double log_pdf(double x) const {
    double s = 0.0;
    for (std::size_t k = 0; k < mus_.size(); ++k) {
      const double z = (x - mus_[k]) / sigmas_[k];
      s += std::exp(-0.5 * z * z) / (sigmas_[k] * std::sqrt(2.0 * std::numbers::pi) * mass_[k]);
    }
    return std::log(std::max(s / static_cast<double>(mus_.size()), 1e-300));
  }

 private:
  double cdf(double x, std::size_t k) const { return 0.5 * std::erfc(-(x - mus_[k]) / (sigmas_[k] * std::sqrt(2.0))); }

  std::vector<double> mus_, sigmas_, mass_;
};

std::vector<double> random_point(const SearchSpace& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x;
  for (const auto& p : space.params) x.push_back(from_unit(p, U(rng)));
  return x;
}

std::vector<double> tpe_point(const SearchSpace& space, const std::vector<Trial>& done, const TpeOptions& opt,
                              std::mt19937_64& rng) {
  std::vector<const Trial*> ok;
  for (const auto& t : done)
    if (t.status == TrialStatus::Ok) ok.push_back(&t);
  if (static_cast<int>(ok.size()) < std::max(2, opt.startup_trials)) return random_point(space, rng);
  std::stable_sort(ok.begin(), ok.end(), [](const Trial* a, const Trial* b) { return a->score < b->score; });
  const std::size_t n_good =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(opt.gamma * ok.size())), 1, ok.size() - 1);

  const std::size_t D = space.params.size();
  std::vector<Parzen> good, bad;
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<double> g, b;
    for (std::size_t i = 0; i < ok.size(); ++i)
      (i < n_good ? g : b).push_back(std::clamp(to_unit(space.params[d], ok[i]->params[d]), 0.0, 1.0));
    good.emplace_back(std::move(g));
    bad.emplace_back(std::move(b));
  }
  std::vector<double> best_u(D);
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < std::max(1, opt.candidates); ++c) {
    std::vector<double> u(D);
    double score = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      u[d] = good[d].sample(rng);
      score += good[d].log_pdf(u[d]) - bad[d].log_pdf(u[d]);
    }
    if (score > best_score) {
      best_score = score;
      best_u = u;
    }
  }
  std::vector<double> x(D);
  for (std::size_t d = 0; d < D; ++d) x[d] = from_unit(space.params[d], best_u[d]);
  return x;
}

}  // namespace

TuneResult tune(const SearchSpace& space, const Objective& objective, SearchStrategy strategy, int width,
                const TpeOptions& tpe) {
  space.validate();
  if (width < 1) throw ConfigError("search width must be >= 1");
  if (!(tpe.gamma > 0.0 && tpe.gamma < 1.0)) throw ConfigError("TPE gamma must be in (0, 1)");
  TuneResult result;
  result.trials.reserve(space.budget);
  for (int start = 0; start < space.budget; start += width) {
    const int count = std::min(width, space.budget - start);
    std::vector<Trial> batch(count);
    for (int k = 0; k < count; ++k) {
      const int id = start + k;
      std::mt19937_64 rng(derive_seed(space.seed, 0x7475, static_cast<std::uint64_t>(id)));
      batch[k].id = id;
      batch[k].params = strategy == SearchStrategy::Random ? random_point(space, rng)
                                                           : tpe_point(space, result.trials, tpe, rng);
    }
    parallel_for(static_cast<std::size_t>(count), width, [&](std::size_t k) {
      Trial& t = batch[k];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        t.score = objective(t.params, derive_seed(space.seed, 0x6f626a, static_cast<std::uint64_t>(t.id)));
        if (!std::isfinite(t.score)) {
          t.status = TrialStatus::Failed;
          t.error = "objective returned a non-finite score";
        }
      } catch (const std::exception& e) {
        t.status = TrialStatus::Failed;
        t.error = e.what();
      }
      t.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
    for (auto& t : batch) result.trials.push_back(std::move(t));
  }
  for (const auto& t : result.trials) {
    if (t.status != TrialStatus::Ok) continue;
    if (result.best_trial < 0 || t.score < result.best_score) {
      result.best_trial = t.id;
      result.best_score = t.score;
      result.best_params = t.params;
    }
  }
  if (result.best_trial < 0) throw NumericalError("every search trial failed");
  return result;
}

std::string trial_log_line(const Trial& t, const SearchSpace& space, bool with_duration) {
  nlohmann::ordered_json j;
  j["trial"] = t.id;
  nlohmann::ordered_json p = nlohmann::ordered_json::object();
  for (std::size_t d = 0; d < space.params.size() && d < t.params.size(); ++d) p[space.params[d].name] = t.params[d];
  j["params"] = p;
  if (t.status == TrialStatus::Ok) {
    j["score"] = t.score;
  } else {
    j["score"] = nullptr;
  }
  j["status"] = t.status == TrialStatus::Ok ? "ok" : "failed";
  if (with_duration) j["duration_s"] = t.duration_s;
  if (!t.error.empty()) j["error"] = t.error;
  return j.dump();
}

void write_trial_log(const TuneResult& result, const SearchSpace& space, const std::filesystem::path& path,
                     bool with_duration) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trial log " + path.string());
  for (const auto& t : result.trials) out << trial_log_line(t, space, with_duration) << '\n';
}

SearchSpace crf_search_space(int bands, int budget, std::uint64_t seed) {
  SearchSpace s;
  s.budget = budget;
  s.seed = seed;
  s.params = {{"w1", 0.01, 100.0, true},
              {"w2", 0.01, 100.0, true},
              {"theta_alpha", 1.0, 200.0, false},
              {"theta_gamma", 1.0, 200.0, false}};
  for (int b = 0; b < bands; ++b) s.params.push_back({"theta_beta_" + std::to_string(b), 0.1, 130.0, true});
  return s;
}

CrfParams crf_params_from(const std::vector<double>& x, const SearchSpace& space, CrfParams base) {
  if (x.size() != space.params.size()) throw ConfigError("parameter vector does not match the search space");
  for (std::size_t d = 0; d < x.size(); ++d) {
    const std::string& n = space.params[d].name;
    if (n == "w1") base.w1 = x[d];
    else if (n == "w2") base.w2 = x[d];
    else if (n == "theta_alpha") base.theta_alpha = x[d];
    else if (n == "theta_gamma") base.theta_gamma = x[d];
    else if (n.rfind("theta_beta_", 0) == 0) {
      const std::size_t b = std::stoul(n.substr(11));
      if (base.theta_beta.size() <= b) base.theta_beta.resize(b + 1, 1.0);
      base.theta_beta[b] = x[d];
    } else if (n == "num_iterations") base.num_iterations = static_cast<int>(std::lround(x[d]));
    else throw ConfigError("unknown CRF search parameter '" + n + "'");
  }
  return base;
}

}  // namespace aerolabel
