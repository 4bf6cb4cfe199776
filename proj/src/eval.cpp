#include "aerolabel/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aerolabel/error.hpp"

namespace aerolabel {

void ClassMap::validate() const {
  if (targets.empty()) throw ConfigError("class map '" + name + "' has no targets");
  std::vector<bool> reached(targets.size(), false);
  for (const auto& [src, dst] : mapping) {
    if (src < 0 || src > 65535) throw ConfigError("class map '" + name + "': source id out of range");
    if (dst < 0 || dst >= num_targets())
      throw ConfigError("class map '" + name + "': source " + std::to_string(src) + " maps to unknown target " +
                        std::to_string(dst));
    if (ignore.count(src))
      throw ConfigError("class map '" + name + "': id " + std::to_string(src) + " is both mapped and ignored");
    reached[dst] = true;
  }
  for (std::size_t t = 0; t < reached.size(); ++t)
    if (!reached[t]) throw ConfigError("class map '" + name + "': target '" + targets[t] + "' has no source");
}

ClassMap ClassMap::identity(int num_classes, const std::vector<std::string>& names) {
  ClassMap m;
  m.name = "identity";
  for (int c = 0; c < num_classes; ++c) {
    m.targets.push_back(c < static_cast<int>(names.size()) ? names[c] : "class_" + std::to_string(c));
    m.mapping[c] = c;
  }
  return m;
}

ClassMap compose(const ClassMap& first, const ClassMap& second) {
  ClassMap out;
  out.name = first.name + "+" + second.name;
  out.targets = second.targets;
  out.ignore = first.ignore;
  for (const auto& [src, mid] : first.mapping) {
    if (second.ignore.count(mid)) {
      out.ignore.insert(src);
      continue;
    }
    const auto it = second.mapping.find(mid);
    if (it == second.mapping.end())
      throw ConfigError("cannot compose '" + first.name + "' with '" + second.name + "': intermediate id " +
                        std::to_string(mid) + " is unmapped");
    out.mapping[src] = it->second;
  }
  out.validate();
  return out;
}

ClassMap parse_class_map(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("class map is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("class map must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "name" && key != "targets" && key != "map" && key != "ignore")
      throw ConfigError("unknown class map key '" + key + "'");
  ClassMap m;
  try {
    m.name = j.value("name", std::string("unnamed"));
    m.targets = j.at("targets").get<std::vector<std::string>>();
    for (const auto& [src, dst] : j.at("map").items()) {
      std::size_t pos = 0;
      int id = -1;
      try {
        id = std::stoi(src, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != src.size()) throw ConfigError("class map source key '" + src + "' is not an integer");
      m.mapping[id] = dst.get<int>();
    }
    if (j.contains("ignore")) {
      for (int id : j["ignore"].get<std::vector<int>>()) m.ignore.insert(id);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed class map: ") + e.what());
  }
  m.validate();
  return m;
}

ClassMap load_class_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open class map " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_class_map(ss.str());
}

std::string class_map_to_json(const ClassMap& map) {
  nlohmann::ordered_json j;
  j["name"] = map.name;
  j["targets"] = map.targets;
  nlohmann::ordered_json m = nlohmann::ordered_json::object();
  for (const auto& [src, dst] : map.mapping) m[std::to_string(src)] = dst;
  j["map"] = m;
  j["ignore"] = std::vector<int>(map.ignore.begin(), map.ignore.end());
  return j.dump(2) + "\n";
}

LabelImage apply_class_map(const LabelImage& labels, const ClassMap& map) {
  std::vector<int> lut(65536, -2);  // -2 unmapped, -1 ignored
  for (const auto& [src, dst] : map.mapping) lut[src] = dst;
  for (int id : map.ignore)
    if (id >= 0 && id < 65536) lut[id] = -1;
  if (!map.mapping.count(kUnlabeled) && !map.ignore.count(kUnlabeled)) lut[kUnlabeled] = -1;
  LabelImage out(labels.width, labels.height);
  std::set<int> missing;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int v = lut[labels.data[i]];
    if (v == -2) {
      missing.insert(labels.data[i]);
      continue;
    }
    out.data[i] = v < 0 ? kUnlabeled : static_cast<std::uint16_t>(v);
  }
  if (!missing.empty()) {
    std::string list;
    for (int id : missing) list += (list.empty() ? "" : ", ") + std::to_string(id);
    throw DataError("class map '" + map.name + "' has no entry for label id(s) " + list);
  }
  return out;
}

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : n_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * num_classes, 0),
      unpredicted_(num_classes, 0) {
  if (num_classes < 1 || num_classes >= kUnlabeled) throw ConfigError("confusion matrix needs 1..254 classes");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t s = 0;
  for (auto c : counts_) s += c;
  for (auto c : unpredicted_) s += c;
  return s;
}

void ConfusionMatrix::accumulate(const LabelImage& pred, const LabelImage& gt) {
  if (!pred.same_shape(gt))
    throw DataError("prediction is " + std::to_string(pred.width) + "x" + std::to_string(pred.height) +
                    " but ground truth is " + std::to_string(gt.width) + "x" + std::to_string(gt.height));
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.data[i], p = pred.data[i];
    if (g == kUnlabeled) continue;
    if (g >= n_) throw DataError("ground-truth label " + std::to_string(g) + " is outside the class set");
    if (p == kUnlabeled) {
      ++unpredicted_[g];
      continue;
    }
    if (p >= n_) throw DataError("predicted label " + std::to_string(p) + " is outside the class set");
    ++counts_[static_cast<std::size_t>(g) * n_ + p];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (n_ == 0) return *this = other;
  if (other.n_ == 0) return *this;
  if (other.n_ != n_) throw DataError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  for (std::size_t i = 0; i < unpredicted_.size(); ++i) unpredicted_[i] += other.unpredicted_[i];
  return *this;
}

MiouResult miou(const ConfusionMatrix& cm) {
  if (cm.num_classes() == 0 || cm.empty()) throw DataError("mIoU of an empty confusion matrix");
  const int n = cm.num_classes();
  MiouResult r;
  r.per_class.resize(n);
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < n; ++c) {
    std::uint64_t row = cm.unpredicted(c), col = 0;
    for (int k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::uint64_t inter = cm.at(c, c);
    const std::uint64_t uni = row + col - inter;
    if (uni == 0) continue;
    r.per_class[c] = static_cast<double>(inter) / static_cast<double>(uni);
    sum += *r.per_class[c];
    ++used;
  }
  r.miou = sum / used;
  return r;
}

TrajectoryMetrics trajectory_average(const std::vector<Trajectory>& trajectories, TrajectoryMode mode) {
  if (trajectories.empty()) throw DataError("no trajectories to aggregate");
  TrajectoryMetrics m;
  ConfusionMatrix global;
  double sum = 0.0;
  for (const Trajectory& t : trajectories) {
    if (t.images.empty()) throw DataError("trajectory '" + t.name + "' has no images");
    ConfusionMatrix local;
    for (const auto& cm : t.images) local += cm;
    global += local;
    MiouResult r = miou(local);
    if (mode == TrajectoryMode::MeanImageMiou) {
      double s = 0.0;
      int k = 0;
      for (const auto& cm : t.images) {
        if (cm.empty()) continue;
        s += miou(cm).miou;
        ++k;
      }
      r.miou = s / k;
    }
    sum += r.miou;
    m.per_trajectory.emplace_back(t.name, std::move(r));
  }
  m.dataset = miou(global);
  m.dataset_miou = m.dataset.miou;
  m.traj_avg_miou = sum / static_cast<double>(trajectories.size());
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

std::string metrics_csv(const TrajectoryMetrics& m, const std::vector<std::string>& class_names) {
  std::string out = "trajectory,class,iou\n";
  auto block = [&](const std::string& name, const MiouResult& r) {
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
      const std::string cls = c < class_names.size() ? class_names[c] : std::to_string(c);
      out += csv_field(name) + "," + csv_field(cls) + "," + (r.per_class[c] ? fmt(*r.per_class[c]) : "") + "\n";
    }
    out += csv_field(name) + ",mIoU," + fmt(r.miou) + "\n";
  };
  for (const auto& [name, r] : m.per_trajectory) block(name, r);
  block("dataset", m.dataset);
  return out;
}

std::string summary_csv(const TrajectoryMetrics& m) {
  return "dataset_miou,traj_avg_miou\n" + fmt(m.dataset_miou) + "," + fmt(m.traj_avg_miou) + "\n";
}

}  // namespace aerolabel
