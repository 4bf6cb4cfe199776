#include "aerolabel/masks.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "aerolabel/error.hpp"

namespace aerolabel {

namespace {

std::size_t run_total(const std::vector<std::uint32_t>& counts) {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

std::size_t run_area(const std::vector<std::uint32_t>& counts) {
  std::size_t s = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) s += counts[i];
  return s;
}

}  // namespace

void MaskSet::validate() const {
  if (width < 1 || height < 1) throw DataError("mask set needs a positive size");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Mask& m = masks[i];
    const std::size_t total = run_total(m.counts);
    if (total != n)
      throw DataError("mask " + std::to_string(i) + ": RLE covers " + std::to_string(total) + " pixels, expected " +
                      std::to_string(n));
    const std::size_t area = run_area(m.counts);
    if (area == 0) throw DataError("mask " + std::to_string(i) + " is empty");
    if (area != m.area)
      throw DataError("mask " + std::to_string(i) + ": declared area " + std::to_string(m.area) +
                      " but RLE decodes to " + std::to_string(area));
  }
}

std::vector<std::uint32_t> rle_encode(const ImageU8& binary) {
  std::vector<std::uint32_t> counts;
  std::uint8_t cur = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < binary.width; ++x) {
    for (int y = 0; y < binary.height; ++y) {
      const std::uint8_t v = binary.at(x, y) ? 1 : 0;
      if (v != cur) {
        counts.push_back(run);
        run = 0;
        cur = v;
      }
      ++run;
    }
  }
  counts.push_back(run);
  return counts;
}

std::vector<std::uint32_t> rle_pixels(const std::vector<std::uint32_t>& counts, int width, int height) {
  std::vector<std::uint32_t> out;
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (pos + counts[i] > n) throw DataError("RLE runs exceed the mask size");
    if (i % 2 == 1) {
      for (std::size_t p = pos; p < pos + counts[i]; ++p) {
        const std::size_t x = p / static_cast<std::size_t>(height), y = p % static_cast<std::size_t>(height);
        out.push_back(static_cast<std::uint32_t>(y * width + x));
      }
    }
    pos += counts[i];
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageU8 rle_decode(const std::vector<std::uint32_t>& counts, int width, int height) {
  ImageU8 img(width, height, 0);
  for (auto p : rle_pixels(counts, width, height)) img.data[p] = 1;
  return img;
}

Mask make_mask(const ImageU8& binary, std::optional<double> score) {
  Mask m;
  m.counts = rle_encode(binary);
  m.area = run_area(m.counts);
  m.score = score;
  return m;
}

MaskSet masks_from_segments(const Image<std::int32_t>& segments) {
  MaskSet set;
  set.width = segments.width;
  set.height = segments.height;
  set.overlapping = false;
  std::map<std::int32_t, std::vector<std::uint32_t>> runs;
  for (std::int32_t id : segments.data)
    if (id >= 0) runs.try_emplace(id);
  // Column-major sweep with one run builder per id.
  std::map<std::int32_t, std::size_t> last_end;
  std::map<std::int32_t, std::size_t> area;
  std::size_t pos = 0;
  for (int x = 0; x < segments.width; ++x) {
    for (int y = 0; y < segments.height; ++y, ++pos) {
      const std::int32_t id = segments.at(x, y);
      if (id < 0) continue;
      auto& c = runs[id];
      auto& end = last_end[id];
      if (!c.empty() && end == pos) {
        ++c.back();
      } else {
        c.push_back(static_cast<std::uint32_t>(pos - end));
        c.push_back(1);
      }
      end = pos + 1;
      ++area[id];
    }
  }
  const std::size_t n = pos;
  for (auto& [id, c] : runs) {
    if (n > last_end[id]) c.push_back(static_cast<std::uint32_t>(n - last_end[id]));
    set.masks.push_back({std::move(c), area[id], std::nullopt});
  }
  return set;
}

std::string masks_to_json(const MaskSet& set) {
  nlohmann::ordered_json j;
  j["format"] = "aerolabel-rle";
  j["version"] = 1;
  j["width"] = set.width;
  j["height"] = set.height;
  j["overlapping"] = set.overlapping;
  j["masks"] = nlohmann::ordered_json::array();
  for (const Mask& m : set.masks) {
    nlohmann::ordered_json e;
    e["size"] = {set.height, set.width};
    e["counts"] = m.counts;
    e["area"] = m.area;
    if (m.score) e["score"] = *m.score;
    j["masks"].push_back(std::move(e));
  }
  return j.dump() + "\n";
}

MaskSet masks_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("mask file is not valid JSON: ") + e.what());
  }
  const nlohmann::json* list = &j;
  MaskSet set;
  if (j.is_object()) {
    if (!j.contains("masks") || !j["masks"].is_array()) throw DataError("mask file needs a 'masks' array");
    list = &j["masks"];
    if (j.contains("overlapping")) set.overlapping = j["overlapping"].get<bool>();
  } else if (!j.is_array()) {
    throw DataError("mask file must be an object or an array");
  }
  try {
    for (std::size_t i = 0; i < list->size(); ++i) {
      const auto& entry = (*list)[i];
      // SAM-style records nest the RLE under "segmentation".
      const auto& rle = entry.contains("segmentation") ? entry["segmentation"] : entry;
      if (!rle.contains("size") || !rle.contains("counts"))
        throw DataError("mask " + std::to_string(i) + " needs 'size' and 'counts'");
      if (!rle["counts"].is_array())
        throw DataError("mask " + std::to_string(i) + ": only uncompressed (array) counts are supported");
      const auto size = rle["size"].get<std::vector<int>>();
      if (size.size() != 2) throw DataError("mask " + std::to_string(i) + ": size must be [height, width]");
      if (i == 0) {
        set.height = size[0];
        set.width = size[1];
      } else if (size[0] != set.height || size[1] != set.width) {
        throw DataError("mask " + std::to_string(i) + " has a different size than mask 0");
      }
      Mask m;
      m.counts = rle["counts"].get<std::vector<std::uint32_t>>();
      m.area = entry.contains("area") ? entry["area"].get<std::size_t>() : run_area(m.counts);
      if (entry.contains("score")) m.score = entry["score"].get<double>();
      else if (entry.contains("predicted_iou")) m.score = entry["predicted_iou"].get<double>();
      set.masks.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed mask entry: ") + e.what());
  }
  if (j.is_object() && j.contains("width") && j.contains("height")) {
    const int w = j["width"].get<int>(), h = j["height"].get<int>();
    if (!set.masks.empty() && (w != set.width || h != set.height))
      throw DataError("mask file width/height disagree with mask sizes");
    set.width = w;
    set.height = h;
  }
  set.validate();
  return set;
}

void save_masks(const std::filesystem::path& path, const MaskSet& set) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << masks_to_json(set);
  if (!out) throw DataError("failed writing " + path.string());
}

MaskSet load_masks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mask file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return masks_from_json(ss.str());
}

}  // namespace aerolabel
