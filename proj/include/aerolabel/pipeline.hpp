#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "aerolabel/config.hpp"
#include "aerolabel/image.hpp"

namespace aerolabel {

std::string version();

/// One row of a frame list CSV (header names `timestamp`, `file` and
/// optionally `trajectory`). `file` is resolved against the list's
/// directory; `name` is its stem and keys every per-frame output.
struct FrameEntry {
  double timestamp = 0.0;
  std::filesystem::path file;
  std::string trajectory;
  std::string name;
};

std::vector<FrameEntry> read_frame_list(const std::filesystem::path& path);
std::vector<FrameEntry> parse_frame_list(const std::string& text, const std::filesystem::path& base_dir = {});

/// Label images on disk: single-band GeoTIFF/sidecar rasters or 8-bit PNG.
LabelImage read_label_image(const std::filesystem::path& path);
/// Single-band categorical GeoTIFF in pixel space (UInt8, or UInt16 when a
/// label exceeds 255), nodata 255.
void write_label_image(const std::filesystem::path& path, const LabelImage& labels);
/// Raw thermal frame: single-band integer raster or 8-bit PNG.
ImageU16 read_thermal_frame(const std::filesystem::path& path);

/// `<dir>/<name>.tif`, `.tiff`, `.hdr` or `.png`, whichever exists first;
/// empty when none does.
std::filesystem::path find_frame_file(const std::filesystem::path& dir, const std::string& name);

struct RunOptions {
  /// Recompute even when the stage manifest matches the inputs.
  bool force = false;
  /// Structured progress lines (one JSON object per line); null for silence.
  std::ostream* log = nullptr;
};

struct CommandResult {
  std::string command;
  std::filesystem::path directory;
  /// Content key of the stage: command, version, relevant settings and
  /// input file hashes.
  std::string stage_key;
  bool cached = false;
  /// Output files relative to `directory`, sorted.
  std::vector<std::string> outputs;
};

/// synth, refine-lulc, render, refine-labels, evaluate, tune, ablate.
const std::vector<std::string>& command_names();

/// Runs one stage into `<output_dir>/<command>/` and writes its
/// manifest.json. Everything except the manifest's `created` and `timing`
/// fields is a function of the config and the input bytes.
CommandResult run_command(const std::string& command, const PipelineConfig& config, const RunOptions& options = {});

}  // namespace aerolabel
