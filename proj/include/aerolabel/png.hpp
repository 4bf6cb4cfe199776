#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aerolabel/image.hpp"

namespace aerolabel {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed categorical palette; kUnlabeled is black.
Rgb label_color(std::uint16_t label);

/// 8-bit PNG writers (no timestamp chunk, so output bytes depend only on the
/// pixels). `rgb` is row-major interleaved.
void write_png_gray(const std::filesystem::path& path, const ImageU8& img);
void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);
void write_label_png(const std::filesystem::path& path, const LabelImage& labels);

/// Reads an 8-bit gray, gray+alpha, RGB or RGBA PNG as gray (first channel).
ImageU8 read_png_gray(const std::filesystem::path& path);

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with markers, one palette colour per series; axes span the
/// data range. No text is drawn.
void write_line_plot_png(const std::filesystem::path& path, const std::vector<PlotSeries>& series, int width = 640,
                         int height = 400);

}  // namespace aerolabel
