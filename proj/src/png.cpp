#include "aerolabel/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "aerolabel/error.hpp"

namespace aerolabel {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int width, int height, int color_type, int channels,
               const std::uint8_t* data) {
  if (width <= 0 || height <= 0) throw DataError("cannot write an empty PNG");
  FilePtr f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Rgb label_color(std::uint16_t label) {
  static constexpr Rgb palette[] = {
      {31, 119, 180}, {44, 160, 44}, {188, 189, 34}, {214, 39, 40}, {140, 86, 75},
      {158, 218, 229}, {148, 103, 189}, {255, 127, 14}, {227, 119, 194}, {127, 127, 127},
  };
  if (label == kUnlabeled) return {0, 0, 0};
  return palette[label % std::size(palette)];
}

void write_png_gray(const std::filesystem::path& path, const ImageU8& img) {
  write_png(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, 1, img.data.data());
}

void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw DataError("RGB buffer size mismatch");
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, 3, rgb.data());
}

void write_label_png(const std::filesystem::path& path, const LabelImage& labels) {
  std::vector<std::uint8_t> rgb(labels.size() * 3);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Rgb c = label_color(labels.data[i]);
    std::copy(c.begin(), c.end(), rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  write_png_rgb(path, labels.width, labels.height, rgb);
}

ImageU8 read_png_gray(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  ImageU8 out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_line_plot_png(const std::filesystem::path& path, const std::vector<PlotSeries>& series, int width,
                         int height) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DataError("plot series '" + s.name + "' has mismatched x and y");
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 >= x0) || !(y1 >= y0)) throw DataError("nothing to plot");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const int margin = 30;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 255);
  auto put = [&](int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    rgb[i] = c[0];
    rgb[i + 1] = c[1];
    rgb[i + 2] = c[2];
  };
  auto line = [&](double ax, double ay, double bx, double by, Rgb c) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(bx - ax), std::abs(by - ay)))) + 1;
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      put(static_cast<int>(std::lround(ax + t * (bx - ax))), static_cast<int>(std::lround(ay + t * (by - ay))), c);
    }
  };
  const Rgb axis{0, 0, 0};
  line(margin, height - margin, width - margin, height - margin, axis);
  line(margin, margin, margin, height - margin, axis);
  auto px = [&](double v) { return margin + (v - x0) / (x1 - x0) * (width - 2 * margin); };
  auto py = [&](double v) { return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin); };
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Rgb c = label_color(static_cast<std::uint16_t>(k));
    const auto& s = series[k];
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) line(px(s.x[i - 1]), py(s.y[i - 1]), px(s.x[i]), py(s.y[i]), c);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          put(static_cast<int>(std::lround(px(s.x[i]))) + dx, static_cast<int>(std::lround(py(s.y[i]))) + dy, c);
    }
  }
  write_png_rgb(path, width, height, rgb);
}

}  // namespace aerolabel
