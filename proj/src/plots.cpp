#include "ssmt/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>

#include <png.h>

#include "ssmt/error.hpp"

namespace ssmt::plot {

namespace {

// 3x5 glyphs, one row per entry, bit 2 is the leftmost column.
const std::map<char, std::array<std::uint8_t, 5>>& font() {
  static const std::map<char, std::array<std::uint8_t, 5>> f = {
      {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}}, {'2', {7, 1, 7, 4, 7}}, {'3', {7, 1, 7, 1, 7}},
      {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 7, 1, 7}}, {'6', {7, 4, 7, 5, 7}}, {'7', {7, 1, 1, 1, 1}},
      {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 7}}, {'.', {0, 0, 0, 0, 2}}, {'-', {0, 0, 7, 0, 0}},
      {'+', {0, 2, 7, 2, 0}}, {'e', {0, 7, 7, 4, 7}}, {'r', {0, 6, 5, 4, 4}}, {'=', {0, 7, 0, 7, 0}},
      {'D', {6, 5, 5, 5, 6}}, {'G', {7, 4, 5, 5, 7}}, {'L', {4, 4, 4, 4, 7}}, {'n', {0, 6, 5, 5, 5}},
  };
  return f;
}

const std::array<Rgb, 6> kPalette{{{31, 119, 180}, {214, 39, 40}, {44, 160, 44}, {255, 127, 14}, {148, 103, 189},
                                   {140, 86, 75}}};
constexpr Rgb kAxis{40, 40, 40};
constexpr Rgb kGrid{225, 225, 225};

std::string short_number(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) >= 1e4 || std::abs(v) < 1e-2)) {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  }
  return buf;
}

struct Frame {
  int left = 70, right = 20, top = 20, bottom = 40;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  int w = 0, h = 0;

  int px(double x) const { return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (w - left - right))); }
  int py(double y) const { return h - bottom - static_cast<int>(std::lround((y - y0) / (y1 - y0) * (h - top - bottom))); }
};

void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
}

void draw_axes(Canvas& c, const Frame& f) {
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const int y = f.py(yv);
    c.line(f.left, y, f.w - f.right, y, kGrid);
    c.text(4, y - 5, short_number(yv), kAxis);
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const int x = f.px(xv);
    c.line(x, f.top, x, f.h - f.bottom, kGrid);
    c.text(x - 12, f.h - f.bottom + 8, short_number(xv), kAxis);
  }
  c.line(f.left, f.h - f.bottom, f.w - f.right, f.h - f.bottom, kAxis);
  c.line(f.left, f.top, f.left, f.h - f.bottom, kAxis);
}

}  // namespace

Canvas::Canvas(int width, int height, Rgb background) : width_(width), height_(height) {
  if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "canvas must be non-empty");
  rgb_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < rgb_.size(); i += 3) std::copy(background.begin(), background.end(), rgb_.begin() + static_cast<std::ptrdiff_t>(i));
}

Rgb Canvas::pixel(int x, int y) const {
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  return {rgb_.at(i), rgb_.at(i + 1), rgb_.at(i + 2)};
}

void Canvas::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return;
  const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  std::copy(c.begin(), c.end(), rgb_.begin() + static_cast<std::ptrdiff_t>(i));
}

void Canvas::line(int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
    for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }
}

void Canvas::marker(int x, int y, Rgb c) {
  for (int d = -2; d <= 2; ++d) {
    set(x + d, y, c);
    set(x, y + d, c);
  }
}

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
  for (char ch : s) {
    auto it = font().find(ch);
    if (it != font().end()) {
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if (it->second[static_cast<std::size_t>(row)] & (4 >> col)) {
            fill_rect(x + col * scale, y + row * scale, x + (col + 1) * scale - 1, y + (row + 1) * scale - 1, c);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

void Canvas::write_png(const std::filesystem::path& path) const {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!file) throw Error(Errc::Io, "cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::Io, "libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width_), static_cast<png_uint_32>(height_), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height_; ++y) {
    png_write_row(png, rgb_.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

PlotSummary histogram(std::span<const std::int64_t> counts, const std::filesystem::path& path) {
  if (counts.empty()) throw Error(Errc::EmptyInput, "histogram needs at least one bin");
  Canvas c(640, 400);
  Frame f;
  f.w = c.width();
  f.h = c.height();
  f.x0 = 0;
  f.x1 = static_cast<double>(counts.size());
  f.y0 = 0;
  f.y1 = static_cast<double>(std::max<std::int64_t>(1, *std::max_element(counts.begin(), counts.end()))) * 1.05;
  draw_axes(c, f);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const int xa = f.px(static_cast<double>(k) + 0.1), xb = f.px(static_cast<double>(k) + 0.9);
    c.fill_rect(xa, f.py(static_cast<double>(counts[k])), xb, f.py(0) - 1, kPalette[0]);
  }
  c.write_png(path);
  return {counts.size()};
}

PlotSummary loss_curves(std::span<const Series> series, const std::filesystem::path& path) {
  if (series.empty()) throw Error(Errc::EmptyInput, "no series to plot");
  Canvas c(800, 480);
  Frame f;
  f.w = c.width();
  f.h = c.height();
  f.right = 120;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t longest = 0;
  for (const auto& s : series) {
    longest = std::max(longest, s.values.size());
    for (double v : s.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0;
  pad_range(lo, hi);
  f.x0 = 0;
  f.x1 = static_cast<double>(std::max<std::size_t>(longest, 2) - 1);
  f.y0 = lo;
  f.y1 = hi;
  draw_axes(c, f);
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto colour = kPalette[s % kPalette.size()];
    const auto& v = series[s].values;
    for (std::size_t i = 1; i < v.size(); ++i) {
      c.line(f.px(static_cast<double>(i - 1)), f.py(v[i - 1]), f.px(static_cast<double>(i)), f.py(v[i]), colour);
    }
    const int ly = f.top + 14 * static_cast<int>(s);
    c.fill_rect(f.w - f.right + 10, ly, f.w - f.right + 24, ly + 8, colour);
    c.text(f.w - f.right + 30, ly, series[s].name, kAxis);
  }
  c.write_png(path);
  return {longest};
}

PlotSummary scatter(std::span<const double> truth, std::span<const double> predicted, const std::filesystem::path& path) {
  if (truth.size() != predicted.size()) throw Error(Errc::ShapeMismatch, "scatter inputs differ in length");
  if (truth.empty()) throw Error(Errc::EmptyInput, "no points to plot");
  Canvas c(600, 600);
  Frame f;
  f.w = c.width();
  f.h = c.height();
  auto [tlo, thi] = std::minmax_element(truth.begin(), truth.end());
  auto [plo, phi] = std::minmax_element(predicted.begin(), predicted.end());
  f.x0 = *tlo;
  f.x1 = *thi;
  f.y0 = *plo;
  f.y1 = *phi;
  pad_range(f.x0, f.x1);
  pad_range(f.y0, f.y1);
  draw_axes(c, f);
  for (std::size_t i = 0; i < truth.size(); ++i) c.marker(f.px(truth[i]), f.py(predicted[i]), kPalette[0]);

  // Least-squares line of predicted on truth.
  const double n = static_cast<double>(truth.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mx += truth[i];
    my += predicted[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sxy += (truth[i] - mx) * (predicted[i] - my);
    sxx += (truth[i] - mx) * (truth[i] - mx);
  }
  const double slope = sxx > 0 ? sxy / sxx : 0.0;
  c.line(f.px(f.x0), f.py(my + slope * (f.x0 - mx)), f.px(f.x1), f.py(my + slope * (f.x1 - mx)), kPalette[1]);
  c.write_png(path);
  return {truth.size()};
}

}  // namespace ssmt::plot
