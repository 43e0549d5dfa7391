#pragma once

// Raster plots: class histogram, loss curves, prediction scatter.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ssmt::plot {

using Rgb = std::array<std::uint8_t, 3>;

class Canvas {
 public:
  Canvas(int width, int height, Rgb background = {255, 255, 255});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  Rgb pixel(int x, int y) const;

  void set(int x, int y, Rgb c);
  void line(int x0, int y0, int x1, int y1, Rgb c);
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
  void marker(int x, int y, Rgb c);
  /// 3x5 bitmap text; digits, '.', '-', '+', 'e' and a few letters.
  void text(int x, int y, const std::string& s, Rgb c, int scale = 2);

  void write_png(const std::filesystem::path& path) const;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> rgb_;
};

struct PlotSummary {
  std::size_t elements = 0;  // bars, points per series, or scatter points
};

PlotSummary histogram(std::span<const std::int64_t> counts, const std::filesystem::path& path);

struct Series {
  std::string name;
  std::vector<double> values;
};

PlotSummary loss_curves(std::span<const Series> series, const std::filesystem::path& path);

PlotSummary scatter(std::span<const double> truth, std::span<const double> predicted,
                    const std::filesystem::path& path);

}  // namespace ssmt::plot
