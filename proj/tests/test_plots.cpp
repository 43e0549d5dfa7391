#include <gtest/gtest.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ssmt/error.hpp"
#include "ssmt/plots.hpp"

using namespace ssmt;
using namespace ssmt::plot;
namespace fs = std::filesystem;

namespace {

fs::path out_dir() {
  const auto p = fs::temp_directory_path() / "ssmt_test_plots";
  fs::create_directories(p);
  return p;
}

bool is_png(const fs::path& p) {
  std::array<unsigned char, 8> sig{};
  std::ifstream in(p, std::ios::binary);
  in.read(reinterpret_cast<char*>(sig.data()), 8);
  return in && sig == std::array<unsigned char, 8>{0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
}

}  // namespace

TEST(Canvas, DrawingPrimitives) {
  Canvas c(20, 10);
  EXPECT_EQ(c.pixel(3, 3), (Rgb{255, 255, 255}));
  c.line(0, 0, 19, 9, {0, 0, 0});
  EXPECT_EQ(c.pixel(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(c.pixel(19, 9), (Rgb{0, 0, 0}));
  c.fill_rect(5, 5, 7, 7, {10, 20, 30});
  EXPECT_EQ(c.pixel(6, 6), (Rgb{10, 20, 30}));
  c.set(100, 100, {1, 1, 1});  // clipped, no throw
  EXPECT_THROW(Canvas(0, 5), Error);
}

TEST(Plots, HistogramBarsEqualClassCount) {
  const std::vector<std::int64_t> counts{5, 0, 12, 7, 3};
  const auto path = out_dir() / "hist.png";
  const auto s = histogram(counts, path);
  EXPECT_EQ(s.elements, counts.size());
  EXPECT_TRUE(is_png(path));
  EXPECT_THROW(histogram(std::vector<std::int64_t>{}, path), Error);
}

TEST(Plots, LossCurveLengthEqualsRows) {
  const std::vector<Series> series{{"LD", {3, 2, 1.5, 1.2}}, {"LG", {-1, -0.5, -0.2, 0.1}}};
  const auto path = out_dir() / "loss.png";
  EXPECT_EQ(loss_curves(series, path).elements, 4u);
  EXPECT_TRUE(is_png(path));
}

TEST(Plots, ScatterCountsEveryPrediction) {
  std::vector<double> t, p;
  for (int i = 0; i < 137; ++i) {
    t.push_back(i * 0.1);
    p.push_back(i * 0.09 + (i % 7) * 0.05);
  }
  const auto path = out_dir() / "scatter.png";
  EXPECT_EQ(scatter(t, p, path).elements, 137u);
  EXPECT_TRUE(is_png(path));
  EXPECT_THROW(scatter(t, std::vector<double>{1.0}, path), Error);
}
