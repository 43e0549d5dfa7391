#pragma once

// Synthetic multispectral "continent": a latent development field with roads
// and settlements, tile rendering, correlated targets, the two location
// sampling strategies, geo-disjoint splits, label assignment, and the
// on-disk dataset layout.

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssmt/config.hpp"
#include "ssmt/tasks.hpp"

namespace ssmt::synth {

/// Bumped whenever the generative recipe changes; stored in every dataset.
inline constexpr int kRecipeVersion = 1;

inline constexpr int kNightlightProxyBand = 6;  // thermal 1

const std::vector<std::string>& band_names(int bands);

struct GridCoord {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const GridCoord&, const GridCoord&) = default;
};

double grid_distance(GridCoord a, GridCoord b) noexcept;

class World {
 public:
  int size() const noexcept { return size_; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool contains(GridCoord c) const noexcept;

  float development(GridCoord c) const { return development_[index(c)]; }
  float settlement(GridCoord c) const { return settlement_[index(c)]; }
  float vegetation(GridCoord c) const { return vegetation_[index(c)]; }
  bool on_road(GridCoord c) const { return road_[index(c)] != 0; }
  float road_distance(GridCoord c) const { return road_distance_[index(c)]; }

  std::span<const float> development_field() const noexcept { return development_; }
  std::span<const float> settlement_field() const noexcept { return settlement_; }
  std::span<const std::uint8_t> road_mask() const noexcept { return road_; }
  const std::vector<GridCoord>& survey_sites() const noexcept { return survey_sites_; }

  /// Bilinear sample at continuous grid coordinates (cell centres at integers).
  float sample_development(double r, double c) const;
  float sample_settlement(double r, double c) const;
  float sample_vegetation(double r, double c) const;
  float sample_road_distance(double r, double c) const;

  /// Latent layers at a cell: development, settlement, vegetation, road access.
  std::array<double, 4> latent(GridCoord c) const;

  friend World generate_world(int grid_size, std::uint64_t seed, int survey_sites);

 private:
  std::size_t index(GridCoord c) const;
  float bilinear(const std::vector<float>& field, double r, double c) const;

  int size_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<float> development_;
  std::vector<float> settlement_;
  std::vector<float> vegetation_;
  std::vector<std::uint8_t> road_;
  std::vector<float> road_distance_;
  std::vector<GridCoord> survey_sites_;
};

World generate_world(int grid_size, std::uint64_t seed, int survey_sites = 400);

/// Square H x W x C tile, values in [-1, 1], stored row-major with bands last.
class MultispectralImage {
 public:
  MultispectralImage(int size, int bands);

  int height() const noexcept { return size_; }
  int width() const noexcept { return size_; }
  int bands() const noexcept { return bands_; }

  float at(int r, int c, int b) const { return pixels_[offset(r, c, b)]; }
  float& at(int r, int c, int b) { return pixels_[offset(r, c, b)]; }
  std::span<const float> pixels() const noexcept { return pixels_; }
  double band_mean(int b) const;

  friend bool operator==(const MultispectralImage&, const MultispectralImage&) = default;

 private:
  std::size_t offset(int r, int c, int b) const {
    return (static_cast<std::size_t>(r) * static_cast<std::size_t>(size_) + static_cast<std::size_t>(c)) *
               static_cast<std::size_t>(bands_) +
           static_cast<std::size_t>(b);
  }

  int size_;
  int bands_;
  std::vector<float> pixels_;
};

MultispectralImage render_tile(const World& world, GridCoord location, int tile_size, int bands);

/// Continuous targets for all known tasks at a location.
std::map<std::string, double> derive_targets(const World& world, GridCoord location);

enum class Sampling { Uniform, AroundLabels };
Sampling parse_sampling(const std::string& text);
std::string to_string(Sampling s);

std::vector<GridCoord> sample_locations(const World& world, int n, Sampling strategy,
                                        std::span<const GridCoord> label_sites, double radius,
                                        std::uint64_t seed);

enum class Split { Train = 0, Val = 1, Test = 2 };
Split parse_split(const std::string& text);
std::string to_string(Split s);

struct DatasetManifest {
  Split split = Split::Train;
  std::vector<std::size_t> example_refs;  // indices into the location list
  double labeled_fraction = 0.0;
  Sampling sampling = Sampling::Uniform;
  std::uint64_t seed = 0;
};

/// Train/val/test partition. No val or test location lies closer than
/// `min_separation` to a train location; train locations inside that buffer
/// are dropped when separation forces it.
std::array<DatasetManifest, 3> make_splits(std::span<const GridCoord> locations, std::array<double, 3> fractions,
                                           double min_separation, std::uint64_t seed);

struct TaskConfig {
  std::string name;
  int bins = 2;
  tasks::BinStrategy strategy = tasks::BinStrategy::EqualFrequency;
  double importance = 1.0;
  double coverage = 1.0;
};

std::vector<TaskConfig> task_configs(const config::RunConfig& cfg);

struct Example {
  std::int64_t id = 0;
  GridCoord location;
  Split split = Split::Train;
  std::map<std::string, std::optional<int>> labels;
  std::map<std::string, std::optional<double>> continuous;
  std::map<std::string, double> weight;

  bool labeled(const std::string& task) const;
};

struct LabeledSet {
  std::vector<tasks::TaskSpec> tasks;
  tasks::WeightTable weights;
  std::vector<Example> examples;  // train, then val, then test
};

/// Exactly floor(N * labeled_fraction) train examples (N = all examples)
/// carry a primary-task label, chosen closest to survey sites. Auxiliary
/// tasks are labeled on `coverage` of the train split. Val and test examples
/// are fully labeled evaluation ground truth.
LabeledSet assign_labels(const World& world, std::span<const GridCoord> locations,
                         std::span<DatasetManifest> manifests, double labeled_fraction,
                         std::span<const TaskConfig> task_cfgs, const std::string& primary_task,
                         std::uint64_t seed);

struct DatasetInfo {
  int grid_size = 0;
  int tile_size = 0;
  int bands = 0;
  Sampling sampling = Sampling::Uniform;
  double labeled_fraction = 0.0;
  std::uint64_t seed = 0;
  std::string primary_task;
  std::string baseline_task;
  std::string config_snapshot;
};

struct Dataset {
  DatasetInfo info;
  std::vector<tasks::TaskSpec> tasks;
  std::vector<Example> examples;
  std::vector<float> tiles;  // N x H x W x C

  std::size_t tile_floats() const noexcept;
  std::span<const float> tile(std::size_t i) const;
  std::vector<std::size_t> split_indices(Split s) const;
  const tasks::TaskSpec& task(const std::string& name) const;
};

/// The whole generation pipeline; a pure function of the config.
Dataset generate_dataset(const config::RunConfig& cfg);

/// Writes manifest.csv, tiles.bin and config.snapshot into `dir`.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads a dataset directory. `expected_bands` raises ShapeMismatch on a
/// different band count.
Dataset read_dataset(const std::filesystem::path& dir, std::optional<int> expected_bands = std::nullopt);

/// FNV-1a over the three dataset files, for reproducibility checks.
std::string dataset_hash(const std::filesystem::path& dir);

}  // namespace ssmt::synth
