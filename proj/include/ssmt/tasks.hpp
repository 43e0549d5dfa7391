#pragma once

// Task definitions for the semi-supervised heads: binning of continuous
// targets into classes and the per-example-per-class-per-task weights.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ssmt::tasks {

enum class BinStrategy { EqualWidth, EqualFrequency };

BinStrategy parse_bin_strategy(const std::string& text);
std::string to_string(BinStrategy strategy);

/// Strictly increasing bin edges; `count()` real classes.
class BinningScheme {
 public:
  BinningScheme() = default;
  explicit BinningScheme(std::vector<double> edges);

  int count() const noexcept { return static_cast<int>(edges_.size()) - 1; }
  std::span<const double> edges() const noexcept { return edges_; }

  friend bool operator==(const BinningScheme&, const BinningScheme&) = default;

 private:
  std::vector<double> edges_;
};

struct TaskSpec {
  std::string name;
  BinningScheme binning;
  double importance = 1.0;

  int num_classes() const noexcept { return binning.count(); }
};

/// Per task, per class weight. A class weight already folds in the task's
/// importance, so it is the full weight applied to one labeled example.
struct WeightTable {
  std::map<std::string, std::vector<double>> per_task;

  double weight(const std::string& task, int cls) const;
};

BinningScheme build_bins(std::span<const double> values, int count, BinStrategy strategy);

/// Index i with edges[i] <= value < edges[i+1]; out-of-range values clamp to
/// the first or last bin.
int assign_bin(double value, const BinningScheme& scheme);

std::vector<std::int64_t> bin_occupancy(std::span<const double> values, const BinningScheme& scheme);

/// weight(t, k) = w_t * max_j n_{t,j} / n_{t,k}; empty classes get 0.
WeightTable compute_weights(std::span<const TaskSpec> tasks,
                            const std::map<std::string, std::vector<std::int64_t>>& class_counts);

/// Throws InvalidArgument on duplicate names or negative importance.
void validate_task_set(std::span<const TaskSpec> tasks);

}  // namespace ssmt::tasks
