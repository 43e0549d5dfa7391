#include "ssmt/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ssmt/error.hpp"

namespace ssmt::tasks {

BinStrategy parse_bin_strategy(const std::string& text) {
  if (text == "equal-width") return BinStrategy::EqualWidth;
  if (text == "equal-frequency") return BinStrategy::EqualFrequency;
  throw Error(Errc::BadConfigValue, "unknown bin strategy '" + text + "'");
}

std::string to_string(BinStrategy strategy) {
  return strategy == BinStrategy::EqualWidth ? "equal-width" : "equal-frequency";
}

BinningScheme::BinningScheme(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 3) {
    throw Error(Errc::InvalidArgument, "a binning scheme needs at least 2 bins");
  }
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    if (!std::isfinite(edges_[i])) throw Error(Errc::NonFiniteValue, "bin edge is not finite");
    if (i > 0 && !(edges_[i] > edges_[i - 1])) {
      throw Error(Errc::InvalidArgument, "bin edges must be strictly increasing");
    }
  }
}

double WeightTable::weight(const std::string& task, int cls) const {
  auto it = per_task.find(task);
  if (it == per_task.end()) throw Error(Errc::InvalidArgument, "no weights for task '" + task + "'");
  if (cls < 0 || cls >= static_cast<int>(it->second.size())) {
    throw Error(Errc::LabelOutOfRange, "class " + std::to_string(cls) + " for task '" + task + "'");
  }
  return it->second[static_cast<std::size_t>(cls)];
}

namespace {

BinningScheme equal_width(double lo, double hi, int count) {
  std::vector<double> edges(static_cast<std::size_t>(count) + 1);
  const double step = (hi - lo) / count;
  for (int i = 0; i < count; ++i) edges[static_cast<std::size_t>(i)] = lo + step * i;
  edges.back() = hi;
  return BinningScheme(std::move(edges));
}

// Boundaries sit halfway between neighbouring distinct sorted values, at the
// change points closest to the ideal i*N/count quantile positions.
BinningScheme equal_frequency(std::vector<double> sorted, int count) {
  const std::size_t n = sorted.size();
  std::vector<std::size_t> change_points;
  for (std::size_t q = 1; q < n; ++q) {
    if (sorted[q - 1] < sorted[q]) change_points.push_back(q);
  }
  if (change_points.size() + 1 < static_cast<std::size_t>(count)) {
    throw Error(Errc::TooFewDistinct, "equal-frequency binning needs at least " +
                                          std::to_string(count) + " distinct values");
  }

  std::vector<double> edges{sorted.front()};
  std::size_t next_candidate = 0;
  for (int i = 1; i < count; ++i) {
    const std::size_t target = (static_cast<std::size_t>(i) * n) / static_cast<std::size_t>(count);
    const std::size_t remaining = static_cast<std::size_t>(count - 1 - i);
    const std::size_t last_allowed = change_points.size() - 1 - remaining;
    std::size_t best = next_candidate;
    for (std::size_t c = next_candidate; c <= last_allowed; ++c) {
      const auto dist = [&](std::size_t idx) {
        const auto q = change_points[idx];
        return q > target ? q - target : target - q;
      };
      if (dist(c) < dist(best)) best = c;
      if (change_points[c] > target) break;
    }
    const std::size_t q = change_points[best];
    edges.push_back(0.5 * (sorted[q - 1] + sorted[q]));
    next_candidate = best + 1;
  }
  edges.push_back(sorted.back());
  return BinningScheme(std::move(edges));
}

}  // namespace

BinningScheme build_bins(std::span<const double> values, int count, BinStrategy strategy) {
  if (values.empty()) throw Error(Errc::EmptyInput, "cannot bin an empty value list");
  if (count < 2) throw Error(Errc::InvalidArgument, "bin count must be >= 2");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "cannot bin a non-finite value");
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  if (*lo_it == *hi_it) throw Error(Errc::DegenerateRange, "all values are equal");

  if (strategy == BinStrategy::EqualWidth) return equal_width(*lo_it, *hi_it, count);

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return equal_frequency(std::move(sorted), count);
}

int assign_bin(double value, const BinningScheme& scheme) {
  if (!std::isfinite(value)) throw Error(Errc::NonFiniteValue, "cannot assign a non-finite value");
  const auto edges = scheme.edges();
  const auto inner_begin = edges.begin() + 1;
  const auto inner_end = edges.end() - 1;
  return static_cast<int>(std::upper_bound(inner_begin, inner_end, value) - inner_begin);
}

std::vector<std::int64_t> bin_occupancy(std::span<const double> values, const BinningScheme& scheme) {
  std::vector<std::int64_t> hist(static_cast<std::size_t>(scheme.count()), 0);
  for (double v : values) ++hist[static_cast<std::size_t>(assign_bin(v, scheme))];
  return hist;
}

WeightTable compute_weights(std::span<const TaskSpec> tasks,
                            const std::map<std::string, std::vector<std::int64_t>>& class_counts) {
  WeightTable table;
  for (const auto& task : tasks) {
    auto it = class_counts.find(task.name);
    if (it == class_counts.end()) {
      throw Error(Errc::InvalidArgument, "no class counts for task '" + task.name + "'");
    }
    const auto& counts = it->second;
    if (std::any_of(counts.begin(), counts.end(), [](auto c) { return c < 0; })) {
      throw Error(Errc::InvalidArgument, "negative class count for task '" + task.name + "'");
    }
    const std::int64_t largest = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    if (largest == 0) throw Error(Errc::AllEmptyTask, "task '" + task.name + "' has no examples");

    std::vector<double> weights(counts.size(), 0.0);
    for (std::size_t k = 0; k < counts.size(); ++k) {
      if (counts[k] > 0) {
        weights[k] = task.importance * static_cast<double>(largest) / static_cast<double>(counts[k]);
      }
    }
    table.per_task.emplace(task.name, std::move(weights));
  }
  return table;
}

void validate_task_set(std::span<const TaskSpec> tasks) {
  std::set<std::string> names;
  for (const auto& t : tasks) {
    if (t.name.empty()) throw Error(Errc::InvalidArgument, "task name is empty");
    if (!names.insert(t.name).second) throw Error(Errc::InvalidArgument, "duplicate task '" + t.name + "'");
    if (!(t.importance >= 0.0) || !std::isfinite(t.importance)) {
      throw Error(Errc::InvalidArgument, "task '" + t.name + "' importance must be >= 0");
    }
  }
}

}  // namespace ssmt::tasks
