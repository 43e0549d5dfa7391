#pragma once

// Ridge regression, doubly nested cross-validation and Pearson correlation
// for scoring learned features against a continuous target.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ssmt::eval {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct RidgeOptions {
  bool standardize = true;
  bool fit_intercept = true;
};

/// Coefficients expressed in the original feature space.
struct RidgeModel {
  Vector beta;
  double intercept = 0.0;

  Vector predict(const Matrix& x) const;
};

/// Minimizes |y - X beta - b|^2 + k |beta|^2 with an unpenalized intercept.
/// With standardization the mean and scale come from the rows given here.
RidgeModel ridge_fit(const Matrix& x, const Vector& y, double k, const RidgeOptions& options = {});

double pearson(std::span<const double> a, std::span<const double> b);
double pearson(const Vector& a, const Vector& b);

/// Records which rows each outer fold touched for anything other than
/// prediction, so tests can assert that held-out rows never leak.
class RowUsageLedger {
 public:
  void begin_fold(int fold, std::span<const std::size_t> test_rows);
  void record(int fold, std::span<const std::size_t> rows);

  /// Rows of `fold`'s test set that were used while building its model.
  std::vector<std::size_t> leaked(int fold) const;
  std::size_t total_leaks() const;
  int folds() const noexcept { return static_cast<int>(test_.size()); }
  std::size_t uses(int fold) const;

 private:
  std::vector<std::vector<std::size_t>> test_;
  std::vector<std::vector<std::size_t>> used_;
};

struct RegressionReport {
  int outer_folds = 0;
  std::vector<double> grid;
  std::vector<double> chosen_penalty;          // per outer fold
  std::vector<double> chosen_r2;               // inner score of the chosen penalty
  std::vector<std::vector<double>> inner_r2;   // outer fold x grid
  std::vector<int> fold_of;                    // per row
  std::vector<std::int64_t> ids;               // per row, optional
  Vector y_true;
  Vector predictions;                          // out-of-fold
  double pearson_r = 0.0;
  double baseline_r = 0.0;
};

struct NestedCvOptions {
  int outer_folds = 5;
  int inner_folds = 4;
  std::uint64_t seed = 1;
  RidgeOptions ridge;
};

/// Fold ids 0..folds-1 for n rows, balanced, seeded.
std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed);

RegressionReport nested_cv(const Matrix& x, const Vector& y, std::span<const double> penalty_grid,
                           const NestedCvOptions& options, RowUsageLedger* ledger = nullptr);

/// report.csv (fold,penalty,r2_inner), predictions.csv (id,y_true,y_pred)
/// and summary.csv (pearson_r,baseline_r).
void write_report(const RegressionReport& report, const std::filesystem::path& dir);

}  // namespace ssmt::eval
