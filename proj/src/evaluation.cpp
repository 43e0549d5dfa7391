#include "ssmt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>

#include "ssmt/config.hpp"
#include "ssmt/error.hpp"
#include "ssmt/random.hpp"

namespace ssmt::eval {

namespace {

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Vector take(const Vector& y, std::span<const std::size_t> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(rows[i]));
  return out;
}

double held_out_r2(const Vector& truth, const Vector& pred) {
  const double sst = (truth.array() - truth.mean()).square().sum();
  const double sse = (truth - pred).squaredNorm();
  if (sst <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return 1.0 - sse / sst;
}

}  // namespace

Vector RidgeModel::predict(const Matrix& x) const {
  if (x.cols() != beta.size()) throw Error(Errc::ShapeMismatch, "feature count differs from the fitted model");
  return (x * beta).array() + intercept;
}

RidgeModel ridge_fit(const Matrix& x, const Vector& y, double k, const RidgeOptions& options) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n < 2) throw Error(Errc::InvalidArgument, "ridge needs at least 2 rows");
  if (y.size() != n) throw Error(Errc::ShapeMismatch, "X and y row counts differ");
  if (!(k >= 0.0) || !std::isfinite(k)) throw Error(Errc::InvalidArgument, "ridge penalty must be finite and >= 0");
  if (!x.allFinite() || !y.allFinite()) throw Error(Errc::NonFiniteValue, "non-finite ridge input");

  Vector mean = Vector::Zero(d);
  Vector scale = Vector::Ones(d);
  double y_mean = 0.0;
  if (options.fit_intercept) {
    mean = x.colwise().mean().transpose();
    y_mean = y.mean();
  }
  Matrix xc = x.rowwise() - mean.transpose();
  if (options.standardize) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sd = std::sqrt(xc.col(j).squaredNorm() / static_cast<double>(n));
      scale(j) = sd > 0.0 ? sd : 1.0;
      xc.col(j) /= scale(j);
    }
  }
  const Vector yc = y.array() - y_mean;

  Vector b;
  if (k > 0.0) {
    Matrix a = xc.transpose() * xc;
    a.diagonal().array() += k;
    b = a.ldlt().solve(xc.transpose() * yc);
  } else {
    Eigen::ColPivHouseholderQR<Matrix> qr(xc);
    if (qr.rank() < d) throw Error(Errc::SingularSystem, "unpenalized ridge on a rank-deficient design");
    b = qr.solve(yc);
  }
  RidgeModel m;
  m.beta = b.array() / scale.array();
  m.intercept = y_mean - mean.dot(m.beta);
  return m;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::ShapeMismatch, "pearson inputs differ in length");
  if (a.size() < 2) throw Error(Errc::InvalidArgument, "pearson needs at least 2 values");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::ZeroVariance, "pearson input has zero variance");
  return std::clamp(sab / (std::sqrt(saa) * std::sqrt(sbb)), -1.0, 1.0);
}

double pearson(const Vector& a, const Vector& b) {
  return pearson(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                 std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

void RowUsageLedger::begin_fold(int fold, std::span<const std::size_t> test_rows) {
  const auto f = static_cast<std::size_t>(fold);
  if (test_.size() <= f) {
    test_.resize(f + 1);
    used_.resize(f + 1);
  }
  test_[f].assign(test_rows.begin(), test_rows.end());
  std::sort(test_[f].begin(), test_[f].end());
}

void RowUsageLedger::record(int fold, std::span<const std::size_t> rows) {
  auto& u = used_.at(static_cast<std::size_t>(fold));
  u.insert(u.end(), rows.begin(), rows.end());
}

std::vector<std::size_t> RowUsageLedger::leaked(int fold) const {
  const auto& test = test_.at(static_cast<std::size_t>(fold));
  std::vector<std::size_t> out;
  for (auto r : used_.at(static_cast<std::size_t>(fold))) {
    if (std::binary_search(test.begin(), test.end(), r)) out.push_back(r);
  }
  return out;
}

std::size_t RowUsageLedger::total_leaks() const {
  std::size_t total = 0;
  for (int f = 0; f < folds(); ++f) total += leaked(f).size();
  return total;
}

std::size_t RowUsageLedger::uses(int fold) const { return used_.at(static_cast<std::size_t>(fold)).size(); }

std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(Errc::FoldTooSmall, "need at least 2 folds");
  if (n < static_cast<std::size_t>(folds)) {
    throw Error(Errc::FoldTooSmall, std::to_string(n) + " rows cannot fill " + std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, {0xF01D}));
  rng.shuffle(perm.begin(), perm.end());
  std::vector<int> fold_of(n);
  for (std::size_t i = 0; i < n; ++i) fold_of[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return fold_of;
}

RegressionReport nested_cv(const Matrix& x, const Vector& y, std::span<const double> penalty_grid,
                           const NestedCvOptions& options, RowUsageLedger* ledger) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (y.size() != x.rows()) throw Error(Errc::ShapeMismatch, "X and y row counts differ");
  if (penalty_grid.empty()) throw Error(Errc::InvalidArgument, "empty penalty grid");
  if (options.inner_folds < 2) throw Error(Errc::FoldTooSmall, "need at least 2 inner folds");

  RegressionReport report;
  report.outer_folds = options.outer_folds;
  report.grid.assign(penalty_grid.begin(), penalty_grid.end());
  report.fold_of = assign_folds(n, options.outer_folds, options.seed);
  report.y_true = y;
  report.predictions = Vector::Zero(static_cast<Eigen::Index>(n));

  for (int f = 0; f < options.outer_folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (report.fold_of[i] == f ? test : train).push_back(i);
    if (train.size() < static_cast<std::size_t>(2 * options.inner_folds)) {
      throw Error(Errc::FoldTooSmall, "outer fold " + std::to_string(f) + " leaves too few rows for inner folds");
    }
    if (ledger) ledger->begin_fold(f, test);

    const auto inner_of = assign_folds(train.size(), options.inner_folds, derive_seed(options.seed, {1, static_cast<std::uint64_t>(f)}));
    std::vector<double> score(penalty_grid.size(), 0.0);
    std::vector<int> scored(penalty_grid.size(), 0);
    for (int g = 0; g < options.inner_folds; ++g) {
      std::vector<std::size_t> fit_rows, held_rows;
      for (std::size_t i = 0; i < train.size(); ++i) (inner_of[i] == g ? held_rows : fit_rows).push_back(train[i]);
      if (ledger) {
        ledger->record(f, fit_rows);
        ledger->record(f, held_rows);
      }
      const Matrix xf = take_rows(x, fit_rows);
      const Vector yf = take(y, fit_rows);
      const Matrix xh = take_rows(x, held_rows);
      const Vector yh = take(y, held_rows);
      for (std::size_t p = 0; p < penalty_grid.size(); ++p) {
        const double r2 = held_out_r2(yh, ridge_fit(xf, yf, penalty_grid[p], options.ridge).predict(xh));
        if (!std::isnan(r2)) {
          score[p] += r2;
          ++scored[p];
        }
      }
    }
    std::size_t best = 0;
    std::vector<double> mean_r2(penalty_grid.size());
    for (std::size_t p = 0; p < penalty_grid.size(); ++p) {
      mean_r2[p] = scored[p] ? score[p] / scored[p] : -std::numeric_limits<double>::infinity();
      if (mean_r2[p] > mean_r2[best]) best = p;
    }
    report.inner_r2.push_back(mean_r2);
    report.chosen_penalty.push_back(penalty_grid[best]);
    report.chosen_r2.push_back(mean_r2[best]);

    if (ledger) ledger->record(f, train);
    const auto model = ridge_fit(take_rows(x, train), take(y, train), penalty_grid[best], options.ridge);
    const Vector pred = model.predict(take_rows(x, test));
    for (std::size_t i = 0; i < test.size(); ++i) report.predictions(static_cast<Eigen::Index>(test[i])) = pred(static_cast<Eigen::Index>(i));
  }
  report.pearson_r = pearson(report.predictions, y);
  return report;
}

void write_report(const RegressionReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::Io, "cannot write '" + (dir / name).string() + "'");
    return out;
  };
  using config::format_real;
  {
    auto out = open("report.csv");
    out << "fold,penalty,r2_inner\n";
    for (std::size_t f = 0; f < report.chosen_penalty.size(); ++f) {
      out << f << ',' << format_real(report.chosen_penalty[f]) << ',' << format_real(report.chosen_r2[f]) << '\n';
    }
  }
  {
    auto out = open("predictions.csv");
    out << "id,y_true,y_pred\n";
    for (Eigen::Index i = 0; i < report.predictions.size(); ++i) {
      const auto id = report.ids.empty() ? static_cast<std::int64_t>(i) : report.ids[static_cast<std::size_t>(i)];
      out << id << ',' << format_real(report.y_true(i)) << ',' << format_real(report.predictions(i)) << '\n';
    }
  }
  {
    auto out = open("summary.csv");
    out << "pearson_r,baseline_r\n" << format_real(report.pearson_r) << ',' << format_real(report.baseline_r) << '\n';
  }
}

}  // namespace ssmt::eval
