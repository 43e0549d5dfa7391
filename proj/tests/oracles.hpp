#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Written with plain loops and vectors so they share no code with the
// library paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace oracle {

using Rows = std::vector<std::vector<double>>;

/// Gaussian elimination with partial pivoting on A x = b.
inline std::vector<double> gauss_solve(Rows a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-300) throw std::runtime_error("singular");
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

struct RidgeSolution {
  std::vector<double> beta;
  double intercept = 0.0;
};

/// Ridge with an unpenalized intercept via the full (d+1) normal equations.
/// Standardization divides each centred column by its population standard
/// deviation; coefficients are mapped back to the raw feature scale.
inline RidgeSolution ridge_normal_equations(const Rows& x, const std::vector<double>& y, double k, bool standardize,
                                            bool intercept) {
  const std::size_t n = x.size(), d = x[0].size();
  std::vector<double> scale(d, 1.0);
  if (standardize) {
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      if (intercept) {
        for (std::size_t i = 0; i < n; ++i) m += x[i][j];
        m /= static_cast<double>(n);
      }
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += (x[i][j] - m) * (x[i][j] - m);
      const double sd = std::sqrt(v / static_cast<double>(n));
      scale[j] = sd > 0 ? sd : 1.0;
    }
  }
  // Unknowns: [b, gamma_1..gamma_d] with z_ij = x_ij / scale_j.
  const std::size_t p = d + (intercept ? 1 : 0);
  const std::size_t off = intercept ? 1 : 0;
  Rows a(p, std::vector<double>(p, 0.0));
  std::vector<double> rhs(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(p);
    if (intercept) row[0] = 1.0;
    for (std::size_t j = 0; j < d; ++j) row[off + j] = x[i][j] / scale[j];
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) a[r][c] += row[r] * row[c];
      rhs[r] += row[r] * y[i];
    }
  }
  for (std::size_t j = 0; j < d; ++j) a[off + j][off + j] += k;
  const auto sol = gauss_solve(a, rhs);
  RidgeSolution out;
  out.intercept = intercept ? sol[0] : 0.0;
  for (std::size_t j = 0; j < d; ++j) out.beta.push_back(sol[off + j] / scale[j]);
  return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Class weights as max-count / count times importance.
inline std::vector<double> balance_weights(const std::vector<long long>& counts, double importance) {
  long long largest = 0;
  for (auto c : counts) largest = std::max(largest, c);
  std::vector<double> w;
  for (auto c : counts) w.push_back(c > 0 ? importance * static_cast<double>(largest) / static_cast<double>(c) : 0.0);
  return w;
}

/// Learning rate by direct product rather than pow.
inline double schedule(int epoch, double lr0, double decay, int drop_epoch, double drop) {
  double lr = lr0;
  for (int e = 0; e < epoch; ++e) lr *= decay;
  return epoch > drop_epoch ? lr / drop : lr;
}

}  // namespace oracle
