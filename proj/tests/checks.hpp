#pragma once

// Numeric checks shared by the unit tests and the acceptance runner. Each
// returns measured quantities; the caller decides pass/fail.

#include <filesystem>
#include <string>
#include <vector>

#include "ssmt/config.hpp"

namespace checks {

struct Value {
  std::string name;
  double got = 0.0;
  double want = 0.0;
  double tol = 0.0;

  bool ok() const;
};

/// Every worked loss example in 64-bit arithmetic.
std::vector<Value> loss_arithmetic();

struct GradCheck {
  std::int64_t params = 0;
  double rel_error = 0.0;  // |g_analytic - g_fd| / |g_fd| over all parameters
};

/// Discriminator objective (critic, penalty and task terms) on a tiny
/// double-precision model with 8x8x2 inputs.
GradCheck gradient_check_discriminator(std::uint64_t seed);
/// Generator objective, differentiated through a fixed tiny discriminator.
GradCheck gradient_check_generator(std::uint64_t seed);

struct EmdResult {
  double gap = 0.0;     // mean D(real) - mean D(fake) after training
  double target = 0.0;  // |a - b|
};

/// Scalar critic D(x) = w x trained by the critic loss on point masses.
EmdResult emd_point_masses(double a, double b, int steps, std::uint64_t seed);

struct RidgeCheck {
  double max_abs_error = 0.0;
  int systems = 0;
};
RidgeCheck ridge_vs_normal_equations(int systems, std::uint64_t seed);
std::size_t nested_cv_leaks(std::uint64_t seed);

/// Largest relative spread of weight * count across classes.
double weight_mass_spread(const std::vector<long long>& counts);

struct InitCheck {
  double same_init_max_diff = 0.0;
  double mean_dev = 0.0, mean_bound = 0.0;
  double sd_dev = 0.0, sd_bound = 0.0;
};
InitCheck init_schemes(std::uint64_t seed);

/// Small run configuration (16x16 tiles, narrow networks) for fast
/// training tests.
ssmt::config::RunConfig tiny_config();
/// Writes a small dataset once per directory and returns its path.
std::filesystem::path tiny_dataset(const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& p);

}  // namespace checks
