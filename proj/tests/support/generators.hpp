// SPDX-License-Identifier: Apache-2.0
// Seeded random generators for property tests.
#pragma once

#include "emreselect/core.hpp"
#include "emreselect/data.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace emr::gen {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  Vector vector(Index n, double sd = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal(sd);
    return v;
  }
  Matrix matrix(Index r, Index c, double sd = 1.0) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j) {
      for (Index i = 0; i < r; ++i) m(i, j) = normal(sd);
    }
    return m;
  }
  std::vector<double> series(int n, double sd = 1.0) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (auto& x : out) x = normal(sd);
    return out;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Continuous piecewise-linear series over rows 0..n-1 whose slope changes
/// at each row in `breaks`, plus Gaussian noise.
std::vector<double> piecewise_linear(int n, const std::vector<int>& breaks, const std::vector<double>& slopes,
                                     double intercept, double noise, std::uint64_t seed);

/// Random dataset with standard-normal entries.
TimeSeriesDataset random_dataset(Index n, Index p, Index q, std::uint64_t seed, const std::string& id = "D");

/// Dataset whose outputs are given columns and whose inputs are small noise.
TimeSeriesDataset dataset_from_columns(const std::vector<std::vector<double>>& outputs, Index p,
                                       std::uint64_t seed);

}  // namespace emr::gen
