// SPDX-License-Identifier: Apache-2.0
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace emr::oracle {

double line_rss(std::span<const double> series, int s, int e) {
  const int m = e - s;
  Matrix design(m, 2);
  Vector y(m);
  for (int k = 0; k < m; ++k) {
    design(k, 0) = 1.0;
    design(k, 1) = static_cast<double>(s + 1 + k);
    y(k) = series[static_cast<std::size_t>(s + k)];
  }
  const Vector beta = design.colPivHouseholderQr().solve(y);
  return (y - design * beta).squaredNorm();
}

double glr(std::span<const double> series, int s, int e, int c, double sigma) {
  const double v = (line_rss(series, s, e) - line_rss(series, s, c) - line_rss(series, c, e)) / (sigma * sigma);
  return std::max(0.0, v);
}

int best_split(std::span<const double> series, int s, int e, double sigma) {
  int best = s + 2;
  double best_glr = -1.0;
  for (int c = s + 2; c <= e - 2; ++c) {
    const double g = glr(series, s, e, c, sigma);
    if (g > best_glr) {
      best_glr = g;
      best = c;
    }
  }
  return best;
}

std::size_t conformal_rank(std::size_t n, double alpha) {
  const double need = static_cast<double>(n + 1) * (1.0 - alpha);
  for (std::size_t k = 1; k <= n; ++k) {
    if (static_cast<double>(k) >= need - 1e-9) return k;
  }
  return n + 1;
}

Vector finite_difference_gradient(const nn::Forecaster& model, std::span<const TdeWindow> windows, double step) {
  std::unique_ptr<nn::Forecaster> probe = model.clone();
  Vector& theta = probe->parameters().values();
  Vector grad(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    const double keep = theta(i);
    theta(i) = keep + step;
    const double up = empirical_risk(*probe, windows);
    theta(i) = keep - step;
    const double down = empirical_risk(*probe, windows);
    theta(i) = keep;
    grad(i) = (up - down) / (2.0 * step);
  }
  return grad;
}

std::vector<Index> gradient_mismatches(const Vector& analytic, const Vector& numeric, double rel,
                                       double abs_floor) {
  std::vector<Index> bad;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double scale = std::max(std::abs(analytic(i)), std::abs(numeric(i)));
    if (std::abs(analytic(i) - numeric(i)) > rel * scale + abs_floor) bad.push_back(i);
  }
  return bad;
}

}  // namespace emr::oracle
