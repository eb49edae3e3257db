// SPDX-License-Identifier: Apache-2.0
// Reference computations used as test oracles. Each one takes a code path
// independent of the library routine it checks.
#pragma once

#include "emreselect/core.hpp"
#include "emreselect/forecaster.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace emr::oracle {

/// Residual sum of squares of the least-squares line through
/// (t, series[t-1]) for t = s+1..e, solved with a QR factorization.
double line_rss(std::span<const double> series, int s, int e);

/// Three explicit fits: (rss(s,e) - rss(s,c) - rss(c,e)) / sigma^2, clamped at 0.
double glr(std::span<const double> series, int s, int e, int c, double sigma);

/// Split with the largest oracle GLR over c in [s+2, e-2], smallest c on ties.
int best_split(std::span<const double> series, int s, int e, double sigma);

/// Smallest 1-based k such that at least (n+1)(1-alpha) scores sit at or
/// below the k-th order statistic, found by scanning. n + 1 when none does.
std::size_t conformal_rank(std::size_t n, double alpha);

/// Central differences of the teacher-forced risk, evaluated through predict().
Vector finite_difference_gradient(const nn::Forecaster& model, std::span<const TdeWindow> windows, double step);

/// Coordinates where analytic and numeric gradients disagree beyond
/// rel * max(|a|, |n|) + abs_floor.
std::vector<Index> gradient_mismatches(const Vector& analytic, const Vector& numeric, double rel,
                                       double abs_floor = 1e-7);

}  // namespace emr::oracle
