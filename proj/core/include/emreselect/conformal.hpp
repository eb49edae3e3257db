// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/core.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace emr::conformal {

/// 1-based rank ceil((n + 1)(1 - alpha)) of the order statistic used as the
/// quantile. May exceed n.
[[nodiscard]] std::size_t quantile_rank(std::size_t n, double alpha);

struct PredictionInterval {
  Vector lo;
  Vector hi;
};

struct IntervalReport {
  Vector coverage;    // per output
  Vector mean_width;  // per output, +inf when q is unbounded
  std::size_t n_test = 0;
};

/// Split conformal calibrator with per-output absolute-residual scores.
/// Immutable once calibrated. When a scaler is supplied, windows are in
/// standardized units and scores, quantiles and intervals are in physical units.
class ConformalCalibrator {
 public:
  ConformalCalibrator() = default;

  static ConformalCalibrator calibrate(const Predictor& model, std::span<const TdeWindow> windows, double alpha,
                                       const Scaler* scaler = nullptr);
  /// From precomputed scores, one column per output.
  static ConformalCalibrator from_scores(std::vector<std::vector<double>> scores, double alpha);

  [[nodiscard]] bool calibrated() const { return !quantile_.empty(); }
  [[nodiscard]] double alpha() const { return alpha_; }
  [[nodiscard]] std::size_t calibration_size() const;
  [[nodiscard]] std::size_t rank() const { return rank_; }
  /// True when the rank exceeded n and every quantile is +inf.
  [[nodiscard]] bool unbounded() const { return unbounded_; }
  [[nodiscard]] const std::vector<double>& quantiles() const { return quantile_; }
  [[nodiscard]] const std::vector<std::vector<double>>& scores() const { return scores_; }

  /// Throws StateError if not calibrated.
  [[nodiscard]] PredictionInterval interval_around(const Vector& prediction) const;
  [[nodiscard]] PredictionInterval predict_interval(const Predictor& model, const TdeWindow& window,
                                                    const Scaler* scaler = nullptr) const;
  [[nodiscard]] IntervalReport evaluate(const Predictor& model, std::span<const TdeWindow> windows,
                                        const Scaler* scaler = nullptr) const;

 private:
  double alpha_ = 0.1;
  std::size_t rank_ = 0;
  bool unbounded_ = false;
  std::vector<std::vector<double>> scores_;  // sorted ascending per output
  std::vector<double> quantile_;
};

/// Seeded 50/50 split of `windows` into (calibration, test).
[[nodiscard]] std::pair<std::vector<TdeWindow>, std::vector<TdeWindow>> split_half(std::span<const TdeWindow> windows,
                                                                                   std::uint64_t seed);

}  // namespace emr::conformal
