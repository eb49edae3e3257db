// SPDX-License-Identifier: Apache-2.0
#include "emreselect/conformal.hpp"

#include "emreselect/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace emr::conformal {

std::size_t quantile_rank(std::size_t n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const double raw = static_cast<double>(n + 1) * (1.0 - alpha);
  // (n+1)(1-alpha) is often an integer that rounds up by one ulp.
  const double r = std::round(raw);
  if (std::abs(raw - r) <= 1e-9 * std::max(1.0, raw)) return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(raw));
}

ConformalCalibrator ConformalCalibrator::from_scores(std::vector<std::vector<double>> scores, double alpha) {
  if (scores.empty() || scores.front().empty()) throw std::invalid_argument("calibration set is empty");
  const std::size_t n = scores.front().size();
  ConformalCalibrator c;
  c.alpha_ = alpha;
  c.rank_ = quantile_rank(n, alpha);
  c.unbounded_ = c.rank_ > n;
  for (auto& col : scores) {
    if (col.size() != n) throw std::invalid_argument("score columns differ in length");
    for (double s : col) {
      if (!std::isfinite(s) || s < 0.0) throw NumericError("conformal scores must be finite and non-negative");
    }
    std::sort(col.begin(), col.end());
    c.quantile_.push_back(c.unbounded_ ? std::numeric_limits<double>::infinity() : col[c.rank_ - 1]);
  }
  c.scores_ = std::move(scores);
  return c;
}

ConformalCalibrator ConformalCalibrator::calibrate(const Predictor& model, std::span<const TdeWindow> windows,
                                                   double alpha, const Scaler* scaler) {
  if (windows.empty()) throw std::invalid_argument("calibration set is empty");
  const Index q = model.output_dim();
  std::vector<std::vector<double>> scores(static_cast<std::size_t>(q));
  for (const auto& w : windows) {
    Vector pred = model.predict(w);
    Vector y = w.target;
    if (scaler) {
      pred = scaler->invert_output(pred);
      y = scaler->invert_output(y);
    }
    for (Index j = 0; j < q; ++j) scores[static_cast<std::size_t>(j)].push_back(std::abs(y(j) - pred(j)));
  }
  return from_scores(std::move(scores), alpha);
}

std::size_t ConformalCalibrator::calibration_size() const { return scores_.empty() ? 0 : scores_.front().size(); }

PredictionInterval ConformalCalibrator::interval_around(const Vector& prediction) const {
  if (!calibrated()) throw StateError("conformal calibrator used before calibrate()");
  if (prediction.size() != static_cast<Index>(quantile_.size())) {
    throw std::invalid_argument("prediction has " + std::to_string(prediction.size()) + " outputs, calibrator " +
                                std::to_string(quantile_.size()));
  }
  const Vector q = Eigen::Map<const Vector>(quantile_.data(), static_cast<Index>(quantile_.size()));
  return {prediction - q, prediction + q};
}

PredictionInterval ConformalCalibrator::predict_interval(const Predictor& model, const TdeWindow& window,
                                                         const Scaler* scaler) const {
  Vector pred = model.predict(window);
  if (scaler) pred = scaler->invert_output(pred);
  return interval_around(pred);
}

IntervalReport ConformalCalibrator::evaluate(const Predictor& model, std::span<const TdeWindow> windows,
                                             const Scaler* scaler) const {
  if (windows.empty()) throw std::invalid_argument("interval evaluation needs test windows");
  if (!calibrated()) throw StateError("conformal calibrator used before calibrate()");
  const auto q = static_cast<Index>(quantile_.size());
  Vector covered = Vector::Zero(q);
  Vector width = Vector::Zero(q);
  for (const auto& w : windows) {
    const auto iv = predict_interval(model, w, scaler);
    const Vector y = scaler ? scaler->invert_output(w.target) : w.target;
    for (Index j = 0; j < q; ++j) {
      if (iv.lo(j) <= y(j) && y(j) <= iv.hi(j)) covered(j) += 1.0;
      width(j) += iv.hi(j) - iv.lo(j);
    }
  }
  const double n = static_cast<double>(windows.size());
  return {covered / n, width / n, windows.size()};
}

std::pair<std::vector<TdeWindow>, std::vector<TdeWindow>> split_half(std::span<const TdeWindow> windows,
                                                                     std::uint64_t seed) {
  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = windows.size() / 2;
  std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  std::sort(order.begin() + static_cast<std::ptrdiff_t>(half), order.end());
  std::pair<std::vector<TdeWindow>, std::vector<TdeWindow>> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < half ? out.first : out.second).push_back(windows[order[i]]);
  return out;
}

}  // namespace emr::conformal
