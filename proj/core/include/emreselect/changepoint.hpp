// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace emr::cp {

inline constexpr int kMinSegmentLength = 5;
inline constexpr double kSigmaFloor = 1e-8;
inline constexpr double kAutoThresholdConstant = 1.3;

/// Half-open interval (s, e] over 1-based time: it covers series elements
/// s..e-1 in 0-based storage.
struct Interval {
  int s = 0;
  int e = 0;
  [[nodiscard]] int width() const { return e - s; }
  bool operator==(const Interval&) const = default;
};

/// A detected break. `index` is c: the last time of the first segment (s, c],
/// equivalently the 0-based row at which the second segment starts.
struct ChangePoint {
  int index = 0;
  Interval interval;
  double glr = 0.0;
  int dimension = 0;
};

struct NotConfig {
  int num_intervals = 1000;
  /// Threshold on the GLR scale. Empty selects the automatic threshold.
  std::optional<double> threshold;
  int min_segment_length = 5;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double rss = 0.0;
};

/// Least-squares line through (t, series[t-1]) for t in s+1..e.
[[nodiscard]] LineFit fit_linear_rss(std::span<const double> series, int s, int e);

/// Gaussian known-variance GLR for a piecewise-linear mean split at c:
/// (rss(s,e) - rss(s,c) - rss(c,e)) / sigma^2, clamped at 0.
[[nodiscard]] double glr_statistic(std::span<const double> series, int s, int e, int c, double sigma);

struct Split {
  int c = 0;
  double glr = 0.0;
};

/// argmax over c in {s+2, ..., e-2} of the GLR; smallest c wins ties.
[[nodiscard]] Split best_split(std::span<const double> series, int s, int e, double sigma,
                               int min_segment_length = kMinSegmentLength);

struct SigmaEstimate {
  double sigma = 0.0;
  bool floored = false;  // raw estimate was below kSigmaFloor
};

/// MAD of second differences scaled to a Gaussian deviation:
/// sigma = 1.4826 * MAD(d2 y) / sqrt(6).
[[nodiscard]] SigmaEstimate estimate_sigma(std::span<const double> series);

/// The resolved GLR threshold: an explicit config value, or
/// (C * sqrt(2 log n))^2 with C = 1.3, the universal threshold applied on the
/// square-root (contrast) scale of the statistic.
[[nodiscard]] double resolve_threshold(const NotConfig& config, std::size_t n);

struct Detection {
  std::vector<ChangePoint> points;
  double sigma = 0.0;
  double threshold = 0.0;
  bool sigma_floored = false;
};

/// Narrowest-over-threshold detection on a single series. `sigma` overrides
/// the internal estimate when given.
[[nodiscard]] Detection detect_not(std::span<const double> series, const NotConfig& config,
                                   std::optional<double> sigma = std::nullopt);

}  // namespace emr::cp
