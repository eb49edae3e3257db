// SPDX-License-Identifier: Apache-2.0
#include "emreselect/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace emr::cp {

namespace {

void check_interval(std::span<const double> series, int s, int e, int min_points) {
  if (s < 0 || e > static_cast<int>(series.size()) || e - s < min_points) {
    throw std::invalid_argument("interval (" + std::to_string(s) + ", " + std::to_string(e) +
                                "] invalid for series of length " + std::to_string(series.size()) +
                                " (needs at least " + std::to_string(min_points) + " points)");
  }
}

// Running bivariate moments, updated one point at a time (Welford). Used for
// the O(len) scan in best_split only; exact values come from fit_linear_rss.
struct RunningLine {
  double n = 0.0, mx = 0.0, my = 0.0, cxx = 0.0, cxy = 0.0, cyy = 0.0;

  void add(double x, double y) {
    n += 1.0;
    const double dx = x - mx;
    mx += dx / n;
    const double dy = y - my;
    my += dy / n;
    cxx += dx * (x - mx);
    cxy += dx * (y - my);
    cyy += dy * (y - my);
  }
  [[nodiscard]] double rss() const {
    if (n < 3.0 || cxx <= 0.0) return 0.0;
    return std::max(0.0, cyy - cxy * cxy / cxx);
  }
};

double median_inplace(std::vector<double>& v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), mid));
  }
  return m;
}

}  // namespace

void NotConfig::validate() const {
  if (num_intervals < 1) throw std::invalid_argument("NOT config: num_intervals must be >= 1");
  if (min_segment_length < kMinSegmentLength) {
    throw std::invalid_argument("NOT config: min_segment_length must be >= 5");
  }
  if (threshold && !(std::isfinite(*threshold) && *threshold >= 0.0)) {
    throw std::invalid_argument("NOT config: threshold must be finite and non-negative");
  }
}

LineFit fit_linear_rss(std::span<const double> series, int s, int e) {
  check_interval(series, s, e, 2);
  const int n = e - s;
  // Local time u = t - s keeps the normal equations well conditioned; the
  // intercept is reported for the global time axis.
  double mu = 0.0, my = 0.0;
  for (int t = s + 1; t <= e; ++t) {
    mu += t - s;
    my += series[static_cast<std::size_t>(t - 1)];
  }
  mu /= n;
  my /= n;
  double suu = 0.0, suy = 0.0;
  for (int t = s + 1; t <= e; ++t) {
    const double du = (t - s) - mu;
    suu += du * du;
    suy += du * (series[static_cast<std::size_t>(t - 1)] - my);
  }
  LineFit fit;
  fit.slope = suy / suu;
  const double local_intercept = my - fit.slope * mu;
  double rss = 0.0;
  for (int t = s + 1; t <= e; ++t) {
    const double r = series[static_cast<std::size_t>(t - 1)] - local_intercept - fit.slope * (t - s);
    rss += r * r;
  }
  fit.rss = rss;
  fit.intercept = local_intercept - fit.slope * s;
  return fit;
}

double glr_statistic(std::span<const double> series, int s, int e, int c, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("glr_statistic: sigma must be positive");
  check_interval(series, s, e, 4);
  if (c < s + 2 || c > e - 2) {
    throw std::invalid_argument("glr_statistic: split " + std::to_string(c) + " outside [" +
                                std::to_string(s + 2) + ", " + std::to_string(e - 2) + "]");
  }
  const double full = fit_linear_rss(series, s, e).rss;
  const double left = fit_linear_rss(series, s, c).rss;
  const double right = fit_linear_rss(series, c, e).rss;
  return std::max(0.0, (full - left - right) / (sigma * sigma));
}

Split best_split(std::span<const double> series, int s, int e, double sigma, int min_segment_length) {
  if (!(sigma > 0.0)) throw std::invalid_argument("best_split: sigma must be positive");
  check_interval(series, s, e, std::max(min_segment_length, 4));
  const int len = e - s;
  // prefix[k]: rss of (s, s+k]; suffix[k]: rss of (s+k, e].
  std::vector<double> prefix(static_cast<std::size_t>(len + 1), 0.0);
  std::vector<double> suffix(static_cast<std::size_t>(len + 1), 0.0);
  RunningLine fwd;
  for (int k = 1; k <= len; ++k) {
    fwd.add(k, series[static_cast<std::size_t>(s + k - 1)]);
    prefix[static_cast<std::size_t>(k)] = fwd.rss();
  }
  RunningLine bwd;
  for (int k = len - 1; k >= 0; --k) {
    bwd.add(k + 1, series[static_cast<std::size_t>(s + k)]);
    suffix[static_cast<std::size_t>(k)] = bwd.rss();
  }
  const double full = prefix[static_cast<std::size_t>(len)];
  std::vector<double> approx(static_cast<std::size_t>(len + 1), 0.0);
  double best_approx = -1.0;
  for (int k = 2; k <= len - 2; ++k) {
    approx[static_cast<std::size_t>(k)] =
        full - prefix[static_cast<std::size_t>(k)] - suffix[static_cast<std::size_t>(k)];
    best_approx = std::max(best_approx, approx[static_cast<std::size_t>(k)]);
  }
  // The running sums lose absolute accuracy of order eps * cyy. Every split
  // within that band of the scan maximum is re-evaluated exactly.
  const double slack = 1e-9 * (fwd.cyy + std::abs(full)) + 1e-300;
  Split best{s + 2, -1.0};
  for (int k = 2; k <= len - 2; ++k) {
    if (approx[static_cast<std::size_t>(k)] < best_approx - slack) continue;
    const double g = glr_statistic(series, s, e, s + k, sigma);
    if (g > best.glr * (1.0 + 1e-12) + 1e-300 || best.glr < 0.0) best = {s + k, g};
  }
  return best;
}

SigmaEstimate estimate_sigma(std::span<const double> series) {
  if (series.size() < 3) throw std::invalid_argument("estimate_sigma needs at least 3 points");
  std::vector<double> d2(series.size() - 2);
  for (std::size_t t = 1; t + 1 < series.size(); ++t) {
    d2[t - 1] = series[t + 1] - 2.0 * series[t] + series[t - 1];
  }
  std::vector<double> work = d2;
  const double med = median_inplace(work);
  for (std::size_t i = 0; i < d2.size(); ++i) work[i] = std::abs(d2[i] - med);
  const double mad = median_inplace(work);
  SigmaEstimate est;
  est.sigma = 1.4826 * mad / std::sqrt(6.0);
  if (!(est.sigma >= kSigmaFloor)) {
    est.sigma = kSigmaFloor;
    est.floored = true;
  }
  return est;
}

double resolve_threshold(const NotConfig& config, std::size_t n) {
  if (config.threshold) return *config.threshold;
  const double root = kAutoThresholdConstant * std::sqrt(2.0 * std::log(static_cast<double>(n)));
  return root * root;
}

Detection detect_not(std::span<const double> series, const NotConfig& config, std::optional<double> sigma) {
  config.validate();
  const int n = static_cast<int>(series.size());
  if (n < 2 * config.min_segment_length) {
    throw std::invalid_argument("detect_not: series of length " + std::to_string(n) +
                                " shorter than 2 * min_segment_length");
  }
  Detection out;
  if (sigma) {
    if (!(*sigma > 0.0)) throw std::invalid_argument("detect_not: sigma must be positive");
    out.sigma = *sigma;
  } else {
    const auto est = estimate_sigma(series);
    out.sigma = est.sigma;
    out.sigma_floored = est.floored;
  }
  out.threshold = resolve_threshold(config, series.size());

  struct Candidate {
    Interval interval;
    Split split;
    bool alive = true;
  };
  std::mt19937_64 rng(config.rng_seed);
  std::uniform_int_distribution<int> endpoint(0, n);
  std::vector<Candidate> candidates;
  candidates.reserve(static_cast<std::size_t>(config.num_intervals));
  while (static_cast<int>(candidates.size()) < config.num_intervals) {
    int a = endpoint(rng);
    int b = endpoint(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (b - a < config.min_segment_length) continue;
    candidates.push_back({{a, b}, {}, true});
  }
  for (auto& cand : candidates) {
    cand.split = best_split(series, cand.interval.s, cand.interval.e, out.sigma, config.min_segment_length);
    cand.alive = cand.split.glr > out.threshold;
  }

  for (;;) {
    const Candidate* pick = nullptr;
    for (const auto& cand : candidates) {
      if (!cand.alive) continue;
      if (pick == nullptr) {
        pick = &cand;
        continue;
      }
      const int w = cand.interval.width();
      const int pw = pick->interval.width();
      if (w < pw || (w == pw && (cand.split.glr > pick->split.glr ||
                                 (cand.split.glr == pick->split.glr && cand.split.c < pick->split.c)))) {
        pick = &cand;
      }
    }
    if (pick == nullptr) break;
    const ChangePoint accepted{pick->split.c, pick->interval, pick->split.glr, 0};
    out.points.push_back(accepted);
    for (auto& cand : candidates) {
      if (cand.interval.s < accepted.index && accepted.index < cand.interval.e) cand.alive = false;
    }
  }
  std::sort(out.points.begin(), out.points.end(),
            [](const ChangePoint& a, const ChangePoint& b) { return a.index < b.index; });
  out.points.erase(std::unique(out.points.begin(), out.points.end(),
                               [](const ChangePoint& a, const ChangePoint& b) { return a.index == b.index; }),
                   out.points.end());
  return out;
}

}  // namespace emr::cp
