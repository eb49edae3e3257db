// SPDX-License-Identifier: Apache-2.0
#include "emreselect/selection.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

namespace emr::sel {

namespace {

std::vector<double> column(const TimeSeriesDataset& dataset, int dim) {
  const auto& col = dataset.outputs.col(dim);
  return {col.data(), col.data() + col.size()};
}

// Symmetric window around [lo_idx, hi_idx], shrunk equally on both sides to
// fit (0, n]. Empty when no window with room for both splits and at least
// `min_length` points exists.
std::optional<cp::Interval> common_window(int n, int a, int b, int d_multi, int min_length) {
  const int lo = std::min(a, b);
  const int hi = std::max(a, b);
  int half = d_multi / 2;
  const int excess = std::max({0, half - lo, hi + half - n});
  half -= excess;
  if (half < 2) return std::nullopt;
  const cp::Interval w{lo - half, hi + half};
  if (w.width() < min_length) return std::nullopt;
  return w;
}

double glr_difference_on(std::span<const double> series, cp::Interval w, int k, int g, double sigma) {
  return cp::glr_statistic(series, w.s, w.e, k, sigma) - cp::glr_statistic(series, w.s, w.e, g, sigma);
}

}  // namespace

void SelectionConfig::validate() const {
  not_config.validate();
  if (d_multi < 2 * not_config.min_segment_length) {
    throw std::invalid_argument("selection config: d_multi must be >= 2 * min_segment_length");
  }
  if (!(glr_diff_threshold >= 0.0)) {
    throw std::invalid_argument("selection config: glr_diff_threshold must be >= 0");
  }
}

std::vector<std::vector<cp::ChangePoint>> select_per_dimension(const TimeSeriesDataset& dataset,
                                                               const SelectionConfig& config) {
  dataset.validate();
  config.validate();
  std::vector<std::vector<cp::ChangePoint>> out;
  for (int dim = 0; dim < dataset.output_dim(); ++dim) {
    const auto series = column(dataset, dim);
    try {
      auto det = cp::detect_not(series, config.not_config);
      for (auto& p : det.points) p.dimension = dim;
      out.push_back(std::move(det.points));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("output dimension " + std::to_string(dim) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RepresentativeCandidate> concatenate_candidates(
    const std::vector<std::vector<cp::ChangePoint>>& per_dim) {
  std::map<int, RepresentativeCandidate> by_index;
  for (const auto& list : per_dim) {
    for (const auto& p : list) {
      const RepresentativeCandidate c{p.index, p.dimension, p.glr};
      auto [it, inserted] = by_index.try_emplace(p.index, c);
      if (!inserted && p.glr > it->second.glr_own) it->second = c;
    }
  }
  std::vector<RepresentativeCandidate> out;
  out.reserve(by_index.size());
  for (const auto& [index, c] : by_index) out.push_back(c);
  return out;
}

double glr_difference(const TimeSeriesDataset& dataset, int own_index, int foreign_index, int dim, int d_multi,
                      std::optional<double> sigma) {
  if (dim < 0 || dim >= dataset.output_dim()) throw std::invalid_argument("glr_difference: bad dimension");
  if (std::abs(own_index - foreign_index) > d_multi / 2) {
    throw std::invalid_argument("glr_difference: points farther apart than d_multi/2");
  }
  const int n = static_cast<int>(dataset.rows());
  const int half = d_multi / 2;
  const cp::Interval w{std::min(own_index, foreign_index) - half, std::max(own_index, foreign_index) + half};
  if (w.s < 0 || w.e > n) {
    throw std::invalid_argument("glr_difference: window (" + std::to_string(w.s) + ", " +
                                std::to_string(w.e) + "] outside (0, " + std::to_string(n) + "]");
  }
  const auto series = column(dataset, dim);
  const double sd = sigma ? *sigma : cp::estimate_sigma(series).sigma;
  return glr_difference_on(series, w, own_index, foreign_index, sd);
}

FilterResult proximal_filter_trace(const TimeSeriesDataset& dataset,
                                   const std::vector<RepresentativeCandidate>& candidates,
                                   const SelectionConfig& config) {
  if (!std::is_sorted(candidates.begin(), candidates.end(),
                      [](const auto& a, const auto& b) { return a.index < b.index; })) {
    throw std::invalid_argument("proximal_filter: candidates must be sorted by index");
  }
  const int n = static_cast<int>(dataset.rows());
  const int min_length = 2 * config.not_config.min_segment_length;
  std::map<int, std::vector<double>> columns;
  std::map<int, double> sigmas;
  auto series_for = [&](int dim) -> const std::vector<double>& {
    auto it = columns.find(dim);
    if (it == columns.end()) {
      it = columns.emplace(dim, column(dataset, dim)).first;
      sigmas[dim] = cp::estimate_sigma(it->second).sigma;
    }
    return it->second;
  };

  FilterResult result;
  std::vector<bool> removed(candidates.size(), false);
  // Test on own's column; returns true if the foreign point is removed.
  auto test = [&](const RepresentativeCandidate& own, const RepresentativeCandidate& foreign) {
    FilterDecision d{own.index, foreign.index, own.source_dim, std::nullopt, FilterOutcome::Kept};
    const auto window = common_window(n, own.index, foreign.index, config.d_multi, min_length);
    if (window) {
      const auto& series = series_for(own.source_dim);
      d.e_value = glr_difference_on(series, *window, own.index, foreign.index, sigmas[own.source_dim]);
      if (*d.e_value < config.glr_diff_threshold) d.foreign_outcome = FilterOutcome::Removed;
    }
    result.decisions.push_back(d);
    return d.foreign_outcome == FilterOutcome::Removed;
  };

  for (std::size_t a = 0; a < candidates.size(); ++a) {
    for (std::size_t b = a + 1; b < candidates.size(); ++b) {
      if (candidates[b].index - candidates[a].index > config.d_multi / 2) break;
      if (removed[a]) break;
      if (removed[b] || candidates[a].source_dim == candidates[b].source_dim) continue;
      if (test(candidates[a], candidates[b])) {
        removed[b] = true;
        continue;
      }
      if (test(candidates[b], candidates[a])) removed[a] = true;
    }
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!removed[i]) result.kept.push_back(candidates[i]);
  }
  return result;
}

std::vector<RepresentativeCandidate> proximal_filter(const TimeSeriesDataset& dataset,
                                                     const std::vector<RepresentativeCandidate>& candidates,
                                                     const SelectionConfig& config) {
  return proximal_filter_trace(dataset, candidates, config).kept;
}

RepresentativeSet build_representatives(const TimeSeriesDataset& dataset, const SelectionConfig& config,
                                        Index order) {
  if (dataset.rows() <= order + config.d_multi) {
    throw std::invalid_argument("build_representatives: dataset of " + std::to_string(dataset.rows()) +
                                " rows too short for window order " + std::to_string(order) +
                                " and d_multi " + std::to_string(config.d_multi));
  }
  RepresentativeSet out;
  const auto per_dim = select_per_dimension(dataset, config);
  for (const auto& list : per_dim) out.stats.per_dimension.push_back(list.size());
  out.concatenated = concatenate_candidates(per_dim);
  out.stats.concatenated = out.concatenated.size();
  out.filter = proximal_filter_trace(dataset, out.concatenated, config);
  out.stats.filtered = out.filter.kept.size();
  for (const auto& c : out.filter.kept) {
    if (c.index < order || c.index >= dataset.rows()) {
      ++out.stats.dropped_short_history;
      continue;
    }
    out.candidates.push_back(c);
    out.memory.append(MemoryEntry{tde_window(dataset, c.index, order), dataset.domain_id, c.glr_own});
  }
  return out;
}

}  // namespace emr::sel
