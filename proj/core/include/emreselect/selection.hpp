// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/changepoint.hpp"
#include "emreselect/core.hpp"

#include <optional>
#include <vector>

namespace emr::sel {

struct RepresentativeCandidate {
  int index = 0;       // dataset row
  int source_dim = 0;  // output column whose detection produced it
  double glr_own = 0.0;
};

struct SelectionConfig {
  int d_multi = 20;
  double glr_diff_threshold = 2.0;
  cp::NotConfig not_config;

  void validate() const;
};

/// One detect_not run per output column; list i is tagged dimension = i.
[[nodiscard]] std::vector<std::vector<cp::ChangePoint>> select_per_dimension(
    const TimeSeriesDataset& dataset, const SelectionConfig& config);

/// Union sorted by index; duplicate indices keep the largest-GLR entry.
[[nodiscard]] std::vector<RepresentativeCandidate> concatenate_candidates(
    const std::vector<std::vector<cp::ChangePoint>>& per_dim);

/// Signed GLR difference on column `dim` over the common window
/// (min(k,g) - d_multi/2, max(k,g) + d_multi/2]: glr(split at k) - glr(split at g).
/// `sigma` defaults to the column's second-difference estimate.
[[nodiscard]] double glr_difference(const TimeSeriesDataset& dataset, int own_index, int foreign_index,
                                    int dim, int d_multi, std::optional<double> sigma = std::nullopt);

enum class FilterOutcome { Kept, Removed };

/// Audit record for one examined (own, foreign) pair.
struct FilterDecision {
  int own_index = 0;
  int foreign_index = 0;
  int dim = 0;                    // column the test ran on (own's source dimension)
  std::optional<double> e_value;  // empty when the edge window was infeasible
  FilterOutcome foreign_outcome = FilterOutcome::Kept;
};

struct FilterResult {
  std::vector<RepresentativeCandidate> kept;
  std::vector<FilterDecision> decisions;
};

/// Proximal GLR-difference filtering. Pairs are scanned in ascending index
/// order; a candidate already removed neither causes nor suffers further tests.
[[nodiscard]] FilterResult proximal_filter_trace(const TimeSeriesDataset& dataset,
                                                 const std::vector<RepresentativeCandidate>& candidates,
                                                 const SelectionConfig& config);

[[nodiscard]] std::vector<RepresentativeCandidate> proximal_filter(
    const TimeSeriesDataset& dataset, const std::vector<RepresentativeCandidate>& candidates,
    const SelectionConfig& config);

struct SelectionStats {
  std::vector<std::size_t> per_dimension;
  std::size_t concatenated = 0;
  std::size_t filtered = 0;
  std::size_t dropped_short_history = 0;  // index < window order
};

struct RepresentativeSet {
  MemoryBuffer memory;
  std::vector<RepresentativeCandidate> candidates;  // landmarks materialized in memory
  std::vector<RepresentativeCandidate> concatenated;
  FilterResult filter;
  SelectionStats stats;
};

/// Full multivariate selection pipeline, materialized as teacher-forced
/// windows of the given order tagged with the dataset's domain id.
[[nodiscard]] RepresentativeSet build_representatives(const TimeSeriesDataset& dataset,
                                                      const SelectionConfig& config, Index order);

}  // namespace emr::sel
