// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// One domain's worth of aligned observations. Row t of `inputs` and `outputs`
/// is time t * sample_period; rows are never reordered.
struct TimeSeriesDataset {
  Matrix inputs;   // n x p
  Matrix outputs;  // n x q
  double sample_period = 1.0;
  std::string domain_id;

  [[nodiscard]] Index rows() const { return outputs.rows(); }
  [[nodiscard]] Index input_dim() const { return inputs.cols(); }
  [[nodiscard]] Index output_dim() const { return outputs.cols(); }

  /// Throws std::invalid_argument if any dataset invariant is violated.
  void validate() const;

  /// Rows [begin, end) as a new dataset with the same domain id.
  [[nodiscard]] TimeSeriesDataset slice(Index begin, Index end) const;
};

/// Time-delay embedding of the observation at `origin_index`.
///
/// `input_block` holds inputs for rows origin-d+1..origin (the current
/// measurement is available to the estimator), `decoder_history` holds outputs
/// for rows origin-d..origin-1 and `target` is outputs.row(origin).
struct TdeWindow {
  Matrix input_block;      // d x p
  Matrix decoder_history;  // d x q
  Vector target;           // q
  Index origin_index = 0;

  [[nodiscard]] Index order() const { return input_block.rows(); }
};

struct MemoryEntry {
  TdeWindow window;
  std::string domain_id;
  // Higher priority survives capacity eviction.
  double priority = 0.0;
};

/// Append-only store of representative windows across domains.
///
/// With a capacity set, overflow is resolved by repeatedly evicting from the
/// domain that currently holds the most entries the entry with the lowest
/// priority (latest inserted on ties). No domain is emptied while another
/// holds more than one entry.
class MemoryBuffer {
 public:
  MemoryBuffer() = default;
  explicit MemoryBuffer(std::optional<std::size_t> capacity) : capacity_(capacity) {}

  void append(MemoryEntry entry);
  void append(const std::vector<MemoryEntry>& entries);

  [[nodiscard]] const std::vector<MemoryEntry>& entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }
  [[nodiscard]] std::optional<std::size_t> capacity() const { return capacity_; }
  [[nodiscard]] std::vector<TdeWindow> windows() const;
  [[nodiscard]] std::size_t count_domain(const std::string& domain_id) const;

 private:
  void enforce_capacity();

  std::vector<MemoryEntry> entries_;
  std::optional<std::size_t> capacity_;
};

/// Per-channel z-score parameters.
struct Scaler {
  Vector input_mean;
  Vector input_std;
  Vector output_mean;
  Vector output_std;
  bool degenerate_channel = false;  // some channel had zero variance

  [[nodiscard]] TimeSeriesDataset apply(const TimeSeriesDataset& raw) const;
  [[nodiscard]] TimeSeriesDataset invert(const TimeSeriesDataset& scaled) const;
  [[nodiscard]] Matrix apply_outputs(const Matrix& raw) const;
  [[nodiscard]] Matrix invert_outputs(const Matrix& scaled) const;
  [[nodiscard]] Vector invert_output(const Vector& scaled) const;
};

[[nodiscard]] Scaler fit_scaler(const TimeSeriesDataset& dataset);

/// Where the decoder history of a window comes from.
struct HistorySource {
  // Empty: teacher forcing from dataset outputs. Otherwise an n x q matrix
  // whose rows replace the dataset outputs as history.
  const Matrix* predictions = nullptr;

  static HistorySource truth() { return {}; }
  static HistorySource from(const Matrix& predicted) { return {&predicted}; }
};

[[nodiscard]] TdeWindow tde_window(const TimeSeriesDataset& dataset, Index index, Index order,
                                   HistorySource history = HistorySource::truth());

/// Teacher-forced windows for every index in [order, n).
[[nodiscard]] std::vector<TdeWindow> all_windows(const TimeSeriesDataset& dataset,
                                                 Index order);

/// Anything that maps a window to a q-vector.
class Predictor {
 public:
  virtual ~Predictor() = default;
  [[nodiscard]] virtual Vector predict(const TdeWindow& window) const = 0;
  [[nodiscard]] virtual Index output_dim() const = 0;
};

/// Mean over windows of the squared l2 prediction error.
[[nodiscard]] double empirical_risk(const Predictor& model, std::span<const TdeWindow> windows);

}  // namespace emr
