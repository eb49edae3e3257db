// SPDX-License-Identifier: Apache-2.0
#include "emreselect/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace emr {

void TimeSeriesDataset::validate() const {
  if (outputs.rows() < 1) {
    throw std::invalid_argument("dataset '" + domain_id + "' has no rows");
  }
  if (inputs.rows() != outputs.rows()) {
    throw std::invalid_argument("dataset '" + domain_id + "': inputs have " +
                                std::to_string(inputs.rows()) + " rows but outputs have " +
                                std::to_string(outputs.rows()));
  }
  if (outputs.cols() < 1) {
    throw std::invalid_argument("dataset '" + domain_id + "' has no output channels");
  }
  if (!(sample_period > 0.0) || !std::isfinite(sample_period)) {
    throw std::invalid_argument("dataset '" + domain_id + "': sample period must be positive");
  }
  if (!inputs.allFinite() || !outputs.allFinite()) {
    throw std::invalid_argument("dataset '" + domain_id + "' contains NaN or Inf");
  }
}

TimeSeriesDataset TimeSeriesDataset::slice(Index begin, Index end) const {
  if (begin < 0 || end > rows() || begin >= end) {
    throw std::out_of_range("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") outside dataset of " + std::to_string(rows()) + " rows");
  }
  TimeSeriesDataset out;
  out.inputs = inputs.middleRows(begin, end - begin);
  out.outputs = outputs.middleRows(begin, end - begin);
  out.sample_period = sample_period;
  out.domain_id = domain_id;
  return out;
}

void MemoryBuffer::append(MemoryEntry entry) {
  entries_.push_back(std::move(entry));
  enforce_capacity();
}

void MemoryBuffer::append(const std::vector<MemoryEntry>& entries) {
  entries_.insert(entries_.end(), entries.begin(), entries.end());
  enforce_capacity();
}

std::vector<TdeWindow> MemoryBuffer::windows() const {
  std::vector<TdeWindow> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.window);
  return out;
}

std::size_t MemoryBuffer::count_domain(const std::string& domain_id) const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [&](const MemoryEntry& e) { return e.domain_id == domain_id; }));
}

void MemoryBuffer::enforce_capacity() {
  if (!capacity_) return;
  while (entries_.size() > *capacity_) {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : entries_) ++counts[e.domain_id];
    // Largest domain; lexicographically first label on ties.
    const auto largest = std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
      return a.second < b.second;
    });
    std::size_t victim = entries_.size();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].domain_id != largest->first) continue;
      if (victim == entries_.size() || entries_[i].priority <= entries_[victim].priority) victim = i;
    }
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(victim));
  }
}

namespace {

void column_moments(const Matrix& m, Vector& mean, Vector& stddev, bool& degenerate) {
  const Index n = m.rows();
  mean = m.colwise().mean().transpose();
  stddev.resize(m.cols());
  for (Index c = 0; c < m.cols(); ++c) {
    const double ss = (m.col(c).array() - mean(c)).square().sum();
    const double s = std::sqrt(ss / static_cast<double>(n - 1));
    if (s > 0.0 && std::isfinite(s)) {
      stddev(c) = s;
    } else {
      stddev(c) = 1.0;
      degenerate = true;
    }
  }
}

Matrix standardize(const Matrix& m, const Vector& mean, const Vector& sd) {
  return (m.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

Matrix destandardize(const Matrix& m, const Vector& mean, const Vector& sd) {
  Matrix out = m.array().rowwise() * sd.transpose().array();
  return out.rowwise() + mean.transpose();
}

}  // namespace

Scaler fit_scaler(const TimeSeriesDataset& dataset) {
  if (dataset.rows() < 2) {
    throw std::invalid_argument("fit_scaler needs at least 2 rows, got " +
                                std::to_string(dataset.rows()));
  }
  Scaler s;
  column_moments(dataset.inputs, s.input_mean, s.input_std, s.degenerate_channel);
  column_moments(dataset.outputs, s.output_mean, s.output_std, s.degenerate_channel);
  return s;
}

TimeSeriesDataset Scaler::apply(const TimeSeriesDataset& raw) const {
  TimeSeriesDataset out = raw;
  out.inputs = standardize(raw.inputs, input_mean, input_std);
  out.outputs = standardize(raw.outputs, output_mean, output_std);
  return out;
}

TimeSeriesDataset Scaler::invert(const TimeSeriesDataset& scaled) const {
  TimeSeriesDataset out = scaled;
  out.inputs = destandardize(scaled.inputs, input_mean, input_std);
  out.outputs = destandardize(scaled.outputs, output_mean, output_std);
  return out;
}

Matrix Scaler::apply_outputs(const Matrix& raw) const {
  return standardize(raw, output_mean, output_std);
}

Matrix Scaler::invert_outputs(const Matrix& scaled) const {
  return destandardize(scaled, output_mean, output_std);
}

Vector Scaler::invert_output(const Vector& scaled) const {
  return scaled.cwiseProduct(output_std) + output_mean;
}

TdeWindow tde_window(const TimeSeriesDataset& dataset, Index index, Index order,
                     HistorySource history) {
  const Index n = dataset.rows();
  if (order < 1) throw std::invalid_argument("window order must be >= 1");
  if (index < order || index >= n) {
    throw std::out_of_range("window index " + std::to_string(index) + " outside [" +
                            std::to_string(order) + ", " + std::to_string(n) + ")");
  }
  const Matrix& hist_src = history.predictions ? *history.predictions : dataset.outputs;
  if (hist_src.rows() != n || hist_src.cols() != dataset.output_dim()) {
    throw std::invalid_argument("history source shape does not match dataset outputs");
  }
  TdeWindow w;
  w.input_block = dataset.inputs.middleRows(index - order + 1, order);
  w.decoder_history = hist_src.middleRows(index - order, order);
  w.target = dataset.outputs.row(index).transpose();
  w.origin_index = index;
  return w;
}

std::vector<TdeWindow> all_windows(const TimeSeriesDataset& dataset, Index order) {
  std::vector<TdeWindow> out;
  if (dataset.rows() <= order) return out;
  out.reserve(static_cast<std::size_t>(dataset.rows() - order));
  for (Index i = order; i < dataset.rows(); ++i) out.push_back(tde_window(dataset, i, order));
  return out;
}

double empirical_risk(const Predictor& model, std::span<const TdeWindow> windows) {
  if (windows.empty()) throw std::invalid_argument("empirical_risk on an empty window list");
  double total = 0.0;
  for (const auto& w : windows) {
    if (w.target.size() != model.output_dim()) {
      throw std::invalid_argument("model output dimension " + std::to_string(model.output_dim()) +
                                  " does not match target dimension " +
                                  std::to_string(w.target.size()));
    }
    total += (w.target - model.predict(w)).squaredNorm();
  }
  return total / static_cast<double>(windows.size());
}

}  // namespace emr
