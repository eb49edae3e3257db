// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/core.hpp"
#include "emreselect/forecaster.hpp"
#include "emreselect/selection.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emr::cl {

enum class ProjectionCase { NoConflict, ProjectNew, ProjectMemory };

[[nodiscard]] const char* to_string(ProjectionCase c);

struct ProjectionOutcome {
  Vector g_tilde;
  ProjectionCase kind = ProjectionCase::NoConflict;
  double inner_product = 0.0;
  double norm_new = 0.0;
  double norm_mem = 0.0;
};

/// Divisor norms below this make a conflict direction meaningless; the other
/// gradient is returned unchanged.
inline constexpr double kZeroNorm = 1e-12;

/// A-GEM: project g_new onto the half-space <g, g_mem> >= 0 when they conflict.
[[nodiscard]] ProjectionOutcome project_agem(const Vector& g_new, const Vector& g_mem);

/// Two-case projection. On conflict with |g_new| >= |g_mem| this is
/// project_agem; otherwise the memory gradient is projected against g_new:
///   g~ = g_mem - <g_new, g_mem> / |g_new|^2 * g_new.
[[nodiscard]] ProjectionOutcome project_modified(const Vector& g_new, const Vector& g_mem);

/// Bias-corrected adaptive-moment state. beta1 decays the first moment.
struct OptimizerState {
  Vector first_moment;
  Vector second_moment;
  std::int64_t step = 0;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;

  static OptimizerState for_size(Index n, double learning_rate, double beta1 = 0.9, double beta2 = 0.95);
};

/// theta -= lr * m_hat / (sqrt(v_hat) + eps). Throws NumericError (leaving
/// theta and state untouched) on a non-finite gradient.
void optimizer_step(Vector& theta, const Vector& gradient, OptimizerState& state);

struct TrainConfig {
  double learning_rate = 0.01;
  int max_epochs = 1000;
  /// Stop once the epoch's training risk falls below this; <= 0 disables.
  double stop_mse = 1e-3;
  /// 0 = one full-batch step per epoch.
  int batch_size = 0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  std::uint64_t seed = 0;
};

enum class StrategyKind { Batch, None, AGem, EmReselect };

[[nodiscard]] const char* to_string(StrategyKind k);
[[nodiscard]] StrategyKind strategy_from_string(const std::string& s);

struct Strategy {
  StrategyKind kind = StrategyKind::EmReselect;
  /// Windows sampled uniformly per finished domain under AGem.
  std::size_t agem_memory_size = 150;
  sel::SelectionConfig selection;
  /// EmReselect only: keep the top-GLR representatives up to this count and
  /// pad with uniformly sampled windows when fewer were selected.
  std::optional<std::size_t> memory_cap;

  void validate() const;
};

struct EpochRecord {
  double new_risk = 0.0;
  std::optional<double> memory_risk;
  std::size_t no_conflict = 0;
  std::size_t project_new = 0;
  std::size_t project_memory = 0;
};

struct TrainingReport {
  std::string strategy;
  std::vector<EpochRecord> epochs;
  std::optional<double> final_new_risk;
  std::optional<double> final_memory_risk;
  std::size_t memory_size_before = 0;
  std::size_t memory_size_after = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t epochs_run() const { return epochs.size(); }
  /// Wall-clock time is excluded unless requested, keeping output reproducible.
  [[nodiscard]] nlohmann::json to_json(bool include_timing = false) const;
};

/// Plain adaptive-moment minimization of the empirical risk.
TrainingReport train_initial(nn::Forecaster& model, std::span<const TdeWindow> windows, const TrainConfig& config);
TrainingReport train_initial(nn::Forecaster& model, const TimeSeriesDataset& dataset, const TrainConfig& config);

/// Representatives a strategy stores for a finished domain.
[[nodiscard]] std::vector<MemoryEntry> representatives_for(const Strategy& strategy, const TimeSeriesDataset& dataset,
                                                         Index order, std::uint64_t seed,
                                                         sel::SelectionStats* stats = nullptr);

/// Adapts `model` to `new_data`. `history` holds the earlier domains and
/// is only read by Batch. After training, AGem and EmReselect append the new
/// domain's representatives to `memory`.
TrainingReport train_continual(nn::Forecaster& model, const TimeSeriesDataset& new_data, MemoryBuffer& memory,
                               const Strategy& strategy, const TrainConfig& config,
                               std::span<const TimeSeriesDataset> history = {});

struct EvalSet {
  std::string name;
  const TimeSeriesDataset* data = nullptr;  // standardized with `scaler`
};

/// Free-running rollout MAE over rows [order, n), in physical units.
[[nodiscard]] Vector rollout_mae(const nn::Forecaster& model, const TimeSeriesDataset& scaled, const Scaler& scaler);

struct ForgettingRow {
  std::string name;
  Vector mae_before;
  Vector mae_after;
  Vector forgetting;  // after - before
};

[[nodiscard]] std::vector<ForgettingRow> forgetting_metrics(const nn::Forecaster& before, const nn::Forecaster& after,
                                                            std::span<const EvalSet> eval_sets, const Scaler& scaler);

}  // namespace emr::cl
