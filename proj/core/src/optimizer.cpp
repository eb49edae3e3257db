// SPDX-License-Identifier: Apache-2.0
#include "emreselect/optimizer.hpp"

#include "emreselect/errors.hpp"
#include "emreselect/json_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace emr::cl {

const char* to_string(ProjectionCase c) {
  switch (c) {
    case ProjectionCase::NoConflict: return "NoConflict";
    case ProjectionCase::ProjectNew: return "ProjectNew";
    case ProjectionCase::ProjectMemory: return "ProjectMemory";
  }
  return "?";
}

const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Batch: return "Batch";
    case StrategyKind::None: return "None";
    case StrategyKind::AGem: return "AGem";
    case StrategyKind::EmReselect: return "EmReselect";
  }
  return "?";
}

StrategyKind strategy_from_string(const std::string& s) {
  if (s == "Batch") return StrategyKind::Batch;
  if (s == "None") return StrategyKind::None;
  if (s == "AGem") return StrategyKind::AGem;
  if (s == "EmReselect") return StrategyKind::EmReselect;
  throw std::invalid_argument("unknown strategy '" + s + "' (expected Batch, None, AGem or EmReselect)");
}

namespace {

ProjectionOutcome measure(const Vector& g_new, const Vector& g_mem) {
  if (g_new.size() != g_mem.size()) {
    throw std::invalid_argument("projection: gradient lengths differ (" + std::to_string(g_new.size()) + " vs " +
                                std::to_string(g_mem.size()) + ")");
  }
  ProjectionOutcome out;
  out.inner_product = g_new.dot(g_mem);
  out.norm_new = g_new.norm();
  out.norm_mem = g_mem.norm();
  return out;
}

}  // namespace

ProjectionOutcome project_agem(const Vector& g_new, const Vector& g_mem) {
  ProjectionOutcome out = measure(g_new, g_mem);
  if (out.inner_product >= 0.0) {
    out.g_tilde = g_new;
    out.kind = ProjectionCase::NoConflict;
    return out;
  }
  out.kind = ProjectionCase::ProjectNew;
  if (out.norm_mem < kZeroNorm) {
    out.g_tilde = g_new;
    return out;
  }
  out.g_tilde = g_new - (out.inner_product / (out.norm_mem * out.norm_mem)) * g_mem;
  return out;
}

ProjectionOutcome project_modified(const Vector& g_new, const Vector& g_mem) {
  ProjectionOutcome out = measure(g_new, g_mem);
  if (out.inner_product >= 0.0 || out.norm_new >= out.norm_mem) return project_agem(g_new, g_mem);
  out.kind = ProjectionCase::ProjectMemory;
  if (out.norm_new < kZeroNorm) {
    out.g_tilde = g_mem;
    return out;
  }
  out.g_tilde = g_mem - (out.inner_product / (out.norm_new * out.norm_new)) * g_new;
  return out;
}

OptimizerState OptimizerState::for_size(Index n, double learning_rate, double beta1, double beta2) {
  OptimizerState s;
  s.first_moment = Vector::Zero(n);
  s.second_moment = Vector::Zero(n);
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  return s;
}

void optimizer_step(Vector& theta, const Vector& gradient, OptimizerState& state) {
  if (theta.size() != gradient.size()) throw std::invalid_argument("optimizer_step: length mismatch");
  if (!gradient.allFinite()) throw NumericError("optimizer_step: non-finite gradient");
  if (state.first_moment.size() != theta.size()) {
    state.first_moment = Vector::Zero(theta.size());
    state.second_moment = Vector::Zero(theta.size());
  }
  ++state.step;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  state.second_moment = state.beta2 * state.second_moment + (1.0 - state.beta2) * gradient.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  theta.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                   ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

void Strategy::validate() const {
  if (kind == StrategyKind::AGem && agem_memory_size < 1) {
    throw std::invalid_argument("AGem memory size must be >= 1");
  }
  if (kind == StrategyKind::EmReselect) selection.validate();
}

nlohmann::json TrainingReport::to_json(bool include_timing) const {
  nlohmann::json epochs_json = nlohmann::json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"new_risk", io::number_to_json(e.new_risk)},
                           {"memory_risk", e.memory_risk ? io::number_to_json(*e.memory_risk) : nlohmann::json()},
                           {"no_conflict", e.no_conflict},
                           {"project_new", e.project_new},
                           {"project_memory", e.project_memory}});
  }
  nlohmann::json j = {
      {"strategy", strategy},
      {"epochs_run", epochs_run()},
      {"epochs", epochs_json},
      {"final_new_risk", final_new_risk ? io::number_to_json(*final_new_risk) : nlohmann::json()},
      {"final_memory_risk", final_memory_risk ? io::number_to_json(*final_memory_risk) : nlohmann::json()},
      {"memory_size_before", memory_size_before},
      {"memory_size_after", memory_size_after},
      {"warnings", warnings},
  };
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (batch_size <= 0 || static_cast<std::size_t>(batch_size) >= n) return {order};
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t at = 0; at < n; at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, at + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<TdeWindow> gather(std::span<const TdeWindow> all, const std::vector<std::size_t>& idx) {
  std::vector<TdeWindow> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

// Shared by train_initial and the Batch strategy.
void minimize(nn::Forecaster& model, std::span<const TdeWindow> windows, const TrainConfig& config,
              TrainingReport& report) {
  if (windows.empty()) throw std::invalid_argument("training needs at least one window");
  OptimizerState state = OptimizerState::for_size(model.parameters().size(), config.learning_rate, config.beta1,
                                                  config.beta2);
  std::mt19937_64 rng(config.seed);
  const bool full_batch = config.batch_size <= 0 || static_cast<std::size_t>(config.batch_size) >= windows.size();
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    EpochRecord rec;
    if (full_batch) {
      const auto lg = model.loss_and_gradient(windows);
      rec.new_risk = lg.risk;
      report.epochs.push_back(rec);
      if (config.stop_mse > 0.0 && lg.risk < config.stop_mse) break;
      optimizer_step(model.parameters().values(), lg.gradient, state);
      continue;
    }
    double total = 0.0;
    for (const auto& batch : epoch_batches(windows.size(), config.batch_size, rng)) {
      const auto sub = gather(windows, batch);
      const auto lg = model.loss_and_gradient(sub);
      total += lg.risk * static_cast<double>(batch.size());
      optimizer_step(model.parameters().values(), lg.gradient, state);
    }
    rec.new_risk = total / static_cast<double>(windows.size());
    report.epochs.push_back(rec);
    if (config.stop_mse > 0.0 && rec.new_risk < config.stop_mse) break;
  }
  report.final_new_risk = empirical_risk(model, windows);
}

std::vector<MemoryEntry> random_entries(const TimeSeriesDataset& dataset, Index order, std::size_t count,
                                        std::uint64_t seed, const std::set<Index>& exclude = {}) {
  std::vector<Index> pool;
  for (Index i = order; i < dataset.rows(); ++i) {
    if (!exclude.contains(i)) pool.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(pool.size(), count));
  std::sort(pool.begin(), pool.end());
  std::vector<MemoryEntry> out;
  for (Index i : pool) out.push_back({tde_window(dataset, i, order), dataset.domain_id, 0.0});
  return out;
}

}  // namespace

TrainingReport train_initial(nn::Forecaster& model, std::span<const TdeWindow> windows, const TrainConfig& config) {
  const auto t0 = Clock::now();
  TrainingReport report;
  report.strategy = "Initial";
  if (config.max_epochs > 0) minimize(model, windows, config, report);
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return report;
}

TrainingReport train_initial(nn::Forecaster& model, const TimeSeriesDataset& dataset, const TrainConfig& config) {
  const auto windows = all_windows(dataset, model.order());
  if (windows.empty()) throw std::invalid_argument("dataset '" + dataset.domain_id + "' yields no windows");
  return train_initial(model, windows, config);
}

std::vector<MemoryEntry> representatives_for(const Strategy& strategy, const TimeSeriesDataset& dataset, Index order,
                                             std::uint64_t seed, sel::SelectionStats* stats) {
  switch (strategy.kind) {
    case StrategyKind::None:
    case StrategyKind::Batch: return {};
    case StrategyKind::AGem: return random_entries(dataset, order, strategy.agem_memory_size, seed);
    case StrategyKind::EmReselect: break;
  }
  auto reps = sel::build_representatives(dataset, strategy.selection, order);
  if (stats) *stats = reps.stats;
  std::vector<MemoryEntry> entries = reps.memory.entries();
  if (!strategy.memory_cap) return entries;
  const std::size_t cap = *strategy.memory_cap;
  if (entries.size() >= cap) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const MemoryEntry& a, const MemoryEntry& b) { return a.priority > b.priority; });
    entries.resize(cap);
    std::sort(entries.begin(), entries.end(), [](const MemoryEntry& a, const MemoryEntry& b) {
      return a.window.origin_index < b.window.origin_index;
    });
    return entries;
  }
  std::set<Index> taken;
  for (const auto& e : entries) taken.insert(e.window.origin_index);
  auto padding = random_entries(dataset, order, cap - entries.size(), seed, taken);
  entries.insert(entries.end(), padding.begin(), padding.end());
  return entries;
}

TrainingReport train_continual(nn::Forecaster& model, const TimeSeriesDataset& new_data, MemoryBuffer& memory,
                               const Strategy& strategy, const TrainConfig& config,
                               std::span<const TimeSeriesDataset> history) {
  strategy.validate();
  const auto t0 = Clock::now();
  TrainingReport report;
  report.strategy = to_string(strategy.kind);
  report.memory_size_before = memory.size();
  const Index order = model.order();
  const auto new_windows = all_windows(new_data, order);
  if (new_windows.empty()) throw std::invalid_argument("new domain '" + new_data.domain_id + "' yields no windows");
  const auto memory_windows = memory.windows();

  if (strategy.kind == StrategyKind::Batch) {
    std::vector<TdeWindow> all;
    for (const auto& d : history) {
      auto w = all_windows(d, order);
      all.insert(all.end(), w.begin(), w.end());
    }
    all.insert(all.end(), new_windows.begin(), new_windows.end());
    if (config.max_epochs > 0) minimize(model, all, config, report);
  } else {
    const bool projected = strategy.kind == StrategyKind::AGem || strategy.kind == StrategyKind::EmReselect;
    if (projected && memory_windows.empty()) {
      report.warnings.push_back("memory is empty; " + report.strategy + " degrades to unprojected steps");
    }
    OptimizerState state = OptimizerState::for_size(model.parameters().size(), config.learning_rate, config.beta1,
                                                    config.beta2);
    std::mt19937_64 rng(config.seed);
    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
      EpochRecord rec;
      double total = 0.0;
      bool mem_recorded = false;
      for (const auto& batch : epoch_batches(new_windows.size(), config.batch_size, rng)) {
        const auto sub = batch.size() == new_windows.size() ? new_windows : gather(new_windows, batch);
        const auto lg_new = model.loss_and_gradient(sub);
        total += lg_new.risk * static_cast<double>(batch.size());
        Vector step = lg_new.gradient;
        if (!memory_windows.empty()) {
          const auto lg_mem = model.loss_and_gradient(memory_windows);
          if (!mem_recorded) {
            rec.memory_risk = lg_mem.risk;
            mem_recorded = true;
          }
          if (projected) {
            const auto outcome = strategy.kind == StrategyKind::AGem ? project_agem(lg_new.gradient, lg_mem.gradient)
                                                                     : project_modified(lg_new.gradient, lg_mem.gradient);
            switch (outcome.kind) {
              case ProjectionCase::NoConflict: ++rec.no_conflict; break;
              case ProjectionCase::ProjectNew: ++rec.project_new; break;
              case ProjectionCase::ProjectMemory: ++rec.project_memory; break;
            }
            step = outcome.g_tilde;
          }
        }
        optimizer_step(model.parameters().values(), step, state);
      }
      rec.new_risk = total / static_cast<double>(new_windows.size());
      report.epochs.push_back(rec);
    }
    report.final_new_risk = empirical_risk(model, new_windows);
  }
  if (!memory_windows.empty()) report.final_memory_risk = empirical_risk(model, memory_windows);

  memory.append(representatives_for(strategy, new_data, order, config.seed));
  report.memory_size_after = memory.size();
  report.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return report;
}

Vector rollout_mae(const nn::Forecaster& model, const TimeSeriesDataset& scaled, const Scaler& scaler) {
  const Index start = model.order();
  const Index steps = scaled.rows() - start;
  const Matrix pred = rollout(model, scaled, start, steps);
  return nn::mae_per_output(scaler.invert_outputs(pred), scaler.invert_outputs(scaled.outputs.bottomRows(steps)));
}

std::vector<ForgettingRow> forgetting_metrics(const nn::Forecaster& before, const nn::Forecaster& after,
                                              std::span<const EvalSet> eval_sets, const Scaler& scaler) {
  std::vector<ForgettingRow> rows;
  for (const auto& set : eval_sets) {
    ForgettingRow r;
    r.name = set.name;
    r.mae_before = rollout_mae(before, *set.data, scaler);
    r.mae_after = rollout_mae(after, *set.data, scaler);
    r.forgetting = r.mae_after - r.mae_before;
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace emr::cl
