// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/conformal.hpp"
#include "emreselect/data.hpp"
#include "emreselect/optimizer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace emr::scenario {

/// Reads typed fields from a JSON object and reports failures as ParseError
/// carrying the dotted field path. Unknown keys are rejected by finish().
class FieldReader {
 public:
  FieldReader(const nlohmann::json& object, std::string path);

  [[nodiscard]] bool has(const std::string& key) const;
  [[nodiscard]] double number(const std::string& key, std::optional<double> fallback = std::nullopt);
  [[nodiscard]] std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt);
  [[nodiscard]] std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt);
  [[nodiscard]] bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt);
  [[nodiscard]] std::optional<double> optional_number(const std::string& key);
  [[nodiscard]] std::optional<std::int64_t> optional_integer(const std::string& key);
  [[nodiscard]] std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt);
  [[nodiscard]] std::vector<std::string> strings(const std::string& key,
                                                 std::optional<std::vector<std::string>> fallback = std::nullopt);
  /// Raw sub-value; null when absent.
  [[nodiscard]] const nlohmann::json& raw(const std::string& key);
  [[nodiscard]] FieldReader object(const std::string& key);
  [[nodiscard]] std::string path_of(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& message) const;
  void finish() const;

 private:
  const nlohmann::json* object_;
  std::string path_;
  std::vector<std::string> used_;
};

/// Shared sub-config readers; each calls finish() on its reader.
[[nodiscard]] cl::TrainConfig train_config_from(FieldReader reader, const cl::TrainConfig& defaults = {});
[[nodiscard]] sel::SelectionConfig selection_config_from(FieldReader reader);
[[nodiscard]] nlohmann::json train_config_to_json(const cl::TrainConfig& c);
[[nodiscard]] nlohmann::json selection_config_to_json(const sel::SelectionConfig& c);
[[nodiscard]] nlohmann::json selection_stats_to_json(const sel::SelectionStats& s);
[[nodiscard]] nlohmann::json interval_report_to_json(const conformal::IntervalReport& r);

struct SyntheticSource {
  data::DomainShiftSpec stream;  // samples = train + test per domain
  std::vector<Index> train_samples;
  std::vector<Index> test_samples;
};

struct CsvDomain {
  std::filesystem::path train;
  std::filesystem::path test;
};

struct CsvSource {
  data::CsvSchema schema;
  std::vector<CsvDomain> domains;
};

struct ScenarioConfig {
  std::optional<SyntheticSource> synthetic;
  std::optional<CsvSource> csv;
  nlohmann::json model = {{"type", "mlp"}, {"window", 8}, {"hidden", {32, 32}}};
  std::vector<cl::StrategyKind> strategies{cl::StrategyKind::None, cl::StrategyKind::AGem,
                                           cl::StrategyKind::EmReselect, cl::StrategyKind::Batch};
  sel::SelectionConfig selection;
  /// Empty: AGem stores as many windows as EmReselect selected.
  std::optional<std::size_t> agem_memory_size;
  std::optional<std::size_t> memory_cap;
  cl::TrainConfig initial;
  cl::TrainConfig continual;
  double alpha = 0.1;
  std::filesystem::path output_dir = "runs";
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Canonical form; stable key order, used for the run hash.
  [[nodiscard]] nlohmann::json to_json() const;
  /// 16 hex digits of a 64-bit FNV-1a hash of to_json().dump().
  [[nodiscard]] std::string hash() const;
};

/// Parses and validates; errors are ParseError / std::invalid_argument with
/// the field path. Relative CSV paths resolve against `base_dir`.
[[nodiscard]] ScenarioConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
[[nodiscard]] ScenarioConfig load_config(const std::filesystem::path& path);

/// The scenario's standard two-domain synthetic stream: q = 2, p = 4,
/// 2000 + 400 rows for D1 and 400 + 400 for D2, D2 with halved input gain.
[[nodiscard]] ScenarioConfig standard_config(std::uint64_t seed = 0);

/// Raw per-domain train/test datasets.
struct DomainData {
  TimeSeriesDataset train;
  TimeSeriesDataset test;
};

[[nodiscard]] std::vector<DomainData> load_domains(const ScenarioConfig& config);

/// Domains standardized with a scaler fitted on D1 train.
struct PreparedData {
  std::vector<TimeSeriesDataset> train;
  std::vector<TimeSeriesDataset> test;
  Scaler scaler;
};

[[nodiscard]] PreparedData prepare_data(const ScenarioConfig& config);

/// Evaluation sets in reporting order: D1-train, then every test split.
[[nodiscard]] std::vector<cl::EvalSet> eval_sets(const PreparedData& data);

/// Phase 1: a freshly initialized model trained on D1.
[[nodiscard]] std::unique_ptr<nn::Forecaster> train_phase1(const ScenarioConfig& config, const PreparedData& data,
                                                           cl::TrainingReport* report = nullptr);

struct StrategyRun {
  cl::StrategyKind kind = cl::StrategyKind::None;
  std::vector<cl::TrainingReport> reports;  // one per new domain
  std::vector<cl::ForgettingRow> forgetting;
  std::vector<sel::SelectionStats> selection;  // EmReselect only, one per domain
  std::size_t memory_size = 0;
  std::vector<conformal::IntervalReport> intervals;  // per domain test split
  std::vector<double> quantiles;
  bool unbounded_quantile = false;
  std::unique_ptr<nn::Forecaster> model;
};

/// Phase 2 for one strategy, starting from a copy of `initial`. With
/// `memory_from`, the D1 memory is the one that strategy would store, so e.g.
/// None can be trained while its memory risk is tracked on EmReselect's memory.
[[nodiscard]] StrategyRun run_strategy(const ScenarioConfig& config, const PreparedData& data,
                                       const nn::Forecaster& initial, cl::StrategyKind kind,
                                       std::optional<cl::StrategyKind> memory_from = std::nullopt);

struct ScenarioResult {
  std::string hash;
  Scaler scaler;
  cl::TrainingReport initial;
  /// Initial model on every evaluation set.
  std::vector<std::pair<std::string, Vector>> initial_mae;
  sel::SelectionStats d1_selection;
  std::vector<StrategyRun> runs;

  [[nodiscard]] const StrategyRun& run(cl::StrategyKind kind) const;
  /// Deterministic summary: excludes wall-clock time.
  [[nodiscard]] nlohmann::json metrics_json() const;
  [[nodiscard]] nlohmann::json timing_json() const;
  /// strategy,domain,epoch,new_risk,memory_risk,no_conflict,project_new,project_memory
  [[nodiscard]] std::string epochs_csv() const;
  /// strategy,eval_set,output,mae_initial,mae_final,forgetting
  [[nodiscard]] std::string mae_csv() const;
};

/// Phase 1 on D1, then Phase 2 for each strategy from the same initial model.
[[nodiscard]] ScenarioResult run_scenario(const ScenarioConfig& config);

/// Writes metrics.json, timing.json, epochs.csv and mae.csv into
/// <output_dir>/<hash>/ and returns that directory.
std::filesystem::path write_outputs(const ScenarioConfig& config, const ScenarioResult& result);

struct SweepRow {
  std::size_t memory_size = 0;
  conformal::IntervalReport old_domain;
  conformal::IntervalReport new_domain;
  std::vector<double> quantiles;
};

/// EmReselect capped at each size (size 0 trains without memory), calibrated
/// on half of the pooled old and new test windows and evaluated on the rest.
[[nodiscard]] std::vector<SweepRow> memory_sweep(const ScenarioConfig& config, const std::vector<std::size_t>& sizes);

/// memory_size,output_dim,coverage,width,domain
[[nodiscard]] std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace emr::scenario
