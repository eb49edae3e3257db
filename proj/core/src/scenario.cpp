// SPDX-License-Identifier: Apache-2.0
#include "emreselect/scenario.hpp"

#include "emreselect/errors.hpp"
#include "emreselect/json_io.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace emr::scenario {

using nlohmann::json;

FieldReader::FieldReader(const json& object, std::string path) : object_(&object), path_(std::move(path)) {
  if (!object.is_object()) throw ParseError("config field '" + (path_.empty() ? "<root>" : path_) + "': expected an object");
}

std::string FieldReader::path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

void FieldReader::fail(const std::string& key, const std::string& message) const {
  throw ParseError("config field '" + path_of(key) + "': " + message);
}

bool FieldReader::has(const std::string& key) const { return object_->contains(key) && !object_->at(key).is_null(); }

const json& FieldReader::raw(const std::string& key) {
  static const json null_value;
  used_.push_back(key);
  return object_->contains(key) ? object_->at(key) : null_value;
}

double FieldReader::number(const std::string& key, std::optional<double> fallback) {
  const json& v = raw(key);
  if (v.is_null()) {
    if (!fallback) fail(key, "required number is missing");
    return *fallback;
  }
  if (!v.is_number()) fail(key, "expected a number");
  return v.get<double>();
}

std::int64_t FieldReader::integer(const std::string& key, std::optional<std::int64_t> fallback) {
  const json& v = raw(key);
  if (v.is_null()) {
    if (!fallback) fail(key, "required integer is missing");
    return *fallback;
  }
  if (!v.is_number_integer()) fail(key, "expected an integer");
  return v.get<std::int64_t>();
}

std::string FieldReader::string(const std::string& key, std::optional<std::string> fallback) {
  const json& v = raw(key);
  if (v.is_null()) {
    if (!fallback) fail(key, "required string is missing");
    return *fallback;
  }
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

bool FieldReader::boolean(const std::string& key, std::optional<bool> fallback) {
  const json& v = raw(key);
  if (v.is_null()) {
    if (!fallback) fail(key, "required boolean is missing");
    return *fallback;
  }
  if (!v.is_boolean()) fail(key, "expected true or false");
  return v.get<bool>();
}

std::optional<double> FieldReader::optional_number(const std::string& key) {
  if (!has(key)) {
    used_.push_back(key);
    return std::nullopt;
  }
  return number(key);
}

std::optional<std::int64_t> FieldReader::optional_integer(const std::string& key) {
  if (!has(key)) {
    used_.push_back(key);
    return std::nullopt;
  }
  return integer(key);
}

std::vector<double> FieldReader::numbers(const std::string& key, std::optional<std::vector<double>> fallback) {
  const json& v = raw(key);
  if (v.is_null()) {
    if (!fallback) fail(key, "required list of numbers is missing");
    return *fallback;
  }
  if (!v.is_array()) fail(key, "expected a list of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) fail(key + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::vector<std::string> FieldReader::strings(const std::string& key, std::optional<std::vector<std::string>> fallback) {
  const json& v = raw(key);
  if (v.is_null()) {
    if (!fallback) fail(key, "required list of strings is missing");
    return *fallback;
  }
  if (!v.is_array()) fail(key, "expected a list of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) fail(key + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

FieldReader FieldReader::object(const std::string& key) {
  static const json empty = json::object();
  const json& v = raw(key);
  if (v.is_null()) return FieldReader(empty, path_of(key));
  if (!v.is_object()) fail(key, "expected an object");
  return FieldReader(v, path_of(key));
}

void FieldReader::finish() const {
  for (const auto& [key, value] : object_->items()) {
    if (std::find(used_.begin(), used_.end(), key) == used_.end()) fail(key, "unknown field");
  }
}

namespace {

std::size_t non_negative(FieldReader& r, const std::string& key, std::int64_t v) {
  if (v < 0) r.fail(key, "must be >= 0");
  return static_cast<std::size_t>(v);
}

template <typename Fn>
void rethrow_with_path(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config field '" + path + "': " + e.what());
  }
}

}  // namespace

cl::TrainConfig train_config_from(FieldReader r, const cl::TrainConfig& defaults) {
  cl::TrainConfig c = defaults;
  c.learning_rate = r.number("learning_rate", c.learning_rate);
  c.max_epochs = static_cast<int>(r.integer("max_epochs", c.max_epochs));
  c.stop_mse = r.number("stop_mse", c.stop_mse);
  c.batch_size = static_cast<int>(r.integer("batch_size", c.batch_size));
  c.beta1 = r.number("beta1", c.beta1);
  c.beta2 = r.number("beta2", c.beta2);
  if (!(c.learning_rate > 0.0)) r.fail("learning_rate", "must be > 0");
  if (c.max_epochs < 0) r.fail("max_epochs", "must be >= 0");
  if (c.batch_size < 0) r.fail("batch_size", "must be >= 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0)) r.fail("beta1", "must lie in [0, 1)");
  if (!(c.beta2 >= 0.0 && c.beta2 < 1.0)) r.fail("beta2", "must lie in [0, 1)");
  r.finish();
  return c;
}

sel::SelectionConfig selection_config_from(FieldReader r) {
  sel::SelectionConfig c;
  c.d_multi = static_cast<int>(r.integer("d_multi", c.d_multi));
  c.glr_diff_threshold = r.number("glr_diff_threshold", c.glr_diff_threshold);
  c.not_config.num_intervals = static_cast<int>(r.integer("num_intervals", c.not_config.num_intervals));
  c.not_config.threshold = r.optional_number("threshold");
  c.not_config.min_segment_length = static_cast<int>(r.integer("min_segment_length", c.not_config.min_segment_length));
  r.finish();
  rethrow_with_path(r.path_of("d_multi"), [&] { c.validate(); });
  return c;
}

json train_config_to_json(const cl::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"max_epochs", c.max_epochs}, {"stop_mse", c.stop_mse},
          {"batch_size", c.batch_size},       {"beta1", c.beta1},           {"beta2", c.beta2}};
}

json selection_config_to_json(const sel::SelectionConfig& c) {
  return {{"d_multi", c.d_multi},
          {"glr_diff_threshold", c.glr_diff_threshold},
          {"num_intervals", c.not_config.num_intervals},
          {"threshold", c.not_config.threshold ? json(*c.not_config.threshold) : json()},
          {"min_segment_length", c.not_config.min_segment_length}};
}

json selection_stats_to_json(const sel::SelectionStats& s) {
  return {{"per_dimension", s.per_dimension},
          {"concatenated", s.concatenated},
          {"filtered", s.filtered},
          {"dropped_short_history", s.dropped_short_history}};
}

json interval_report_to_json(const conformal::IntervalReport& r) {
  return {{"coverage", io::vector_to_json(r.coverage)}, {"mean_width", io::vector_to_json(r.mean_width)},
          {"n_test", r.n_test}};
}

void ScenarioConfig::validate() const {
  if (synthetic.has_value() == csv.has_value()) {
    throw std::invalid_argument("config field 'data': exactly one of 'synthetic' or 'csv' is required");
  }
  if (strategies.empty()) throw std::invalid_argument("config field 'strategies': at least one strategy is required");
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (strategies[i] == strategies[k]) {
        throw std::invalid_argument(std::string("config field 'strategies': ") + cl::to_string(strategies[i]) +
                                    " listed twice");
      }
    }
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("config field 'alpha': must lie in (0, 1)");
  if (agem_memory_size && *agem_memory_size == 0) {
    throw std::invalid_argument("config field 'agem_memory_size': must be >= 1");
  }
  if (synthetic) {
    rethrow_with_path("data.synthetic", [&] { synthetic->stream.validate(); });
    const auto k = synthetic->stream.domains.size();
    if (synthetic->train_samples.size() != k || synthetic->test_samples.size() != k) {
      throw std::invalid_argument("config field 'data.synthetic': train_samples and test_samples need one entry per domain");
    }
  }
  if (csv) {
    rethrow_with_path("data.csv", [&] { csv->schema.validate(); });
    if (csv->domains.size() < 2) throw std::invalid_argument("config field 'data.csv.domains': need at least two domains");
    for (std::size_t i = 0; i < csv->domains.size(); ++i) {
      for (const auto& [name, path] : {std::pair{"train", csv->domains[i].train}, std::pair{"test", csv->domains[i].test}}) {
        if (!std::filesystem::exists(path)) {
          throw std::invalid_argument("config field 'data.csv.domains[" + std::to_string(i) + "]." + name + "': file '" +
                                      path.string() + "' does not exist");
        }
      }
    }
  }
  rethrow_with_path("model", [&] { (void)nn::make_forecaster(model, 1, 1, 0); });
}

json ScenarioConfig::to_json() const {
  json data;
  if (synthetic) {
    const auto& st = synthetic->stream;
    json domains = json::array();
    for (const auto& d : st.domains) {
      domains.push_back({{"output_gain", d.output_gain},
                         {"dynamics_delta", d.dynamics_delta},
                         {"input_offset", io::vector_to_json(d.input_offset)}});
    }
    data["synthetic"] = {{"input_dim", st.input_dim},
                         {"output_dim", st.output_dim},
                         {"noise", st.noise},
                         {"maneuver_period", st.maneuver_period},
                         {"ramp_fraction", st.ramp_fraction},
                         {"spectral_radius", st.spectral_radius},
                         {"domains", domains},
                         {"train_samples", synthetic->train_samples},
                         {"test_samples", synthetic->test_samples}};
  }
  if (csv) {
    json domains = json::array();
    for (const auto& d : csv->domains) domains.push_back({{"train", d.train.string()}, {"test", d.test.string()}});
    data["csv"] = {{"inputs", csv->schema.input_columns},
                   {"outputs", csv->schema.output_columns},
                   {"sample_period", csv->schema.sample_period},
                   {"delimiter", std::string(1, csv->schema.delimiter)},
                   {"domains", domains}};
  }
  json names = json::array();
  for (auto s : strategies) names.push_back(cl::to_string(s));
  return {{"seed", seed},
          {"data", data},
          {"model", model},
          {"strategies", names},
          {"selection", selection_config_to_json(selection)},
          {"agem_memory_size", agem_memory_size ? json(*agem_memory_size) : json()},
          {"memory_cap", memory_cap ? json(*memory_cap) : json()},
          {"initial", train_config_to_json(initial)},
          {"continual", train_config_to_json(continual)},
          {"alpha", alpha},
          {"output_dir", output_dir.string()}};
}

std::string ScenarioConfig::hash() const {
  json j = to_json();
  // Where results go does not change what they are.
  j.erase("output_dir");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

cl::TrainConfig continual_defaults() {
  cl::TrainConfig c;
  c.learning_rate = 0.001;
  return c;
}

std::vector<Index> index_list(FieldReader& r, const std::string& key) {
  std::vector<Index> out;
  for (double v : r.numbers(key)) {
    if (v != std::floor(v) || v < 1) r.fail(key, "entries must be positive integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

SyntheticSource synthetic_from(FieldReader r) {
  SyntheticSource s;
  auto& st = s.stream;
  st.input_dim = r.integer("input_dim", st.input_dim);
  st.output_dim = r.integer("output_dim", st.output_dim);
  st.noise = r.number("noise", st.noise);
  st.maneuver_period = r.number("maneuver_period", st.maneuver_period);
  st.ramp_fraction = r.number("ramp_fraction", st.ramp_fraction);
  st.spectral_radius = r.number("spectral_radius", st.spectral_radius);
  const json& domains = r.raw("domains");
  if (!domains.is_array()) r.fail("domains", "expected a list of domain objects");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    FieldReader d(domains[i], r.path_of("domains[" + std::to_string(i) + "]"));
    data::DomainShift shift;
    shift.output_gain = d.number("output_gain", 1.0);
    shift.dynamics_delta = d.number("dynamics_delta", 0.0);
    const auto offset = d.numbers("input_offset", std::vector<double>{});
    shift.input_offset = Eigen::Map<const Vector>(offset.data(), static_cast<Index>(offset.size()));
    d.finish();
    st.domains.push_back(shift);
  }
  s.train_samples = index_list(r, "train_samples");
  s.test_samples = index_list(r, "test_samples");
  r.finish();
  for (std::size_t k = 0; k < std::min(s.train_samples.size(), s.test_samples.size()); ++k) {
    st.samples.push_back(s.train_samples[k] + s.test_samples[k]);
  }
  return s;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

CsvSource csv_from(FieldReader r, const std::filesystem::path& base_dir) {
  CsvSource s;
  s.schema.input_columns = r.strings("inputs");
  s.schema.output_columns = r.strings("outputs");
  s.schema.sample_period = r.number("sample_period", 1.0);
  const std::string delim = r.string("delimiter", ",");
  if (delim.size() != 1) r.fail("delimiter", "must be a single character");
  s.schema.delimiter = delim[0];
  const json& domains = r.raw("domains");
  if (!domains.is_array()) r.fail("domains", "expected a list of {train, test} objects");
  for (std::size_t i = 0; i < domains.size(); ++i) {
    FieldReader d(domains[i], r.path_of("domains[" + std::to_string(i) + "]"));
    s.domains.push_back({resolve(base_dir, d.string("train")), resolve(base_dir, d.string("test"))});
    d.finish();
  }
  r.finish();
  return s;
}

}  // namespace

ScenarioConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  FieldReader r(j, "");
  ScenarioConfig c;
  const std::int64_t seed = r.integer("seed");
  if (seed < 0) r.fail("seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  {
    FieldReader d = r.object("data");
    if (d.has("synthetic")) c.synthetic = synthetic_from(d.object("synthetic"));
    if (d.has("csv")) c.csv = csv_from(d.object("csv"), base_dir);
    d.finish();
  }
  if (c.synthetic) c.synthetic->stream.seed = c.seed;
  if (r.has("model")) {
    c.model = r.raw("model");
    if (!c.model.is_object()) r.fail("model", "expected an object");
  } else {
    (void)r.raw("model");
  }
  if (r.has("strategies")) {
    c.strategies.clear();
    const auto names = r.strings("strategies");
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        c.strategies.push_back(cl::strategy_from_string(names[i]));
      } catch (const std::invalid_argument& e) {
        r.fail("strategies[" + std::to_string(i) + "]", e.what());
      }
    }
  } else {
    (void)r.raw("strategies");
  }
  c.selection = selection_config_from(r.object("selection"));
  if (auto v = r.optional_integer("agem_memory_size")) c.agem_memory_size = non_negative(r, "agem_memory_size", *v);
  if (auto v = r.optional_integer("memory_cap")) c.memory_cap = non_negative(r, "memory_cap", *v);
  c.initial = train_config_from(r.object("initial"));
  c.continual = train_config_from(r.object("continual"), continual_defaults());
  c.alpha = r.number("alpha", c.alpha);
  c.output_dir = r.string("output_dir", "runs");
  r.finish();
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open config");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

ScenarioConfig standard_config(std::uint64_t seed) {
  ScenarioConfig c;
  SyntheticSource s;
  s.stream.input_dim = 4;
  s.stream.output_dim = 2;
  s.stream.noise = 0.02;
  s.stream.seed = seed;
  data::DomainShift shifted;
  shifted.output_gain = 0.5;
  shifted.input_offset = Vector::Constant(4, 1.5);
  s.stream.maneuver_period = 30.0;
  s.stream.domains = {data::DomainShift{}, shifted};
  s.train_samples = {2000, 400};
  s.test_samples = {400, 400};
  s.stream.samples = {2400, 800};
  c.synthetic = s;
  c.seed = seed;
  c.initial.max_epochs = 1000;
  c.continual = continual_defaults();
  c.continual.max_epochs = 1000;
  c.continual.stop_mse = 0.0;
  return c;
}

std::vector<DomainData> load_domains(const ScenarioConfig& config) {
  std::vector<DomainData> out;
  if (config.synthetic) {
    const auto stream = data::generate_domain_stream(config.synthetic->stream);
    for (std::size_t k = 0; k < stream.size(); ++k) {
      const Index n_train = config.synthetic->train_samples[k];
      DomainData d{stream[k].slice(0, n_train), stream[k].slice(n_train, stream[k].rows())};
      out.push_back(std::move(d));
    }
    return out;
  }
  for (std::size_t k = 0; k < config.csv->domains.size(); ++k) {
    const std::string id = "D" + std::to_string(k + 1);
    out.push_back({data::load_csv(config.csv->domains[k].train, config.csv->schema, id),
                   data::load_csv(config.csv->domains[k].test, config.csv->schema, id)});
  }
  return out;
}

const StrategyRun& ScenarioResult::run(cl::StrategyKind kind) const {
  for (const auto& r : runs) {
    if (r.kind == kind) return r;
  }
  throw std::out_of_range(std::string("scenario did not run strategy ") + cl::to_string(kind));
}

PreparedData prepare_data(const ScenarioConfig& config) {
  const auto domains = load_domains(config);
  PreparedData p;
  p.scaler = fit_scaler(domains.front().train);
  for (const auto& d : domains) {
    p.train.push_back(p.scaler.apply(d.train));
    p.test.push_back(p.scaler.apply(d.test));
  }
  return p;
}

std::vector<cl::EvalSet> eval_sets(const PreparedData& p) {
  std::vector<cl::EvalSet> sets{{"D1-train", &p.train.front()}};
  for (std::size_t k = 0; k < p.test.size(); ++k) sets.push_back({"D" + std::to_string(k + 1) + "-test", &p.test[k]});
  return sets;
}

namespace {

std::uint64_t child_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  std::uint64_t out = 0;
  seq.generate(&out, &out + 1);
  return out;
}

cl::TrainConfig seeded(cl::TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

sel::SelectionConfig scenario_selection(const ScenarioConfig& config) {
  sel::SelectionConfig c = config.selection;
  c.not_config.rng_seed = child_seed(config.seed, 3);
  return c;
}

std::uint64_t memory_seed(const ScenarioConfig& config) { return child_seed(config.seed, 4); }

/// Pooled test windows, tagged by domain, split into calibration and test halves.
struct ConformalSplit {
  std::vector<TdeWindow> calibration;
  std::vector<std::vector<TdeWindow>> test;  // per domain
};

ConformalSplit conformal_split(const PreparedData& p, Index order, std::uint64_t seed) {
  std::vector<std::pair<std::size_t, TdeWindow>> pool;
  for (std::size_t k = 0; k < p.test.size(); ++k) {
    for (auto& w : all_windows(p.test[k], order)) pool.emplace_back(k, std::move(w));
  }
  std::vector<std::size_t> order_idx(pool.size());
  std::iota(order_idx.begin(), order_idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order_idx.begin(), order_idx.end(), rng);
  const std::size_t half = pool.size() / 2;
  std::vector<bool> in_cal(pool.size(), false);
  for (std::size_t i = 0; i < half; ++i) in_cal[order_idx[i]] = true;
  ConformalSplit out;
  out.test.resize(p.test.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (in_cal[i]) {
      out.calibration.push_back(pool[i].second);
    } else {
      out.test[pool[i].first].push_back(pool[i].second);
    }
  }
  return out;
}

cl::Strategy make_strategy(cl::StrategyKind kind, const ScenarioConfig& config, const PreparedData& p, Index order,
                           sel::SelectionStats* d1_stats = nullptr) {
  cl::Strategy s;
  s.kind = kind;
  s.selection = scenario_selection(config);
  s.memory_cap = config.memory_cap;
  if (config.agem_memory_size) {
    s.agem_memory_size = *config.agem_memory_size;
    if (d1_stats) {
      cl::Strategy em = s;
      em.kind = cl::StrategyKind::EmReselect;
      (void)cl::representatives_for(em, p.train.front(), order, memory_seed(config), d1_stats);
    }
  } else {
    // Equal budget: as many windows as EmReselect keeps for D1.
    cl::Strategy em = s;
    em.kind = cl::StrategyKind::EmReselect;
    const auto entries = cl::representatives_for(em, p.train.front(), order, memory_seed(config), d1_stats);
    s.agem_memory_size = std::max<std::size_t>(1, entries.size());
  }
  return s;
}

}  // namespace

std::unique_ptr<nn::Forecaster> train_phase1(const ScenarioConfig& config, const PreparedData& p,
                                             cl::TrainingReport* report) {
  const auto& d1 = p.train.front();
  auto model = nn::make_forecaster(config.model, d1.input_dim(), d1.output_dim(), child_seed(config.seed, 1));
  auto rep = cl::train_initial(*model, d1, seeded(config.initial, child_seed(config.seed, 2)));
  if (report) *report = std::move(rep);
  return model;
}

StrategyRun run_strategy(const ScenarioConfig& config, const PreparedData& p, const nn::Forecaster& initial,
                         cl::StrategyKind kind, std::optional<cl::StrategyKind> memory_from) {
  const Index order = initial.order();
  const cl::Strategy strategy = make_strategy(kind, config, p, order);
  const cl::Strategy memory_strategy = memory_from ? make_strategy(*memory_from, config, p, order) : strategy;
  StrategyRun run;
  run.kind = kind;
  run.model = initial.clone();
  MemoryBuffer memory;
  memory.append(cl::representatives_for(memory_strategy, p.train.front(), order, memory_seed(config)));
  for (std::size_t k = 1; k < p.train.size(); ++k) {
    const std::span<const TimeSeriesDataset> history(p.train.data(), k);
    const auto train_cfg = seeded(config.continual, child_seed(config.seed, 10 + k));
    run.reports.push_back(cl::train_continual(*run.model, p.train[k], memory, strategy, train_cfg, history));
    if (kind == cl::StrategyKind::EmReselect) {
      sel::SelectionStats stats;
      (void)cl::representatives_for(strategy, p.train[k], order, train_cfg.seed, &stats);
      run.selection.push_back(stats);
    }
  }
  run.memory_size = memory.size();
  run.forgetting = cl::forgetting_metrics(initial, *run.model, eval_sets(p), p.scaler);
  const ConformalSplit split = conformal_split(p, order, child_seed(config.seed, 5));
  const auto cal = conformal::ConformalCalibrator::calibrate(*run.model, split.calibration, config.alpha, &p.scaler);
  run.quantiles = cal.quantiles();
  run.unbounded_quantile = cal.unbounded();
  for (const auto& test : split.test) run.intervals.push_back(cal.evaluate(*run.model, test, &p.scaler));
  return run;
}

ScenarioResult run_scenario(const ScenarioConfig& config) {
  config.validate();
  const PreparedData p = prepare_data(config);
  ScenarioResult result;
  result.hash = config.hash();
  result.scaler = p.scaler;
  const auto initial = train_phase1(config, p, &result.initial);
  for (const auto& set : eval_sets(p)) {
    result.initial_mae.emplace_back(set.name, cl::rollout_mae(*initial, *set.data, p.scaler));
  }
  (void)make_strategy(cl::StrategyKind::EmReselect, config, p, initial->order(), &result.d1_selection);
  for (const auto kind : config.strategies) result.runs.push_back(run_strategy(config, p, *initial, kind));
  return result;
}

json ScenarioResult::metrics_json() const {
  json initial_json = initial.to_json();
  json mae = json::object();
  for (const auto& [name, v] : initial_mae) mae[name] = io::vector_to_json(v);
  initial_json["mae"] = mae;
  json strategies = json::array();
  for (const auto& r : runs) {
    json reports = json::array();
    for (const auto& rep : r.reports) reports.push_back(rep.to_json());
    json forgetting = json::array();
    for (const auto& f : r.forgetting) {
      forgetting.push_back({{"eval_set", f.name},
                            {"mae_initial", io::vector_to_json(f.mae_before)},
                            {"mae_final", io::vector_to_json(f.mae_after)},
                            {"forgetting", io::vector_to_json(f.forgetting)}});
    }
    json intervals = json::array();
    for (std::size_t k = 0; k < r.intervals.size(); ++k) {
      json iv = interval_report_to_json(r.intervals[k]);
      iv["domain"] = "D" + std::to_string(k + 1);
      intervals.push_back(iv);
    }
    json selection = json::array();
    for (const auto& s : r.selection) selection.push_back(selection_stats_to_json(s));
    json quantiles = json::array();
    for (double q : r.quantiles) quantiles.push_back(io::number_to_json(q));
    strategies.push_back({{"strategy", cl::to_string(r.kind)},
                          {"memory_size", r.memory_size},
                          {"training", reports},
                          {"mae", forgetting},
                          {"conformal", {{"quantiles", quantiles}, {"unbounded", r.unbounded_quantile}, {"test", intervals}}},
                          {"selection", selection}});
  }
  return {{"format", "emreselect-metrics"},
          {"version", 1},
          {"config_hash", hash},
          {"scaler", io::scaler_to_json(scaler)},
          {"initial", initial_json},
          {"d1_selection", selection_stats_to_json(d1_selection)},
          {"strategies", strategies}};
}

json ScenarioResult::timing_json() const {
  json per = json::object();
  for (const auto& r : runs) {
    json secs = json::array();
    for (const auto& rep : r.reports) secs.push_back(rep.wall_seconds);
    per[cl::to_string(r.kind)] = secs;
  }
  return {{"config_hash", hash}, {"initial_seconds", initial.wall_seconds}, {"continual_seconds", per}};
}

namespace {

std::string csv_number(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string csv_optional(const std::optional<double>& v) { return v ? csv_number(*v) : ""; }

}  // namespace

std::string ScenarioResult::epochs_csv() const {
  std::ostringstream out;
  out << "strategy,domain,epoch,new_risk,memory_risk,no_conflict,project_new,project_memory\n";
  for (std::size_t e = 0; e < initial.epochs.size(); ++e) {
    out << "Initial,D1," << e << ',' << csv_number(initial.epochs[e].new_risk) << ",,0,0,0\n";
  }
  for (const auto& r : runs) {
    for (std::size_t k = 0; k < r.reports.size(); ++k) {
      const auto& rep = r.reports[k];
      for (std::size_t e = 0; e < rep.epochs.size(); ++e) {
        const auto& ep = rep.epochs[e];
        out << cl::to_string(r.kind) << ",D" << (k + 2) << ',' << e << ',' << csv_number(ep.new_risk) << ','
            << csv_optional(ep.memory_risk) << ',' << ep.no_conflict << ',' << ep.project_new << ','
            << ep.project_memory << '\n';
      }
    }
  }
  return out.str();
}

std::string ScenarioResult::mae_csv() const {
  std::ostringstream out;
  out << "strategy,eval_set,output,mae_initial,mae_final,forgetting\n";
  for (const auto& r : runs) {
    for (const auto& f : r.forgetting) {
      for (Index j = 0; j < f.mae_before.size(); ++j) {
        out << cl::to_string(r.kind) << ',' << f.name << ',' << j << ',' << csv_number(f.mae_before(j)) << ','
            << csv_number(f.mae_after(j)) << ',' << csv_number(f.forgetting(j)) << '\n';
      }
    }
  }
  return out.str();
}

std::filesystem::path write_outputs(const ScenarioConfig& config, const ScenarioResult& result) {
  const auto dir = config.output_dir / result.hash;
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error((dir / name).string() + ": cannot open for writing");
    out << text;
  };
  write("metrics.json", result.metrics_json().dump(2) + "\n");
  write("timing.json", result.timing_json().dump(2) + "\n");
  write("epochs.csv", result.epochs_csv());
  write("mae.csv", result.mae_csv());
  return dir;
}

std::vector<SweepRow> memory_sweep(const ScenarioConfig& config, const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("memory sweep needs at least one size");
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw std::invalid_argument("memory sweep sizes must be ascending");
  config.validate();
  const PreparedData p = prepare_data(config);
  const auto initial = train_phase1(config, p);
  const Index order = initial->order();
  const ConformalSplit split = conformal_split(p, order, child_seed(config.seed, 5));
  std::vector<SweepRow> rows;
  for (const std::size_t size : sizes) {
    cl::Strategy strategy;
    strategy.kind = cl::StrategyKind::EmReselect;
    strategy.selection = scenario_selection(config);
    strategy.memory_cap = size;
    auto model = initial->clone();
    MemoryBuffer memory;
    memory.append(cl::representatives_for(strategy, p.train.front(), order, memory_seed(config)));
    for (std::size_t k = 1; k < p.train.size(); ++k) {
      const std::span<const TimeSeriesDataset> history(p.train.data(), k);
      (void)cl::train_continual(*model, p.train[k], memory, strategy,
                                seeded(config.continual, child_seed(config.seed, 10 + k)), history);
    }
    const auto cal = conformal::ConformalCalibrator::calibrate(*model, split.calibration, config.alpha, &p.scaler);
    SweepRow row;
    row.memory_size = size;
    row.old_domain = cal.evaluate(*model, split.test.front(), &p.scaler);
    row.new_domain = cal.evaluate(*model, split.test.back(), &p.scaler);
    row.quantiles = cal.quantiles();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "memory_size,output_dim,coverage,width,domain\n";
  for (const auto& r : rows) {
    for (const auto* rep : {&r.old_domain, &r.new_domain}) {
      const char* domain = rep == &r.old_domain ? "old" : "new";
      for (Index j = 0; j < rep->coverage.size(); ++j) {
        out << r.memory_size << ',' << j << ',' << csv_number(rep->coverage(j)) << ',' << csv_number(rep->mean_width(j))
            << ',' << domain << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace emr::scenario
