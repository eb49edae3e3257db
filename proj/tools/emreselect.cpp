// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Machine-readable results go to stdout, diagnostics
// to stderr.
#include "emreselect/changepoint.hpp"
#include "emreselect/data.hpp"
#include "emreselect/errors.hpp"
#include "emreselect/json_io.hpp"
#include "emreselect/scenario.hpp"
#include "emreselect/selection.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

bool g_quiet = false;

void note(const std::string& msg) {
  if (!g_quiet) std::cerr << "emreselect: " << msg << '\n';
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw emr::ParseError(path.string() + ": cannot open config");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw emr::ParseError(path.string() + ": " + e.what());
  }
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string number_text(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
}

// Flags shared by every command that reads a scenario config; set values
// override the file.
struct ScenarioFlags {
  std::string config;
  std::optional<std::int64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<double> alpha;
  std::optional<int> initial_epochs;
  std::optional<int> continual_epochs;
  std::optional<std::string> strategies;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "Scenario config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Override the master seed");
    cmd->add_option("--output-dir", output_dir, "Override the output directory");
    cmd->add_option("--alpha", alpha, "Override the conformal miscoverage level");
    cmd->add_option("--initial-epochs", initial_epochs, "Override initial.max_epochs");
    cmd->add_option("--continual-epochs", continual_epochs, "Override continual.max_epochs");
    cmd->add_option("--strategies", strategies, "Override the strategy list, comma separated");
  }

  [[nodiscard]] emr::scenario::ScenarioConfig load() const {
    json j = read_json_file(config);
    if (!j.is_object()) throw emr::ParseError(config + ": top level must be an object");
    if (seed) j["seed"] = *seed;
    if (output_dir) j["output_dir"] = *output_dir;
    if (alpha) j["alpha"] = *alpha;
    if (initial_epochs) j["initial"]["max_epochs"] = *initial_epochs;
    if (continual_epochs) j["continual"]["max_epochs"] = *continual_epochs;
    if (strategies) j["strategies"] = split_list(*strategies);
    return emr::scenario::config_from_json(j, fs::path(config).parent_path());
  }
};

std::string first_column(const fs::path& path, char delimiter) {
  std::ifstream in(path);
  if (!in) throw emr::ParseError(path.string() + ": cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw emr::ParseError(path.string() + ": file is empty");
  const auto end = line.find(delimiter);
  std::string name = line.substr(0, end);
  name.erase(std::remove_if(name.begin(), name.end(), [](char c) { return c == ' ' || c == '\r' || c == '\t'; }),
             name.end());
  if (name.empty()) throw emr::ParseError(path.string() + ": header has an empty first column");
  return name;
}

// ---- detect ---------------------------------------------------------------

struct DetectArgs {
  std::string input;
  std::string column;
  std::string config;
  std::optional<int> intervals;
  std::optional<double> threshold;
  std::optional<int> min_segment;
  std::optional<std::int64_t> seed;
  std::optional<double> sigma;
};

emr::cp::NotConfig not_config_from(const json& j, const std::string& path) {
  emr::scenario::FieldReader r(j, path);
  emr::cp::NotConfig c;
  c.num_intervals = static_cast<int>(r.integer("num_intervals", c.num_intervals));
  c.threshold = r.optional_number("threshold");
  c.min_segment_length = static_cast<int>(r.integer("min_segment_length", c.min_segment_length));
  const auto seed = r.integer("seed", 0);
  if (seed < 0) r.fail("seed", "must be >= 0");
  c.rng_seed = static_cast<std::uint64_t>(seed);
  r.finish();
  return c;
}

int run_detect(const DetectArgs& a) {
  emr::cp::NotConfig cfg = a.config.empty() ? emr::cp::NotConfig{} : not_config_from(read_json_file(a.config), "");
  if (a.intervals) cfg.num_intervals = *a.intervals;
  if (a.threshold) cfg.threshold = *a.threshold;
  if (a.min_segment) cfg.min_segment_length = *a.min_segment;
  if (a.seed) cfg.rng_seed = static_cast<std::uint64_t>(*a.seed);
  cfg.validate();
  const std::string column = a.column.empty() ? first_column(a.input, ',') : a.column;
  const auto series = emr::data::load_series(a.input, column);
  auto det = emr::cp::detect_not(series, cfg, a.sigma);
  std::sort(det.points.begin(), det.points.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
  note("series '" + column + "': n=" + std::to_string(series.size()) + " sigma=" + number_text(det.sigma) +
       " threshold=" + number_text(det.threshold) + " change points=" + std::to_string(det.points.size()));
  if (det.sigma_floored) note("noise estimate hit the floor; the series looks noiseless");
  std::cout << "index,interval_start,interval_end,glr\n";
  for (const auto& p : det.points) {
    std::cout << p.index << ',' << p.interval.s << ',' << p.interval.e << ',' << number_text(p.glr) << '\n';
  }
  return 0;
}

// ---- select ---------------------------------------------------------------

struct SelectArgs {
  std::string input;
  std::string outputs;
  std::string inputs;
  std::string config;
  int window = 8;
  std::optional<int> d_multi;
  std::optional<double> glr_threshold;
  std::optional<std::int64_t> seed;
};

int run_select(const SelectArgs& a) {
  emr::sel::SelectionConfig cfg;
  if (!a.config.empty()) cfg = emr::scenario::selection_config_from({read_json_file(a.config), ""});
  if (a.d_multi) cfg.d_multi = *a.d_multi;
  if (a.glr_threshold) cfg.glr_diff_threshold = *a.glr_threshold;
  if (a.seed) cfg.not_config.rng_seed = static_cast<std::uint64_t>(*a.seed);
  cfg.validate();
  emr::data::CsvSchema schema;
  schema.output_columns = split_list(a.outputs);
  schema.input_columns = split_list(a.inputs);
  const auto dataset = emr::data::load_csv(a.input, schema);
  const auto reps = emr::sel::build_representatives(dataset, cfg, a.window);

  note("selected " + std::to_string(reps.candidates.size()) + " of " + std::to_string(reps.concatenated.size()) +
       " candidates");
  // One row per concatenated candidate. E and partner come from the last test
  // in which the candidate was the foreign point.
  std::cout << "index,source_dim,glr_own,status,e_value,partner\n";
  for (const auto& c : reps.concatenated) {
    const emr::sel::FilterDecision* test = nullptr;
    for (const auto& d : reps.filter.decisions) {
      if (d.foreign_index == c.index) test = &d;
    }
    const bool materialized = std::any_of(reps.candidates.begin(), reps.candidates.end(),
                                          [&](const auto& k) { return k.index == c.index; });
    const bool filtered = std::any_of(reps.filter.kept.begin(), reps.filter.kept.end(),
                                      [&](const auto& k) { return k.index == c.index; });
    const char* status = materialized ? "kept" : (filtered ? "short_history" : "removed");
    std::cout << c.index << ',' << c.source_dim << ',' << number_text(c.glr_own) << ',' << status << ',';
    if (test && test->e_value) std::cout << number_text(*test->e_value);
    std::cout << ',';
    if (test) std::cout << test->own_index;
    std::cout << '\n';
  }
  return 0;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string output_dir = "runs";
};

std::vector<std::string> names(const std::string& prefix, emr::Index count) {
  std::vector<std::string> out;
  for (emr::Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

emr::data::SynthSpec synth_spec_from(emr::scenario::FieldReader& r) {
  emr::data::SynthSpec s;
  s.n = r.integer("n", s.n);
  s.input_dim = r.integer("input_dim", s.input_dim);
  const std::string gen = r.string("generator", "independent");
  if (gen == "independent") {
    s.generator = emr::data::InputGenerator::Independent;
  } else if (gen == "drives_outputs") {
    s.generator = emr::data::InputGenerator::DrivesOutputs;
  } else {
    r.fail("generator", "expected 'independent' or 'drives_outputs'");
  }
  s.input_lag = r.integer("input_lag", s.input_lag);
  s.input_noise = r.number("input_noise", s.input_noise);
  const json& outputs = r.raw("outputs");
  if (!outputs.is_array() || outputs.empty()) r.fail("outputs", "expected a non-empty list of output tracks");
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    emr::scenario::FieldReader o(outputs[i], r.path_of("outputs[" + std::to_string(i) + "]"));
    emr::data::OutputTrack t;
    for (double b : o.numbers("breaks", std::vector<double>{})) t.breaks.push_back(static_cast<emr::Index>(b));
    t.slopes = o.numbers("slopes");
    t.jumps = o.numbers("jumps", std::vector<double>{});
    t.intercept = o.number("intercept", 0.0);
    t.noise = o.number("noise", 0.0);
    o.finish();
    s.outputs.push_back(std::move(t));
  }
  return s;
}

int run_synth(const SynthArgs& a) {
  const json j = read_json_file(a.config);
  emr::scenario::FieldReader r(j, "");
  const std::string type = r.string("type");
  const auto seed = r.integer("seed");
  if (seed < 0) r.fail("seed", "must be >= 0");
  const fs::path dir = fs::path(a.output_dir) / fnv_hex(j.dump());
  json files = json::array();
  json out;
  if (type == "piecewise") {
    auto spec = synth_spec_from(r);
    r.finish();
    spec.seed = static_cast<std::uint64_t>(seed);
    const auto result = emr::data::generate_synth(spec);
    emr::data::CsvSchema schema;
    schema.input_columns = names("x", spec.input_dim);
    schema.output_columns = names("y", spec.output_dim());
    std::ostringstream csv;
    emr::data::write_csv(csv, result.dataset, schema);
    write_text(dir / "synth.csv", csv.str());
    files.push_back((dir / "synth.csv").string());
    out["breaks"] = result.breaks;
  } else if (type == "domain_stream") {
    emr::data::DomainShiftSpec spec;
    spec.input_dim = r.integer("input_dim", spec.input_dim);
    spec.output_dim = r.integer("output_dim", spec.output_dim);
    spec.noise = r.number("noise", spec.noise);
    spec.maneuver_period = r.number("maneuver_period", spec.maneuver_period);
    spec.ramp_fraction = r.number("ramp_fraction", spec.ramp_fraction);
    spec.spectral_radius = r.number("spectral_radius", spec.spectral_radius);
    for (double n : r.numbers("samples")) spec.samples.push_back(static_cast<emr::Index>(n));
    const json& domains = r.raw("domains");
    if (!domains.is_array()) r.fail("domains", "expected a list of domain objects");
    for (std::size_t i = 0; i < domains.size(); ++i) {
      emr::scenario::FieldReader d(domains[i], "domains[" + std::to_string(i) + "]");
      emr::data::DomainShift shift;
      shift.output_gain = d.number("output_gain", 1.0);
      shift.dynamics_delta = d.number("dynamics_delta", 0.0);
      const auto offset = d.numbers("input_offset", std::vector<double>{});
      shift.input_offset = Eigen::Map<const emr::Vector>(offset.data(), static_cast<emr::Index>(offset.size()));
      d.finish();
      spec.domains.push_back(shift);
    }
    r.finish();
    spec.seed = static_cast<std::uint64_t>(seed);
    const auto stream = emr::data::generate_domain_stream(spec);
    emr::data::CsvSchema schema;
    schema.input_columns = names("x", spec.input_dim);
    schema.output_columns = names("y", spec.output_dim);
    for (const auto& d : stream) {
      std::ostringstream csv;
      emr::data::write_csv(csv, d, schema);
      const fs::path file = dir / (d.domain_id + ".csv");
      write_text(file, csv.str());
      files.push_back(file.string());
    }
  } else {
    r.fail("type", "expected 'piecewise' or 'domain_stream'");
  }
  out["files"] = files;
  note("wrote " + std::to_string(files.size()) + " file(s) to " + dir.string());
  std::cout << out.dump(2) << '\n';
  return 0;
}

// ---- training -------------------------------------------------------------

json mae_json(const emr::nn::Forecaster& model, const emr::scenario::PreparedData& data) {
  json mae = json::object();
  for (const auto& set : emr::scenario::eval_sets(data)) {
    mae[set.name] = emr::io::vector_to_json(emr::cl::rollout_mae(model, *set.data, data.scaler));
  }
  return mae;
}

int run_train_initial(const ScenarioFlags& flags) {
  const auto cfg = flags.load();
  const auto data = emr::scenario::prepare_data(cfg);
  emr::cl::TrainingReport report;
  const auto model = emr::scenario::train_phase1(cfg, data, &report);
  const fs::path path = cfg.output_dir / cfg.hash() / "initial.json";
  fs::create_directories(path.parent_path());
  emr::nn::save_checkpoint(path, *model, data.scaler, cfg.seed);
  note("initial training ran " + std::to_string(report.epochs_run()) + " epochs in " +
       number_text(report.wall_seconds) + " s");
  const json out = {{"config_hash", cfg.hash()},
                    {"checkpoint", path.string()},
                    {"report", report.to_json()},
                    {"mae", mae_json(*model, data)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_train_continual(const ScenarioFlags& flags, const std::string& strategy_name, const std::string& checkpoint) {
  const auto cfg = flags.load();
  const auto kind = emr::cl::strategy_from_string(strategy_name);
  const auto data = emr::scenario::prepare_data(cfg);
  std::unique_ptr<emr::nn::Forecaster> initial;
  if (checkpoint.empty()) {
    note("no --checkpoint given; training the initial model first");
    initial = emr::scenario::train_phase1(cfg, data);
  } else {
    auto ck = emr::nn::load_checkpoint(checkpoint);
    if (ck.model->input_dim() != data.train.front().input_dim() ||
        ck.model->output_dim() != data.train.front().output_dim()) {
      throw std::invalid_argument(checkpoint + ": model dimensions do not match the configured data");
    }
    initial = std::move(ck.model);
  }
  const auto run = emr::scenario::run_strategy(cfg, data, *initial, kind);
  const fs::path path = cfg.output_dir / cfg.hash() / ("continual-" + strategy_name + ".json");
  fs::create_directories(path.parent_path());
  emr::nn::save_checkpoint(path, *run.model, data.scaler, cfg.seed);
  json reports = json::array();
  for (const auto& r : run.reports) {
    for (const auto& w : r.warnings) note(w);
    reports.push_back(r.to_json());
  }
  const json out = {{"config_hash", cfg.hash()},
                    {"strategy", strategy_name},
                    {"checkpoint", path.string()},
                    {"memory_size", run.memory_size},
                    {"training", reports},
                    {"mae", mae_json(*run.model, data)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int run_scenario_cmd(const ScenarioFlags& flags) {
  const auto cfg = flags.load();
  note("scenario " + cfg.hash() + ": " + std::to_string(cfg.strategies.size()) + " strategies");
  const auto result = emr::scenario::run_scenario(cfg);
  const fs::path dir = emr::scenario::write_outputs(cfg, result);
  for (const auto& r : result.runs) {
    for (const auto& rep : r.reports) {
      for (const auto& w : rep.warnings) note(std::string(emr::cl::to_string(r.kind)) + ": " + w);
    }
    if (r.unbounded_quantile) note(std::string(emr::cl::to_string(r.kind)) + ": calibration set too small, q = inf");
  }
  const json out = {{"config_hash", result.hash},
                    {"run_dir", dir.string()},
                    {"files",
                     {(dir / "metrics.json").string(), (dir / "timing.json").string(), (dir / "epochs.csv").string(),
                      (dir / "mae.csv").string()}}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    std::size_t v = 0;
    const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || end != item.data() + item.size()) {
      throw std::invalid_argument("--sizes: '" + item + "' is not a non-negative integer");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--sizes must list at least one memory size");
  return out;
}

int run_sweep(const ScenarioFlags& flags, const std::string& size_list) {
  std::vector<std::size_t> sorted = parse_sizes(size_list);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  const auto cfg = flags.load();
  const auto rows = emr::scenario::memory_sweep(cfg, sorted);
  const std::string csv = emr::scenario::sweep_csv(rows);
  std::string tag;
  for (std::size_t s : sorted) tag += (tag.empty() ? "" : "-") + std::to_string(s);
  const fs::path path = cfg.output_dir / cfg.hash() / ("sweep_" + tag + ".csv");
  write_text(path, csv);
  note("sweep written to " + path.string());
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training reallocates the same large buffers every epoch; keep them in the heap.
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
  CLI::App app{"EM-ReSeleCT continual-learning toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("-q,--quiet", g_quiet, "Suppress diagnostics on stderr");
  app.set_version_flag("--version", "emreselect 0.3.0");

  DetectArgs detect;
  auto* cmd_detect = app.add_subcommand("detect", "Change points of one series (CSV to stdout)");
  cmd_detect->add_option("-i,--input", detect.input, "CSV file")->required();
  cmd_detect->add_option("--column", detect.column, "Column to analyse (default: first)");
  cmd_detect->add_option("-c,--config", detect.config, "Detector config (JSON)")->check(CLI::ExistingFile);
  cmd_detect->add_option("--intervals", detect.intervals, "Number of random intervals");
  cmd_detect->add_option("--threshold", detect.threshold, "GLR threshold (default: automatic)");
  cmd_detect->add_option("--min-segment", detect.min_segment, "Minimum segment length");
  cmd_detect->add_option("--seed", detect.seed, "Interval sampling seed");
  cmd_detect->add_option("--sigma", detect.sigma, "Known noise deviation");

  SelectArgs select;
  auto* cmd_select = app.add_subcommand("select", "Representative selection over output columns (CSV)");
  cmd_select->add_option("-i,--input", select.input, "CSV file")->required();
  cmd_select->add_option("--outputs", select.outputs, "Output columns, comma separated")->required();
  cmd_select->add_option("--inputs", select.inputs, "Input columns, comma separated");
  cmd_select->add_option("-c,--config", select.config, "Selection config (JSON)")->check(CLI::ExistingFile);
  cmd_select->add_option("--window", select.window, "Window order d")->check(CLI::PositiveNumber);
  cmd_select->add_option("--d-multi", select.d_multi, "Proximity width");
  cmd_select->add_option("--glr-threshold", select.glr_threshold, "GLR difference threshold");
  cmd_select->add_option("--seed", select.seed, "Interval sampling seed");

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Generate synthetic CSV data");
  cmd_synth->add_option("-c,--config", synth.config, "Generator config (JSON)")->required()->check(CLI::ExistingFile);
  cmd_synth->add_option("--output-dir", synth.output_dir, "Output directory");

  ScenarioFlags initial_flags;
  auto* cmd_initial = app.add_subcommand("train-initial", "Phase 1 training on D1; writes a checkpoint");
  initial_flags.attach(cmd_initial);

  ScenarioFlags continual_flags;
  std::string strategy = "EmReselect";
  std::string checkpoint;
  auto* cmd_continual = app.add_subcommand("train-continual", "Phase 2 training with one strategy");
  continual_flags.attach(cmd_continual);
  cmd_continual->add_option("--strategy", strategy, "Batch, None, AGem or EmReselect");
  cmd_continual->add_option("--checkpoint", checkpoint, "Initial checkpoint from train-initial")
      ->check(CLI::ExistingFile);

  ScenarioFlags scenario_flags;
  auto* cmd_scenario = app.add_subcommand("scenario", "Full two-phase comparison; writes metrics and tables");
  scenario_flags.attach(cmd_scenario);

  ScenarioFlags sweep_flags;
  std::string sizes;
  auto* cmd_sweep = app.add_subcommand("conformal-sweep", "Interval coverage and width against memory size (CSV)");
  sweep_flags.attach(cmd_sweep);
  cmd_sweep->add_option("--sizes", sizes, "Memory sizes, comma separated")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*cmd_detect) return run_detect(detect);
    if (*cmd_select) return run_select(select);
    if (*cmd_synth) return run_synth(synth);
    if (*cmd_initial) return run_train_initial(initial_flags);
    if (*cmd_continual) return run_train_continual(continual_flags, strategy, checkpoint);
    if (*cmd_scenario) return run_scenario_cmd(scenario_flags);
    if (*cmd_sweep) return run_sweep(sweep_flags, sizes);
  } catch (const emr::NumericError& e) {
    std::cerr << "emreselect: numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const emr::ParseError& e) {
    std::cerr << "emreselect: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "emreselect: " << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "emreselect: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "emreselect: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
