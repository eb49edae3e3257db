// SPDX-License-Identifier: Apache-2.0
#include "emreselect/data.hpp"

#include "emreselect/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace emr::data {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, delimiter)) out.push_back(cell);
  if (!line.empty() && line.back() == delimiter) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc() && ptr == end;
}

bool blank(const std::string& line) { return trim(line).empty(); }

}  // namespace

void CsvSchema::validate() const {
  if (output_columns.empty()) throw std::invalid_argument("CSV schema needs at least one output column");
  std::set<std::string> seen;
  for (const auto* group : {&input_columns, &output_columns}) {
    for (const auto& name : *group) {
      if (!seen.insert(name).second) throw std::invalid_argument("CSV schema lists column '" + name + "' twice");
    }
  }
  if (!(sample_period > 0.0)) throw std::invalid_argument("CSV schema: sample_period must be positive");
}

TimeSeriesDataset read_csv(std::istream& in, const CsvSchema& schema, const std::string& source,
                           const std::string& domain_id) {
  schema.validate();
  std::string line;
  std::vector<std::string> names;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t line_no = 0;
  if (schema.header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!blank(line)) break;
    }
    if (blank(line)) throw ParseError(source + ": file is empty");
    for (auto& n : split_line(line, schema.delimiter)) names.push_back(trim(n));
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    rows.push_back(split_line(line, schema.delimiter));
    line_numbers.push_back(line_no);
  }
  if (rows.empty()) throw ParseError(source + ": no data rows");
  if (!schema.header) {
    for (std::size_t i = 0; i < rows.front().size(); ++i) names.push_back("c" + std::to_string(i));
  }

  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < names.size(); ++i) position.emplace(names[i], i);
  auto locate = [&](const std::vector<std::string>& wanted) {
    std::vector<std::size_t> idx;
    for (const auto& w : wanted) {
      const auto it = position.find(w);
      if (it == position.end()) throw ParseError(source + ": missing column '" + w + "'");
      idx.push_back(it->second);
    }
    return idx;
  };
  const auto in_idx = locate(schema.input_columns);
  const auto out_idx = locate(schema.output_columns);

  const auto n = static_cast<Index>(rows.size());
  TimeSeriesDataset d;
  d.inputs.resize(n, static_cast<Index>(in_idx.size()));
  d.outputs.resize(n, static_cast<Index>(out_idx.size()));
  d.sample_period = schema.sample_period;
  d.domain_id = domain_id.empty() ? source : domain_id;
  for (Index r = 0; r < n; ++r) {
    const auto& cells = rows[static_cast<std::size_t>(r)];
    const std::string where = source + ": data row " + std::to_string(r + 1) + " (line " +
                              std::to_string(line_numbers[static_cast<std::size_t>(r)]) + ")";
    if (cells.size() != names.size()) {
      throw ParseError(where + " has " + std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(names.size()));
    }
    auto fill = [&](const std::vector<std::size_t>& idx, Matrix& into) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::string text = trim(cells[idx[k]]);
        double v = 0.0;
        if (!parse_double(text, v) || !std::isfinite(v)) {
          throw ParseError(where + ", column \"" + names[idx[k]] + "\": cannot parse '" + text + "' as a finite number");
        }
        into(r, static_cast<Index>(k)) = v;
      }
    };
    fill(in_idx, d.inputs);
    fill(out_idx, d.outputs);
  }
  d.validate();
  return d;
}

TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, const std::string& domain_id) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  return read_csv(in, schema, path.string(), domain_id);
}

void write_csv(std::ostream& out, const TimeSeriesDataset& dataset, const CsvSchema& schema) {
  if (static_cast<Index>(schema.input_columns.size()) != dataset.input_dim() ||
      static_cast<Index>(schema.output_columns.size()) != dataset.output_dim()) {
    throw std::invalid_argument("CSV schema does not match the dataset's channel counts");
  }
  const char sep = schema.delimiter;
  bool first = true;
  for (const auto* group : {&schema.input_columns, &schema.output_columns}) {
    for (const auto& name : *group) {
      if (!first) out << sep;
      out << name;
      first = false;
    }
  }
  out << '\n' << std::setprecision(17);
  for (Index r = 0; r < dataset.rows(); ++r) {
    for (Index c = 0; c < dataset.input_dim(); ++c) out << dataset.inputs(r, c) << sep;
    for (Index c = 0; c < dataset.output_dim(); ++c) {
      out << dataset.outputs(r, c) << (c + 1 < dataset.output_dim() ? std::string(1, sep) : "\n");
    }
  }
}

void write_csv(const std::filesystem::path& path, const TimeSeriesDataset& dataset, const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  write_csv(out, dataset, schema);
}

std::vector<double> load_series(const std::filesystem::path& path, const std::string& column, char delimiter) {
  CsvSchema schema;
  schema.output_columns = {column};
  schema.delimiter = delimiter;
  const auto d = load_csv(path, schema);
  return {d.outputs.data(), d.outputs.data() + d.rows()};
}

void SynthSpec::validate() const {
  if (n < 2) throw std::invalid_argument("synthetic series needs n >= 2");
  if (outputs.empty()) throw std::invalid_argument("synthetic spec needs at least one output");
  if (input_dim < 0) throw std::invalid_argument("synthetic spec: input_dim must be >= 0");
  if (input_lag < 1) throw std::invalid_argument("synthetic spec: input_lag must be >= 1");
  if (input_noise < 0.0) throw std::invalid_argument("synthetic spec: input_noise must be >= 0");
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    const auto& t = outputs[j];
    const std::string where = "synthetic output " + std::to_string(j) + ": ";
    for (std::size_t k = 0; k < t.breaks.size(); ++k) {
      if (t.breaks[k] <= 0 || t.breaks[k] >= n) throw std::invalid_argument(where + "break outside (0, n)");
      if (k > 0 && t.breaks[k] <= t.breaks[k - 1]) throw std::invalid_argument(where + "breaks must increase");
    }
    if (t.slopes.size() != t.breaks.size() + 1) throw std::invalid_argument(where + "need one slope per segment");
    if (!t.jumps.empty() && t.jumps.size() != t.breaks.size()) {
      throw std::invalid_argument(where + "need one jump per break");
    }
    if (!(t.noise >= 0.0)) throw std::invalid_argument(where + "noise must be >= 0");
  }
}

SynthResult generate_synth(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  SynthResult out;
  const Index q = spec.output_dim();
  TimeSeriesDataset& d = out.dataset;
  d.outputs.resize(spec.n, q);
  d.domain_id = "synth";
  for (Index j = 0; j < q; ++j) {
    const auto& t = spec.outputs[static_cast<std::size_t>(j)];
    std::size_t seg = 0;
    double mean = t.intercept;
    for (Index r = 0; r < spec.n; ++r) {
      if (r > 0) {
        if (seg < t.breaks.size() && r == t.breaks[seg]) {
          if (!t.jumps.empty()) mean += t.jumps[seg];
          ++seg;
        }
        mean += t.slopes[seg];
      }
      d.outputs(r, j) = mean + t.noise * normal(rng);
    }
    out.breaks.push_back(t.breaks);
  }
  if (spec.generator == InputGenerator::Independent) {
    d.inputs = maneuver_inputs(spec.n, spec.input_dim, 60.0, rng());
    for (Index r = 0; r < spec.n; ++r) {
      for (Index c = 0; c < spec.input_dim; ++c) d.inputs(r, c) += spec.input_noise * normal(rng);
    }
  } else {
    Matrix w(spec.input_dim, q);
    for (Index i = 0; i < w.size(); ++i) w(i) = normal(rng);
    d.inputs.resize(spec.n, spec.input_dim);
    for (Index r = 0; r < spec.n; ++r) {
      const Index src = std::max<Index>(0, r - spec.input_lag);
      for (Index c = 0; c < spec.input_dim; ++c) {
        d.inputs(r, c) = w.row(c).dot(d.outputs.row(src)) + spec.input_noise * normal(rng);
      }
    }
  }
  d.validate();
  return out;
}

Matrix maneuver_inputs(Index n, Index p, double period, std::uint64_t seed, double ramp_fraction) {
  if (n < 1 || p < 0 || !(period >= 2.0) || !(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) {
    throw std::invalid_argument("maneuver_inputs: bad arguments");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(-1.0, 1.0);
  std::uniform_real_distribution<double> length(0.5 * period, 1.5 * period);
  Matrix x(n, p);
  for (Index c = 0; c < p; ++c) {
    Index start = 0;
    double from = level(rng);
    while (start < n) {
      const Index len = std::max<Index>(2, static_cast<Index>(std::lround(length(rng))));
      const Index ramp =
          std::clamp<Index>(static_cast<Index>(std::lround(ramp_fraction * static_cast<double>(len))), 1, len);
      const double to = level(rng);
      for (Index k = 0; k < len && start + k < n; ++k) {
        const double u = std::min(1.0, static_cast<double>(k) / static_cast<double>(ramp));
        x(start + k, c) = from + (to - from) * u;
      }
      start += len;
      from = to;
    }
  }
  return x;
}

void DomainShiftSpec::validate() const {
  if (domains.size() < 2) throw std::invalid_argument("domain stream needs at least two domains");
  if (samples.size() != domains.size()) throw std::invalid_argument("domain stream: one sample count per domain");
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("domain stream: dimensions must be >= 1");
  if (!(noise >= 0.0)) throw std::invalid_argument("domain stream: noise must be >= 0");
  if (!(spectral_radius > 0.0 && spectral_radius < 1.0)) {
    throw std::invalid_argument("domain stream: spectral_radius must lie in (0, 1)");
  }
  if (!(maneuver_period >= 2.0)) throw std::invalid_argument("domain stream: maneuver_period must be >= 2");
  if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0)) {
    throw std::invalid_argument("domain stream: ramp_fraction must lie in (0, 1]");
  }
  for (std::size_t k = 0; k < domains.size(); ++k) {
    const auto& dom = domains[k];
    const std::string where = "domain " + std::to_string(k + 1) + ": ";
    if (!(dom.output_gain > 0.0)) throw std::invalid_argument(where + "output_gain must be > 0");
    if (dom.input_offset.size() != 0 && dom.input_offset.size() != input_dim) {
      throw std::invalid_argument(where + "input_offset length must equal input_dim");
    }
    if (samples[k] < 2) throw std::invalid_argument(where + "needs at least 2 samples");
  }
}

DomainSystem base_system(const DomainShiftSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(spec.output_dim, spec.output_dim);
  for (Index i = 0; i < g.size(); ++i) g(i) = normal(rng);
  const Matrix orth = Eigen::HouseholderQR<Matrix>(g).householderQ();
  DomainSystem sys;
  // A scaled orthogonal matrix has every eigenvalue on the circle of that radius.
  sys.a = spec.spectral_radius * orth;
  sys.b.resize(spec.output_dim, spec.input_dim);
  for (Index i = 0; i < sys.b.size(); ++i) sys.b(i) = normal(rng) / std::sqrt(static_cast<double>(spec.input_dim));
  return sys;
}

std::vector<TimeSeriesDataset> generate_domain_stream(const DomainShiftSpec& spec) {
  spec.validate();
  const DomainSystem sys = base_system(spec);
  std::seed_seq seq{spec.seed, std::uint64_t{0x5eed}};
  std::vector<std::uint64_t> child(spec.domains.size());
  seq.generate(child.begin(), child.end());
  std::vector<TimeSeriesDataset> out;
  for (std::size_t k = 0; k < spec.domains.size(); ++k) {
    const auto& dom = spec.domains[k];
    const Matrix a = sys.a + dom.dynamics_delta * Matrix::Identity(spec.output_dim, spec.output_dim);
    const double radius = Eigen::EigenSolver<Matrix>(a, false).eigenvalues().cwiseAbs().maxCoeff();
    if (!(radius < 1.0)) {
      throw std::invalid_argument("domain " + std::to_string(k + 1) + ": shifted dynamics are unstable (spectral radius " +
                                  std::to_string(radius) + ")");
    }
    const Index n = spec.samples[k];
    std::mt19937_64 rng(child[k]);
    std::normal_distribution<double> normal(0.0, 1.0);
    TimeSeriesDataset d;
    d.domain_id = "D" + std::to_string(k + 1);
    d.inputs = maneuver_inputs(n, spec.input_dim, spec.maneuver_period, rng(), spec.ramp_fraction);
    if (dom.input_offset.size() != 0) d.inputs.rowwise() += dom.input_offset.transpose();
    d.outputs.resize(n, spec.output_dim);
    Vector y = Vector::Zero(spec.output_dim);
    // Burn-in so the first row is not a transient from zero.
    for (int b = 0; b < 50; ++b) y = a * y + dom.output_gain * sys.b * d.inputs.row(0).transpose();
    for (Index r = 0; r < n; ++r) {
      y = a * y + dom.output_gain * sys.b * d.inputs.row(r).transpose();
      for (Index j = 0; j < spec.output_dim; ++j) d.outputs(r, j) = y(j) + spec.noise * normal(rng);
    }
    d.validate();
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace emr::data
