// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/core.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace emr::data {

struct CsvSchema {
  std::vector<std::string> input_columns;
  std::vector<std::string> output_columns;
  double sample_period = 1.0;
  char delimiter = ',';
  /// Without a header, columns are named "c0", "c1", ... by position.
  bool header = true;

  void validate() const;
};

/// Throws ParseError naming the 1-based data row and the column on bad cells.
[[nodiscard]] TimeSeriesDataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                                         const std::string& domain_id = "");
[[nodiscard]] TimeSeriesDataset read_csv(std::istream& in, const CsvSchema& schema, const std::string& source,
                                         const std::string& domain_id = "");

/// Header row then one row per sample; 17 significant digits.
void write_csv(std::ostream& out, const TimeSeriesDataset& dataset, const CsvSchema& schema);
void write_csv(const std::filesystem::path& path, const TimeSeriesDataset& dataset, const CsvSchema& schema);

/// A single numeric column, e.g. the series handed to change-point detection.
[[nodiscard]] std::vector<double> load_series(const std::filesystem::path& path, const std::string& column,
                                              char delimiter = ',');

enum class InputGenerator {
  /// x_t = W y_{t-lag} + noise: inputs carry information about the outputs.
  DrivesOutputs,
  Independent,
};

struct OutputTrack {
  /// Row indices where a new linear segment starts, strictly increasing in (0, n).
  std::vector<Index> breaks;
  /// One slope per segment (breaks.size() + 1).
  std::vector<double> slopes;
  /// Level jump at each break; empty = continuous kinks.
  std::vector<double> jumps;
  double intercept = 0.0;
  double noise = 0.0;
};

struct SynthSpec {
  Index n = 300;
  std::vector<OutputTrack> outputs;
  Index input_dim = 2;
  InputGenerator generator = InputGenerator::Independent;
  Index input_lag = 1;
  double input_noise = 0.1;
  std::uint64_t seed = 0;

  [[nodiscard]] Index output_dim() const { return static_cast<Index>(outputs.size()); }
  void validate() const;
};

struct SynthResult {
  TimeSeriesDataset dataset;
  std::vector<std::vector<Index>> breaks;  // per output
};

/// Each output is continuous piecewise-linear (plus jumps) and noise.
[[nodiscard]] SynthResult generate_synth(const SynthSpec& spec);

/// Parameters of one regime of y_t = A y_{t-1} + gain * B x_t + offset + noise.
struct DomainShift {
  double output_gain = 1.0;
  /// Added to the diagonal of A.
  double dynamics_delta = 0.0;
  Vector input_offset;  // empty = zero
};

/// Multi-domain stream with shared input structure. Inputs are piecewise
/// linear maneuvers with random breaks; outputs follow stable linear dynamics.
struct DomainShiftSpec {
  Index input_dim = 4;
  Index output_dim = 2;
  std::vector<DomainShift> domains;
  std::vector<Index> samples;  // per domain
  double noise = 0.02;
  /// Expected rows between input maneuver changes.
  double maneuver_period = 60.0;
  /// Share of each maneuver spent ramping to the next level; the rest holds.
  double ramp_fraction = 1.0;
  double spectral_radius = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DomainSystem {
  Matrix a;  // q x q
  Matrix b;  // q x p
};

/// The base dynamics drawn from `spec.seed`, before any domain shift.
[[nodiscard]] DomainSystem base_system(const DomainShiftSpec& spec);

/// One dataset per domain, domain ids "D1", "D2", ...; each domain draws its
/// own inputs from a child seed.
[[nodiscard]] std::vector<TimeSeriesDataset> generate_domain_stream(const DomainShiftSpec& spec);

/// Piecewise-linear maneuver signal, n x p: per channel, segments of random
/// length that ramp to a new random level in [-1, 1] and then hold it.
[[nodiscard]] Matrix maneuver_inputs(Index n, Index p, double period, std::uint64_t seed, double ramp_fraction = 1.0);

}  // namespace emr::data
