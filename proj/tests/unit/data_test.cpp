// SPDX-License-Identifier: Apache-2.0
#include "emreselect/data.hpp"
#include "emreselect/errors.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace {

namespace dt = emr::data;
using emr::Index;
using emr::Matrix;
using emr::Vector;

dt::CsvSchema schema_xy() {
  dt::CsvSchema s;
  s.input_columns = {"x"};
  s.output_columns = {"y1", "y2"};
  return s;
}

emr::TimeSeriesDataset parse(const std::string& text, const dt::CsvSchema& s = schema_xy()) {
  std::istringstream in(text);
  return dt::read_csv(in, s, "mem.csv");
}

std::string parse_error(const std::string& text, const dt::CsvSchema& s = schema_xy()) {
  try {
    (void)parse(text, s);
  } catch (const emr::ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(Csv, ReadsSelectedColumnsInSchemaOrder) {
  const auto d = parse("t,y2,x,y1\n0,2,1,3\n1,5,4,6\n\n2,8,7,9\n");
  ASSERT_EQ(d.rows(), 3);
  EXPECT_EQ(d.inputs, (Matrix(3, 1) << 1, 4, 7).finished());
  EXPECT_EQ(d.outputs, (Matrix(3, 2) << 3, 2, 6, 5, 9, 8).finished());
  EXPECT_EQ(d.domain_id, "mem.csv");
}

TEST(Csv, HeaderlessColumnsAreNamedByPosition) {
  auto s = schema_xy();
  s.header = false;
  s.input_columns = {"c2"};
  s.output_columns = {"c0"};
  s.delimiter = ';';
  const auto d = parse("1;2;3\n4;5;6\n", s);
  EXPECT_EQ(d.outputs, (Matrix(2, 1) << 1, 4).finished());
  EXPECT_EQ(d.inputs, (Matrix(2, 1) << 3, 6).finished());
}

TEST(Csv, BadCellNamesRowAndColumn) {
  const auto msg = parse_error("x,y1,y2\n1,2,3\n4,abc,6\n");
  EXPECT_NE(msg.find("mem.csv"), std::string::npos) << msg;
  EXPECT_NE(msg.find("data row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("\"y1\""), std::string::npos) << msg;
  EXPECT_NE(msg.find("abc"), std::string::npos) << msg;
}

TEST(Csv, RejectsNonFiniteAndRaggedRows) {
  EXPECT_NE(parse_error("x,y1,y2\n1,nan,3\n").find("y1"), std::string::npos);
  EXPECT_NE(parse_error("x,y1,y2\n1,inf,3\n").find("y1"), std::string::npos);
  EXPECT_NE(parse_error("x,y1,y2\n1,2\n").find("fields"), std::string::npos);
}

TEST(Csv, MissingColumnAndEmptyFiles) {
  EXPECT_NE(parse_error("x,y1\n1,2\n").find("missing column 'y2'"), std::string::npos);
  EXPECT_NE(parse_error("").find("empty"), std::string::npos);
  EXPECT_NE(parse_error("\n\n").find("empty"), std::string::npos);
  EXPECT_NE(parse_error("x,y1,y2\n").find("no data rows"), std::string::npos);
  EXPECT_THROW((void)dt::load_csv("/nonexistent/file.csv", schema_xy()), emr::ParseError);
}

TEST(Csv, SchemaValidation) {
  dt::CsvSchema s;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.output_columns = {"a", "a"};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.output_columns = {"a"};
  s.sample_period = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Csv, RoundTripIsExact) {
  const auto d = emr::gen::random_dataset(50, 1, 2, 9, "rt");
  std::ostringstream out;
  dt::write_csv(out, d, schema_xy());
  const auto back = parse(out.str());
  EXPECT_EQ(back.inputs, d.inputs);
  EXPECT_EQ(back.outputs, d.outputs);
}

TEST(Csv, FileRoundTripAndSeries) {
  const auto path = std::filesystem::temp_directory_path() / "emreselect_data_test.csv";
  const auto d = emr::gen::random_dataset(20, 1, 2, 10);
  dt::write_csv(path, d, schema_xy());
  const auto back = dt::load_csv(path, schema_xy(), "D7");
  EXPECT_EQ(back.outputs, d.outputs);
  EXPECT_EQ(back.domain_id, "D7");
  const auto series = dt::load_series(path, "y2");
  ASSERT_EQ(series.size(), 20U);
  for (Index r = 0; r < 20; ++r) EXPECT_EQ(series[static_cast<std::size_t>(r)], d.outputs(r, 1));
  std::filesystem::remove(path);
}

dt::SynthSpec two_track_spec(double noise) {
  dt::SynthSpec s;
  s.n = 200;
  s.outputs.push_back({{50, 120}, {0.1, -0.3, 0.05}, {}, 1.0, noise});
  s.outputs.push_back({{80}, {0.0, 0.2}, {2.5}, -1.0, noise});
  s.seed = 4;
  return s;
}

TEST(Synth, NoiselessTracksHaveExactSegmentSlopes) {
  const auto r = dt::generate_synth(two_track_spec(0.0));
  const auto& y = r.dataset.outputs;
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(0, 1), -1.0);
  for (std::size_t j = 0; j < 2; ++j) {
    const auto track = two_track_spec(0.0).outputs[j];
    for (Index t = 1; t < 200; ++t) {
      std::size_t seg = 0;
      double jump = 0.0;
      for (std::size_t k = 0; k < track.breaks.size(); ++k) {
        if (t >= track.breaks[k]) seg = k + 1;
        if (t == track.breaks[k] && !track.jumps.empty()) jump = track.jumps[k];
      }
      EXPECT_NEAR(y(t, static_cast<Index>(j)) - y(t - 1, static_cast<Index>(j)), track.slopes[seg] + jump, 1e-12)
          << "output " << j << " row " << t;
    }
  }
  EXPECT_EQ(r.breaks[0], (std::vector<Index>{50, 120}));
  EXPECT_EQ(r.breaks[1], (std::vector<Index>{80}));
}

TEST(Synth, DeterministicInTheSeed) {
  const auto a = dt::generate_synth(two_track_spec(0.3));
  const auto b = dt::generate_synth(two_track_spec(0.3));
  EXPECT_EQ(a.dataset.outputs, b.dataset.outputs);
  EXPECT_EQ(a.dataset.inputs, b.dataset.inputs);
  auto other = two_track_spec(0.3);
  other.seed = 5;
  EXPECT_NE(dt::generate_synth(other).dataset.outputs, a.dataset.outputs);
}

TEST(Synth, DrivenInputsFollowLaggedOutputs) {
  auto s = two_track_spec(0.0);
  s.generator = dt::InputGenerator::DrivesOutputs;
  s.input_noise = 0.0;
  s.input_lag = 3;
  s.input_dim = 4;
  const auto d = dt::generate_synth(s).dataset;
  // Noiseless inputs are a fixed linear map of the lagged outputs.
  const Matrix lagged = d.outputs.topRows(197);
  const Matrix x = d.inputs.bottomRows(197);
  const Matrix w = lagged.colPivHouseholderQr().solve(x);
  EXPECT_LT((lagged * w - x).norm(), 1e-8 * x.norm());
}

TEST(Synth, ValidationErrors) {
  auto s = two_track_spec(0.0);
  s.outputs[0].breaks = {120, 50};
  EXPECT_THROW((void)dt::generate_synth(s), std::invalid_argument);
  s = two_track_spec(0.0);
  s.outputs[0].slopes.pop_back();
  EXPECT_THROW((void)dt::generate_synth(s), std::invalid_argument);
  s = two_track_spec(0.0);
  s.outputs[1].breaks = {200};
  EXPECT_THROW((void)dt::generate_synth(s), std::invalid_argument);
  s = two_track_spec(0.0);
  s.outputs.clear();
  EXPECT_THROW((void)dt::generate_synth(s), std::invalid_argument);
}

TEST(Maneuvers, BoundedPiecewiseLinearAndDeterministic) {
  const Matrix m = dt::maneuver_inputs(600, 3, 30.0, 8);
  EXPECT_EQ(m, dt::maneuver_inputs(600, 3, 30.0, 8));
  EXPECT_LE(m.cwiseAbs().maxCoeff(), 1.0 + 1e-12);
  for (Index c = 0; c < 3; ++c) {
    int kinks = 0;
    for (Index t = 2; t < 600; ++t) kinks += std::abs(m(t, c) - 2 * m(t - 1, c) + m(t - 2, c)) > 1e-9;
    EXPECT_GT(kinks, 5);
    EXPECT_LT(kinks, 120);
  }
}

dt::DomainShiftSpec stream_spec() {
  dt::DomainShiftSpec s;
  s.input_dim = 3;
  s.output_dim = 2;
  s.noise = 0.0;
  s.samples = {120, 80};
  s.seed = 12;
  dt::DomainShift d2;
  d2.output_gain = 0.5;
  d2.dynamics_delta = 0.05;
  d2.input_offset = Vector::Constant(3, 1.5);
  s.domains = {dt::DomainShift{}, d2};
  return s;
}

TEST(DomainStream, NoiselessDomainsObeyTheirRecursion) {
  const auto spec = stream_spec();
  const auto sys = dt::base_system(spec);
  EXPECT_NEAR(Eigen::EigenSolver<Matrix>(sys.a, false).eigenvalues().cwiseAbs().maxCoeff(), 0.8, 1e-9);
  const auto stream = dt::generate_domain_stream(spec);
  ASSERT_EQ(stream.size(), 2U);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& dom = spec.domains[k];
    const Matrix a = sys.a + dom.dynamics_delta * Matrix::Identity(2, 2);
    const auto& d = stream[k];
    for (Index t = 1; t < d.rows(); ++t) {
      const Vector expect =
          a * d.outputs.row(t - 1).transpose() + dom.output_gain * sys.b * d.inputs.row(t).transpose();
      EXPECT_LT((d.outputs.row(t).transpose() - expect).norm(), 1e-12);
    }
  }
  EXPECT_EQ(stream[0].domain_id, "D1");
  EXPECT_EQ(stream[1].domain_id, "D2");
  EXPECT_GE(stream[1].inputs.minCoeff(), 0.5 - 1e-12);
}

TEST(DomainStream, ShiftedDomainIsFarFromTheBaseResponse) {
  auto spec = stream_spec();
  spec.noise = 0.02;
  const auto sys = dt::base_system(spec);
  const auto d2 = dt::generate_domain_stream(spec)[1];
  // One-step residual of the base dynamics on the shifted domain versus the noise floor.
  double base_err = 0.0;
  for (Index t = 1; t < d2.rows(); ++t) {
    const Vector pred = sys.a * d2.outputs.row(t - 1).transpose() + sys.b * d2.inputs.row(t).transpose();
    base_err += (d2.outputs.row(t).transpose() - pred).cwiseAbs().mean();
  }
  base_err /= static_cast<double>(d2.rows() - 1);
  EXPECT_GT(base_err, 10 * spec.noise);
}

TEST(DomainStream, DeterministicAndValidated) {
  const auto a = dt::generate_domain_stream(stream_spec());
  const auto b = dt::generate_domain_stream(stream_spec());
  EXPECT_EQ(a[1].outputs, b[1].outputs);
  EXPECT_GT((a[0].inputs.topRows(80).array() - (a[1].inputs.array() - 1.5)).abs().maxCoeff(), 0.1);
  auto s = stream_spec();
  s.domains[1].dynamics_delta = 0.5;
  EXPECT_THROW((void)dt::generate_domain_stream(s), std::invalid_argument);
  s = stream_spec();
  s.samples = {10};
  EXPECT_THROW((void)dt::generate_domain_stream(s), std::invalid_argument);
  s = stream_spec();
  s.domains[1].input_offset = Vector::Zero(2);
  EXPECT_THROW((void)dt::generate_domain_stream(s), std::invalid_argument);
}

}  // namespace
