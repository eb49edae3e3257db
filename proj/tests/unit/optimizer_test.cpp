// SPDX-License-Identifier: Apache-2.0
#include "emreselect/data.hpp"
#include "emreselect/errors.hpp"
#include "emreselect/optimizer.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

namespace {

namespace cl = emr::cl;
namespace nn = emr::nn;
using emr::Index;
using emr::Vector;

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

TEST(ProjectAgem, HandExamples) {
  auto o = cl::project_agem(v2(1, 0), v2(0, 1));
  EXPECT_EQ(o.kind, cl::ProjectionCase::NoConflict);
  EXPECT_EQ(o.g_tilde, v2(1, 0));

  o = cl::project_agem(v2(1, -1), v2(0, 1));
  EXPECT_EQ(o.kind, cl::ProjectionCase::ProjectNew);
  EXPECT_NEAR((o.g_tilde - v2(1, 0)).norm(), 0.0, 1e-15);

  o = cl::project_agem(v2(-1, -1), v2(1, 1));
  EXPECT_NEAR(o.g_tilde.norm(), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(o.inner_product, -2.0);
}

TEST(ProjectAgem, LengthMismatchAndZeroMemory) {
  EXPECT_THROW((void)cl::project_agem(Vector::Ones(2), Vector::Ones(3)), std::invalid_argument);
  const auto o = cl::project_agem(v2(1, -1), Vector::Zero(2));
  EXPECT_EQ(o.kind, cl::ProjectionCase::NoConflict);
  EXPECT_EQ(o.g_tilde, v2(1, -1));
}

TEST(ProjectModified, HandExamples) {
  auto o = cl::project_modified(v2(1, -1), v2(0, 1));
  EXPECT_EQ(o.kind, cl::ProjectionCase::ProjectNew);
  EXPECT_NEAR((o.g_tilde - v2(1, 0)).norm(), 0.0, 1e-15);

  o = cl::project_modified(v2(0.1, -0.1), v2(0, 1));
  EXPECT_EQ(o.kind, cl::ProjectionCase::ProjectMemory);
  EXPECT_NEAR((o.g_tilde - v2(0.5, 0.5)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(o.g_tilde.dot(v2(0.1, -0.1)), 0.0, 1e-15);
  EXPECT_NEAR(o.g_tilde.dot(v2(0, 1)), 0.5, 1e-12);

  o = cl::project_modified(v2(1, 1), v2(1, 1));
  EXPECT_EQ(o.kind, cl::ProjectionCase::NoConflict);
  EXPECT_EQ(o.g_tilde, v2(1, 1));
}

TEST(ProjectModified, EqualNormsTakeTheNewBranch) {
  const auto o = cl::project_modified(v2(1, 0), v2(-0.6, 0.8));
  EXPECT_EQ(o.kind, cl::ProjectionCase::ProjectNew);
}

TEST(ProjectModified, ZeroNewGradientReturnsMemory) {
  const auto o = cl::project_modified(Vector::Zero(2), v2(0, 1));
  EXPECT_EQ(o.kind, cl::ProjectionCase::NoConflict);
  const auto tiny = cl::project_modified(v2(1e-14, -1e-13), v2(0, 1));
  EXPECT_EQ(tiny.kind, cl::ProjectionCase::ProjectMemory);
  EXPECT_EQ(tiny.g_tilde, v2(0, 1));
}

TEST(ProjectionProperty, ConstraintsHoldOnRandomPairs) {
  emr::gen::Gen g(42);
  for (int trial = 0; trial < 2000; ++trial) {
    const Index n = g.integer(2, 50);
    Vector gn = g.vector(n, g.uniform(0.01, 10));
    const Vector gm = g.vector(n, g.uniform(0.01, 10));
    const auto m = cl::project_modified(gn, gm);
    const double scale = m.g_tilde.norm() * gm.norm();
    EXPECT_GE(m.g_tilde.dot(gm), -1e-9 * std::max(1.0, scale));
    EXPECT_EQ(m.kind == cl::ProjectionCase::NoConflict, m.inner_product >= 0.0);
    if (m.kind != cl::ProjectionCase::NoConflict) {
      EXPECT_GE(m.g_tilde.dot(gn), -1e-9 * std::max(1.0, m.g_tilde.norm() * gn.norm()));
    }
    const auto a = cl::project_agem(gn, gm);
    if (gn.norm() >= gm.norm()) {
      EXPECT_EQ(a.g_tilde, m.g_tilde);
    }
    const double c = g.uniform(0.1, 10);
    const auto scaled = cl::project_agem(c * gn, gm);
    EXPECT_LE((scaled.g_tilde - c * a.g_tilde).norm(), 1e-12 * std::max(1.0, c * a.g_tilde.norm()));
  }
}

TEST(OptimizerStep, ZeroGradientLeavesThetaUnchanged) {
  Vector theta = v2(0.3, -0.2);
  auto st = cl::OptimizerState::for_size(2, 0.01);
  cl::optimizer_step(theta, Vector::Zero(2), st);
  EXPECT_EQ(theta, v2(0.3, -0.2));
  EXPECT_EQ(st.step, 1);
}

TEST(OptimizerStep, FirstStepMovesByTheLearningRate) {
  Vector theta = Vector::Zero(4);
  auto st = cl::OptimizerState::for_size(4, 0.01);
  cl::optimizer_step(theta, Vector::Ones(4), st);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(theta(i), -0.01 / (1.0 + 1e-8), 1e-15);
}

TEST(OptimizerStep, HandEvaluatedSecondStep) {
  Vector theta = Vector::Zero(1);
  auto st = cl::OptimizerState::for_size(1, 0.1, 0.9, 0.95);
  cl::optimizer_step(theta, Vector::Constant(1, 2.0), st);
  cl::optimizer_step(theta, Vector::Constant(1, -1.0), st);
  const double m = 0.9 * (0.1 * 2.0) + 0.1 * -1.0;
  const double v = 0.95 * (0.05 * 4.0) + 0.05 * 1.0;
  const double m_hat = m / (1 - 0.81);
  const double v_hat = v / (1 - 0.95 * 0.95);
  EXPECT_NEAR(theta(0), -0.2 / (2.0 + 1e-8) - 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-14);
}

TEST(OptimizerStep, RepeatedStepsMoveAgainstTheGradient) {
  Vector theta = Vector::Zero(3);
  const Vector g = (Vector(3) << 1.0, -2.0, 0.5).finished();
  auto st = cl::OptimizerState::for_size(3, 0.01);
  cl::optimizer_step(theta, g, st);
  const Vector after_one = theta;
  cl::optimizer_step(theta, g, st);
  for (Index i = 0; i < 3; ++i) {
    EXPECT_LT(after_one(i) * g(i), 0.0);
    EXPECT_GT(std::abs(theta(i)), std::abs(after_one(i)));
  }
}

TEST(OptimizerStep, NonFiniteGradientAbortsWithoutSideEffects) {
  Vector theta = v2(1, 2);
  auto st = cl::OptimizerState::for_size(2, 0.01);
  cl::optimizer_step(theta, v2(0.5, 0.5), st);
  const auto before = st;
  const Vector theta_before = theta;
  EXPECT_THROW(cl::optimizer_step(theta, v2(std::numeric_limits<double>::quiet_NaN(), 0), st), emr::NumericError);
  EXPECT_EQ(theta, theta_before);
  EXPECT_EQ(st.step, before.step);
  EXPECT_EQ(st.first_moment, before.first_moment);
  EXPECT_EQ(st.second_moment, before.second_moment);
  EXPECT_THROW(cl::optimizer_step(theta, Vector::Ones(3), st), std::invalid_argument);
}

TEST(Strategy, NamesAndValidation) {
  for (auto k : {cl::StrategyKind::Batch, cl::StrategyKind::None, cl::StrategyKind::AGem, cl::StrategyKind::EmReselect}) {
    EXPECT_EQ(cl::strategy_from_string(cl::to_string(k)), k);
  }
  EXPECT_THROW((void)cl::strategy_from_string("SI"), std::invalid_argument);
  cl::Strategy s;
  s.kind = cl::StrategyKind::AGem;
  s.agem_memory_size = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

// Small two-domain problem, standardized with the D1 scaler.
struct TwoDomains {
  emr::TimeSeriesDataset d1, d1_test, d2;
  emr::Scaler scaler;
};

TwoDomains two_domains(std::uint64_t seed) {
  emr::data::DomainShiftSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 2;
  spec.maneuver_period = 20;
  spec.samples = {360, 150};
  spec.seed = seed;
  emr::data::DomainShift shifted;
  shifted.output_gain = 0.4;
  shifted.input_offset = Vector::Constant(2, 1.5);
  spec.domains = {emr::data::DomainShift{}, shifted};
  const auto stream = emr::data::generate_domain_stream(spec);
  TwoDomains t;
  const auto train = stream[0].slice(0, 260);
  t.scaler = emr::fit_scaler(train);
  t.d1 = t.scaler.apply(train);
  t.d1_test = t.scaler.apply(stream[0].slice(260, 360));
  t.d2 = t.scaler.apply(stream[1]);
  return t;
}

std::unique_ptr<nn::Forecaster> small_model(std::uint64_t seed) {
  return nn::make_forecaster({{"type", "mlp"}, {"window", 4}, {"hidden", {12}}}, 2, 2, seed);
}

cl::TrainConfig quick(int epochs, double lr = 0.01) {
  cl::TrainConfig c;
  c.max_epochs = epochs;
  c.learning_rate = lr;
  c.stop_mse = 0.0;
  return c;
}

TEST(TrainInitial, LinearTargetReachesStopRule) {
  auto d = emr::gen::random_dataset(200, 1, 1, 3);
  for (Index t = 1; t < 200; ++t) d.outputs(t, 0) = 0.6 * d.outputs(t - 1, 0) + 0.5 * d.inputs(t, 0);
  auto model = nn::make_forecaster({{"type", "mlp"}, {"window", 2}, {"hidden", {16}}}, 1, 1, 1);
  cl::TrainConfig c;
  c.max_epochs = 2000;
  const auto report = cl::train_initial(*model, d, c);
  ASSERT_TRUE(report.final_new_risk.has_value());
  EXPECT_LT(*report.final_new_risk, 1e-3);
  EXPECT_LT(report.epochs_run(), 2000U);
  for (const auto& e : report.epochs) EXPECT_TRUE(std::isfinite(e.new_risk));
}

TEST(TrainInitial, ZeroEpochsLeavesModelUnchanged) {
  const auto t = two_domains(1);
  auto model = small_model(2);
  const Vector before = model->parameters().values();
  const auto report = cl::train_initial(*model, t.d1, quick(0));
  EXPECT_EQ(model->parameters().values(), before);
  EXPECT_EQ(report.epochs_run(), 0U);
}

TEST(TrainInitial, ReportLengthMatchesEpochsAndJson) {
  const auto t = two_domains(1);
  auto model = small_model(2);
  const auto report = cl::train_initial(*model, t.d1, quick(7));
  EXPECT_EQ(report.epochs_run(), 7U);
  const auto j = report.to_json();
  EXPECT_EQ(j.at("epochs").size(), 7U);
  EXPECT_FALSE(j.contains("wall_seconds"));
  EXPECT_TRUE(report.to_json(true).contains("wall_seconds"));
}

class Continual : public ::testing::Test {
 protected:
  void SetUp() override {
    data = two_domains(5);
    initial = small_model(3);
    auto c = quick(400);
    c.stop_mse = 1e-3;
    (void)cl::train_initial(*initial, data.d1, c);
  }
  cl::Strategy strategy(cl::StrategyKind k) const {
    cl::Strategy s;
    s.kind = k;
    s.agem_memory_size = 30;
    return s;
  }
  TwoDomains data;
  std::unique_ptr<nn::Forecaster> initial;
};

TEST_F(Continual, NoneForgetsTheOldDomain) {
  auto model = initial->clone();
  emr::MemoryBuffer memory;
  (void)cl::train_continual(*model, data.d2, memory, strategy(cl::StrategyKind::None), quick(150, 0.003));
  const std::vector<cl::EvalSet> sets{{"D1-test", &data.d1_test}};
  const auto rows = cl::forgetting_metrics(*initial, *model, sets, data.scaler);
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_GT(rows[0].forgetting.mean(), 0.0);
  const auto d1w = emr::all_windows(data.d1_test, 4);
  EXPECT_GT(emr::empirical_risk(*model, d1w), emr::empirical_risk(*initial, d1w));
  EXPECT_TRUE(memory.empty());
}

TEST_F(Continual, ForgettingOfAnUnchangedModelIsZero) {
  const std::vector<cl::EvalSet> sets{{"D1-test", &data.d1_test}, {"D2", &data.d2}};
  for (const auto& row : cl::forgetting_metrics(*initial, *initial, sets, data.scaler)) {
    EXPECT_TRUE(row.forgetting.isZero(0.0));
  }
}

TEST_F(Continual, ModifiedProjectionProtectsMemoryRisk) {
  emr::MemoryBuffer memory;
  memory.append(cl::representatives_for(strategy(cl::StrategyKind::EmReselect), data.d1, 4, 0));
  ASSERT_FALSE(memory.empty());
  auto projected = initial->clone();
  auto plain = initial->clone();
  emr::MemoryBuffer m1 = memory;
  emr::MemoryBuffer m2 = memory;
  const auto rp = cl::train_continual(*projected, data.d2, m1, strategy(cl::StrategyKind::EmReselect), quick(150, 0.003));
  const auto rn = cl::train_continual(*plain, data.d2, m2, strategy(cl::StrategyKind::None), quick(150, 0.003));
  ASSERT_TRUE(rp.final_memory_risk && rn.final_memory_risk);
  EXPECT_LE(*rp.final_memory_risk, *rn.final_memory_risk);
  ASSERT_EQ(rp.epochs.size(), 150U);
  for (const auto& e : rp.epochs) {
    ASSERT_TRUE(e.memory_risk.has_value());
    EXPECT_EQ(e.no_conflict + e.project_new + e.project_memory, 1U);
  }
  EXPECT_GT(m1.size(), memory.size());
  EXPECT_EQ(m2.size(), memory.size());
}

TEST_F(Continual, BatchEqualsInitialTrainingOnTheConcatenation) {
  auto via_batch = initial->clone();
  auto direct = initial->clone();
  emr::MemoryBuffer memory;
  const std::vector<emr::TimeSeriesDataset> history{data.d1};
  (void)cl::train_continual(*via_batch, data.d2, memory, strategy(cl::StrategyKind::Batch), quick(20, 0.003), history);
  auto all = emr::all_windows(data.d1, 4);
  const auto extra = emr::all_windows(data.d2, 4);
  all.insert(all.end(), extra.begin(), extra.end());
  (void)cl::train_initial(*direct, all, quick(20, 0.003));
  EXPECT_EQ(via_batch->parameters().values(), direct->parameters().values());
}

TEST_F(Continual, DeterministicGivenSeedAndConfig) {
  for (auto kind : {cl::StrategyKind::AGem, cl::StrategyKind::EmReselect}) {
    emr::MemoryBuffer m1, m2;
    m1.append(cl::representatives_for(strategy(cl::StrategyKind::AGem), data.d1, 4, 1));
    m2 = m1;
    auto a = initial->clone();
    auto b = initial->clone();
    auto c = quick(30, 0.003);
    c.batch_size = 32;
    c.seed = 9;
    (void)cl::train_continual(*a, data.d2, m1, strategy(kind), c);
    (void)cl::train_continual(*b, data.d2, m2, strategy(kind), c);
    EXPECT_EQ(a->parameters().values(), b->parameters().values());
    EXPECT_EQ(m1.size(), m2.size());
  }
}

TEST_F(Continual, EmptyMemoryDegradesWithAWarning) {
  auto a = initial->clone();
  auto b = initial->clone();
  emr::MemoryBuffer empty1, empty2;
  const auto ra = cl::train_continual(*a, data.d2, empty1, strategy(cl::StrategyKind::AGem), quick(10, 0.003));
  (void)cl::train_continual(*b, data.d2, empty2, strategy(cl::StrategyKind::None), quick(10, 0.003));
  ASSERT_EQ(ra.warnings.size(), 1U);
  EXPECT_EQ(a->parameters().values(), b->parameters().values());
  EXPECT_EQ(empty1.size(), 30U);
  EXPECT_FALSE(ra.final_memory_risk.has_value());
}

TEST_F(Continual, SelectionNeverInflatesMemoryBeyondCandidates) {
  emr::sel::SelectionStats stats;
  const auto em = cl::representatives_for(strategy(cl::StrategyKind::EmReselect), data.d1, 4, 0, &stats);
  auto agem = strategy(cl::StrategyKind::AGem);
  agem.agem_memory_size = std::max<std::size_t>(1, stats.concatenated);
  const auto ag = cl::representatives_for(agem, data.d1, 4, 0);
  EXPECT_LE(em.size(), ag.size());
  EXPECT_EQ(ag.size(), stats.concatenated);
  for (const auto& e : em) EXPECT_EQ(e.domain_id, data.d1.domain_id);
}

TEST_F(Continual, MemoryCapTruncatesByPriorityOrPads) {
  auto s = strategy(cl::StrategyKind::EmReselect);
  const auto full = cl::representatives_for(s, data.d1, 4, 0);
  ASSERT_GE(full.size(), 2U);
  s.memory_cap = full.size() - 1;
  const auto capped = cl::representatives_for(s, data.d1, 4, 0);
  ASSERT_EQ(capped.size(), full.size() - 1);
  double lowest = full.front().priority;
  for (const auto& e : full) lowest = std::min(lowest, e.priority);
  for (const auto& e : capped) EXPECT_GE(e.priority, lowest);
  s.memory_cap = full.size() + 10;
  const auto padded = cl::representatives_for(s, data.d1, 4, 0);
  EXPECT_EQ(padded.size(), full.size() + 10);
  std::set<Index> unique;
  for (const auto& e : padded) unique.insert(e.window.origin_index);
  EXPECT_EQ(unique.size(), padded.size());
}

}  // namespace
