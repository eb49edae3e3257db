// SPDX-License-Identifier: Apache-2.0
#include "emreselect/forecaster.hpp"

#include <stdexcept>

namespace emr::nn {

void MlpSpec::validate() const {
  if (order < 1 || input_dim < 0 || output_dim < 1) throw std::invalid_argument("MLP spec: bad dimensions");
  for (Index h : hidden) {
    if (h < 1) throw std::invalid_argument("MLP spec: hidden widths must be >= 1");
  }
}

MlpForecaster::MlpForecaster(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  Index fan_in = spec_.feature_width();
  for (std::size_t l = 0; l < spec_.hidden.size(); ++l) {
    params_.add("layer" + std::to_string(l) + ".W", fan_in, spec_.hidden[l]);
    params_.add("layer" + std::to_string(l) + ".b", 1, spec_.hidden[l], true);
    fan_in = spec_.hidden[l];
  }
  params_.add("out.W", fan_in, spec_.output_dim);
  params_.add("out.b", 1, spec_.output_dim, true);
}

Vector MlpForecaster::features(const TdeWindow& window) {
  const Index d = window.input_block.rows();
  const Index p = window.input_block.cols();
  const Index q = window.decoder_history.cols();
  Vector f(d * (p + q));
  Index at = 0;
  for (Index r = 0; r < d; ++r) {
    for (Index c = 0; c < p; ++c) f(at++) = window.input_block(r, c);
  }
  for (Index r = 0; r < d; ++r) {
    for (Index c = 0; c < q; ++c) f(at++) = window.decoder_history(r, c);
  }
  return f;
}

ad::Var MlpForecaster::forward(ad::Tape& tape, ad::Var x, std::vector<ad::Var>& leaves) const {
  const auto& layout = params_.layout();
  leaves.clear();
  for (const auto& slot : layout) leaves.push_back(tape.leaf(params_.unpack(slot)));
  ad::Var h = x;
  const std::size_t layers = spec_.hidden.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.relu(tape.add_row(tape.matmul(h, leaves[2 * l]), leaves[2 * l + 1]));
  }
  return tape.add_row(tape.matmul(h, leaves[2 * layers]), leaves[2 * layers + 1]);
}

Vector MlpForecaster::predict(const TdeWindow& window) const {
  check_window(window);
  // Plain Eigen evaluation of the same affine/ReLU stack as forward().
  Eigen::RowVectorXd h = features(window).transpose();
  const std::size_t layers = spec_.hidden.size();
  const auto& layout = params_.layout();
  for (std::size_t l = 0; l < layers; ++l) {
    h = ((h * params_.unpack(layout[2 * l])) + params_.unpack(layout[2 * l + 1])).cwiseMax(0.0);
  }
  return ((h * params_.unpack(layout[2 * layers])) + params_.unpack(layout[2 * layers + 1])).transpose();
}

LossGradient MlpForecaster::loss_and_gradient(std::span<const TdeWindow> windows) const {
  if (windows.empty()) throw std::invalid_argument("loss_and_gradient on an empty window list");
  const auto n = static_cast<Index>(windows.size());
  Matrix x(n, spec_.feature_width());
  Matrix y(n, spec_.output_dim);
  for (Index i = 0; i < n; ++i) {
    const auto& w = windows[static_cast<std::size_t>(i)];
    check_window(w);
    x.row(i) = features(w).transpose();
    y.row(i) = w.target.transpose();
  }
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  const ad::Var xin = tape.leaf(std::move(x));
  const ad::Var pred = forward(tape, xin, leaves);
  const ad::Var loss = tape.scale(tape.sum_squares(tape.sub(pred, tape.leaf(std::move(y)))), 1.0 / static_cast<double>(n));
  tape.backward(loss);

  LossGradient out;
  out.risk = tape.value(loss)(0, 0);
  out.gradient = Vector::Zero(params_.size());
  const auto& layout = params_.layout();
  for (std::size_t i = 0; i < layout.size(); ++i) params_.pack_gradient(layout[i], tape.grad(leaves[i]), out.gradient);
  return out;
}

nlohmann::json MlpForecaster::spec_json() const {
  return {{"type", "mlp"},
          {"window", spec_.order},
          {"hidden", spec_.hidden},
          {"input_dim", spec_.input_dim},
          {"output_dim", spec_.output_dim}};
}

std::unique_ptr<Forecaster> MlpForecaster::clone() const { return std::make_unique<MlpForecaster>(*this); }

}  // namespace emr::nn
