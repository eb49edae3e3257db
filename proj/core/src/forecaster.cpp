// SPDX-License-Identifier: Apache-2.0
#include "emreselect/forecaster.hpp"

#include "emreselect/errors.hpp"
#include "emreselect/json_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace emr::nn {

const TensorSlot& ParameterVector::add(std::string name, Index rows, Index cols, bool bias) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("tensor '" + name + "' has an empty shape");
  for (const auto& s : layout_) {
    if (s.name == name) throw std::invalid_argument("duplicate tensor name '" + name + "'");
  }
  TensorSlot slot{std::move(name), values_.size(), rows, cols, bias};
  values_.conservativeResize(values_.size() + slot.size());
  values_.tail(slot.size()).setZero();
  layout_.push_back(std::move(slot));
  return layout_.back();
}

const TensorSlot& ParameterVector::slot(std::string_view name) const {
  for (const auto& s : layout_) {
    if (s.name == name) return s;
  }
  throw std::invalid_argument("no tensor named '" + std::string(name) + "'");
}

Matrix ParameterVector::unpack(const TensorSlot& slot) const {
  return Eigen::Map<const Matrix>(values_.data() + slot.offset, slot.rows, slot.cols);
}

void ParameterVector::pack(const TensorSlot& slot, const Matrix& value) {
  if (value.rows() != slot.rows || value.cols() != slot.cols) {
    throw std::invalid_argument("pack: shape mismatch for tensor '" + slot.name + "'");
  }
  Eigen::Map<Matrix>(values_.data() + slot.offset, slot.rows, slot.cols) = value;
}

void ParameterVector::pack_gradient(const TensorSlot& slot, const Matrix& grad, Vector& into) const {
  Eigen::Map<Matrix>(into.data() + slot.offset, slot.rows, slot.cols) += grad;
}

bool ParameterVector::layout_is_partition() const {
  Index at = 0;
  for (const auto& s : layout_) {
    if (s.offset != at) return false;
    at += s.size();
  }
  return at == values_.size();
}

void Forecaster::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& slot : params_.layout()) {
    if (slot.bias) {
      params_.pack(slot, Matrix::Zero(slot.rows, slot.cols));
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(slot.rows + slot.cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(slot.rows, slot.cols);
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
    }
    params_.pack(slot, w);
  }
}

void Forecaster::check_window(const TdeWindow& w) const {
  if (w.input_block.rows() != order() || w.input_block.cols() != input_dim() ||
      w.decoder_history.rows() != order() || w.decoder_history.cols() != output_dim()) {
    throw std::invalid_argument("window shape (" + std::to_string(w.input_block.rows()) + "x" +
                                std::to_string(w.input_block.cols()) + ", " +
                                std::to_string(w.decoder_history.rows()) + "x" +
                                std::to_string(w.decoder_history.cols()) + ") does not match model (" +
                                std::to_string(order()) + "x" + std::to_string(input_dim()) + ", " +
                                std::to_string(order()) + "x" + std::to_string(output_dim()) + ")");
  }
}

std::unique_ptr<Forecaster> make_forecaster(const nlohmann::json& spec, Index input_dim, Index output_dim,
                                            std::uint64_t seed) {
  const std::string type = spec.value("type", "mlp");
  std::unique_ptr<Forecaster> model;
  if (type == "mlp") {
    MlpSpec s;
    s.order = spec.value("window", s.order);
    s.hidden = spec.value("hidden", s.hidden);
    s.input_dim = input_dim;
    s.output_dim = output_dim;
    model = std::make_unique<MlpForecaster>(s);
  } else if (type == "seq2seq") {
    Seq2SeqSpec s;
    s.order = spec.value("window", s.order);
    s.encoder_layers = spec.value("encoder_layers", s.encoder_layers);
    s.decoder_layers = spec.value("decoder_layers", s.decoder_layers);
    s.heads = spec.value("heads", s.heads);
    s.ff_width = spec.value("ff_width", s.ff_width);
    s.model_width = spec.value("model_width", s.model_width);
    s.input_dim = input_dim;
    s.output_dim = output_dim;
    model = std::make_unique<Seq2SeqForecaster>(s);
  } else {
    throw std::invalid_argument("unknown model type '" + type + "'");
  }
  model->initialize(seed);
  return model;
}

Matrix rollout(const Forecaster& model, const TimeSeriesDataset& dataset, Index start, Index steps) {
  const Index n = dataset.rows();
  if (start < model.order() || steps < 1 || start + steps > n) {
    throw std::invalid_argument("rollout range [" + std::to_string(start) + ", " +
                                std::to_string(start + steps) + ") invalid for " + std::to_string(n) +
                                " rows and window " + std::to_string(model.order()));
  }
  Matrix history = dataset.outputs;
  Matrix out(steps, dataset.output_dim());
  for (Index k = 0; k < steps; ++k) {
    const Index t = start + k;
    const TdeWindow w = tde_window(dataset, t, model.order(), HistorySource::from(history));
    const Vector y = model.predict(w);
    if (!y.allFinite()) throw NumericError("rollout produced a non-finite prediction at row " + std::to_string(t));
    out.row(k) = y.transpose();
    history.row(t) = y.transpose();
  }
  return out;
}

Vector mae_per_output(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() || predicted.rows() == 0) {
    throw std::invalid_argument("mae_per_output: shape mismatch");
  }
  return (predicted - truth).cwiseAbs().colwise().mean().transpose();
}

nlohmann::json checkpoint_to_json(const Forecaster& model, const Scaler& scaler, std::uint64_t rng_seed) {
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& s : model.parameters().layout()) {
    layout.push_back({{"name", s.name}, {"offset", s.offset}, {"rows", s.rows}, {"cols", s.cols}, {"bias", s.bias}});
  }
  return {
      {"format", "emreselect-checkpoint"},
      {"version", 1},
      {"spec", model.spec_json()},
      {"layout", layout},
      {"theta", io::vector_to_json(model.parameters().values())},
      {"scaler", io::scaler_to_json(scaler)},
      {"rng_seed", rng_seed},
  };
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "emreselect-checkpoint") throw ParseError("not an emreselect checkpoint");
  const auto& spec = j.at("spec");
  Checkpoint ck;
  ck.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  ck.model = make_forecaster(spec, spec.at("input_dim").get<Index>(), spec.at("output_dim").get<Index>(), 0);
  const auto& layout = ck.model->parameters().layout();
  const auto& stored = j.at("layout");
  if (stored.size() != layout.size()) throw ParseError("checkpoint layout does not match its spec");
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (stored[i].at("name") != layout[i].name || stored[i].at("offset").get<Index>() != layout[i].offset ||
        stored[i].at("rows").get<Index>() != layout[i].rows || stored[i].at("cols").get<Index>() != layout[i].cols) {
      throw ParseError("checkpoint tensor '" + layout[i].name + "' does not match its spec");
    }
  }
  Vector theta = io::vector_from_json(j.at("theta"));
  if (theta.size() != ck.model->parameters().size()) throw ParseError("checkpoint theta has the wrong length");
  ck.model->parameters().values() = theta;
  ck.scaler = io::scaler_from_json(j.at("scaler"));
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Forecaster& model, const Scaler& scaler,
                     std::uint64_t rng_seed) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model, scaler, rng_seed).dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace emr::nn
