// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/autodiff.hpp"
#include "emreselect/core.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emr::nn {

/// Named slice of the flat parameter vector holding a rows x cols tensor
/// (column-major, matching Eigen's default storage).
struct TensorSlot {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  bool bias = false;

  [[nodiscard]] Index size() const { return rows * cols; }
};

/// Flat parameter vector plus the layout that partitions it into tensors.
class ParameterVector {
 public:
  const TensorSlot& add(std::string name, Index rows, Index cols, bool bias = false);

  [[nodiscard]] Vector& values() { return values_; }
  [[nodiscard]] const Vector& values() const { return values_; }
  [[nodiscard]] Index size() const { return values_.size(); }
  [[nodiscard]] const std::vector<TensorSlot>& layout() const { return layout_; }
  [[nodiscard]] const TensorSlot& slot(std::string_view name) const;

  [[nodiscard]] Matrix unpack(const TensorSlot& slot) const;
  void pack(const TensorSlot& slot, const Matrix& value);
  void pack_gradient(const TensorSlot& slot, const Matrix& grad, Vector& into) const;

  /// Slices are contiguous, in order, and cover [0, size()) exactly.
  [[nodiscard]] bool layout_is_partition() const;

 private:
  std::vector<TensorSlot> layout_;
  Vector values_;
};

struct LossGradient {
  double risk = 0.0;
  Vector gradient;
};

/// Neural forecaster f(window; theta). Parameters live in a flat vector so
/// optimizers and projections operate on plain vectors.
class Forecaster : public Predictor {
 public:
  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual Index order() const = 0;
  [[nodiscard]] virtual Index input_dim() const = 0;
  [[nodiscard]] virtual nlohmann::json spec_json() const = 0;
  [[nodiscard]] virtual std::unique_ptr<Forecaster> clone() const = 0;

  /// Risk over `windows` and its exact gradient with respect to theta.
  [[nodiscard]] virtual LossGradient loss_and_gradient(std::span<const TdeWindow> windows) const = 0;

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void initialize(std::uint64_t seed);

  [[nodiscard]] ParameterVector& parameters() { return params_; }
  [[nodiscard]] const ParameterVector& parameters() const { return params_; }

 protected:
  void check_window(const TdeWindow& w) const;

  ParameterVector params_;
};

struct MlpSpec {
  Index order = 8;
  Index input_dim = 1;
  Index output_dim = 1;
  std::vector<Index> hidden = {32, 32};

  void validate() const;
  [[nodiscard]] Index feature_width() const { return order * (input_dim + output_dim); }
};

/// Affine/ReLU stack over the flattened window: input rows (row-major)
/// followed by decoder-history rows.
class MlpForecaster final : public Forecaster {
 public:
  explicit MlpForecaster(MlpSpec spec);

  [[nodiscard]] Vector predict(const TdeWindow& window) const override;
  [[nodiscard]] Index output_dim() const override { return spec_.output_dim; }
  [[nodiscard]] std::string kind() const override { return "mlp"; }
  [[nodiscard]] Index order() const override { return spec_.order; }
  [[nodiscard]] Index input_dim() const override { return spec_.input_dim; }
  [[nodiscard]] nlohmann::json spec_json() const override;
  [[nodiscard]] std::unique_ptr<Forecaster> clone() const override;
  [[nodiscard]] LossGradient loss_and_gradient(std::span<const TdeWindow> windows) const override;

  [[nodiscard]] const MlpSpec& spec() const { return spec_; }
  [[nodiscard]] static Vector features(const TdeWindow& window);

 private:
  ad::Var forward(ad::Tape& tape, ad::Var x, std::vector<ad::Var>& leaves) const;

  MlpSpec spec_;
};

struct Seq2SeqSpec {
  Index encoder_layers = 2;
  Index decoder_layers = 2;
  Index heads = 2;
  Index ff_width = 64;
  Index model_width = 32;
  Index order = 16;
  Index input_dim = 1;
  Index output_dim = 1;

  void validate() const;
};

/// Parameter tensors of one multi-head attention block.
struct AttentionParams {
  ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product multi-head attention. Queries come from `query_src`,
/// keys and values from `kv_src`. When `weights` is non-null the post-softmax
/// matrix of every head is appended to it.
ad::Var multi_head_attention(ad::Tape& tape, ad::Var query_src, ad::Var kv_src, const AttentionParams& p,
                             Index heads, bool causal, std::vector<Matrix>* weights = nullptr);

/// Sinusoidal positional encoding, rows = positions.
[[nodiscard]] Matrix positional_encoding(Index positions, Index width);

struct Seq2SeqTrace {
  Vector prediction;
  std::vector<Matrix> attention;  // every head of every block, forward order
  Matrix decoder_states;          // final decoder layer, one row per position
};

/// Encoder-decoder attention forecaster: the encoder reads the input block,
/// the decoder reads the output history under a causal mask, and a ReLU
/// feedforward head maps the final decoder position to q outputs.
class Seq2SeqForecaster final : public Forecaster {
 public:
  explicit Seq2SeqForecaster(Seq2SeqSpec spec);

  [[nodiscard]] Vector predict(const TdeWindow& window) const override;
  [[nodiscard]] Index output_dim() const override { return spec_.output_dim; }
  [[nodiscard]] std::string kind() const override { return "seq2seq"; }
  [[nodiscard]] Index order() const override { return spec_.order; }
  [[nodiscard]] Index input_dim() const override { return spec_.input_dim; }
  [[nodiscard]] nlohmann::json spec_json() const override;
  [[nodiscard]] std::unique_ptr<Forecaster> clone() const override;
  [[nodiscard]] LossGradient loss_and_gradient(std::span<const TdeWindow> windows) const override;

  [[nodiscard]] Seq2SeqTrace trace(const TdeWindow& window) const;
  [[nodiscard]] const Seq2SeqSpec& spec() const { return spec_; }

 private:
  struct Graph;
  ad::Var forward(ad::Tape& tape, const TdeWindow& window, Graph& graph) const;

  Seq2SeqSpec spec_;
};

/// Builds an initialized model from a spec object ({"type": "mlp" | "seq2seq", ...}).
[[nodiscard]] std::unique_ptr<Forecaster> make_forecaster(const nlohmann::json& spec, Index input_dim,
                                                          Index output_dim, std::uint64_t seed);

/// Free-running prediction for rows [start, start + steps): history before
/// `start` is ground truth, afterwards the model's own predictions.
[[nodiscard]] Matrix rollout(const Forecaster& model, const TimeSeriesDataset& dataset, Index start,
                             Index steps);

/// Mean absolute error of each column.
[[nodiscard]] Vector mae_per_output(const Matrix& predicted, const Matrix& truth);

struct Checkpoint {
  std::unique_ptr<Forecaster> model;
  Scaler scaler;
  std::uint64_t rng_seed = 0;
};

[[nodiscard]] nlohmann::json checkpoint_to_json(const Forecaster& model, const Scaler& scaler,
                                                std::uint64_t rng_seed);
[[nodiscard]] Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const Forecaster& model, const Scaler& scaler,
                     std::uint64_t rng_seed);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace emr::nn
