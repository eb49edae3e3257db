// SPDX-License-Identifier: Apache-2.0
#include "emreselect/forecaster.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace emr::nn {

void Seq2SeqSpec::validate() const {
  if (encoder_layers < 1 || decoder_layers < 1) throw std::invalid_argument("seq2seq spec: need >= 1 layer each");
  if (heads < 1 || model_width < 1 || model_width % heads != 0) {
    throw std::invalid_argument("seq2seq spec: model_width must be a positive multiple of heads");
  }
  if (ff_width < 1 || order < 1 || input_dim < 1 || output_dim < 1) {
    throw std::invalid_argument("seq2seq spec: bad dimensions");
  }
}

Matrix positional_encoding(Index positions, Index width) {
  Matrix pe(positions, width);
  for (Index pos = 0; pos < positions; ++pos) {
    for (Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      pe(pos, i) = (i % 2 == 0) ? std::sin(static_cast<double>(pos) * rate) : std::cos(static_cast<double>(pos) * rate);
    }
  }
  return pe;
}

ad::Var multi_head_attention(ad::Tape& tape, ad::Var query_src, ad::Var kv_src, const AttentionParams& p,
                             Index heads, bool causal, std::vector<Matrix>* weights) {
  const ad::Var q = tape.add_row(tape.matmul(query_src, p.wq), p.bq);
  const ad::Var k = tape.add_row(tape.matmul(kv_src, p.wk), p.bk);
  const ad::Var v = tape.add_row(tape.matmul(kv_src, p.wv), p.bv);
  const Index width = tape.value(q).cols();
  if (width % heads != 0) throw std::invalid_argument("attention width not divisible by heads");
  const Index dk = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    const ad::Var qh = tape.cols(q, h * dk, dk);
    const ad::Var kh = tape.cols(k, h * dk, dk);
    const ad::Var vh = tape.cols(v, h * dk, dk);
    const ad::Var a = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt), causal);
    if (weights) weights->push_back(tape.value(a));
    outs.push_back(tape.matmul(a, vh));
  }
  const ad::Var merged = heads == 1 ? outs.front() : tape.hconcat(outs);
  return tape.add_row(tape.matmul(merged, p.wo), p.bo);
}

namespace {

void add_attention(ParameterVector& params, const std::string& prefix, Index width) {
  for (const char* m : {"q", "k", "v", "o"}) {
    params.add(prefix + ".W" + m, width, width);
    params.add(prefix + ".b" + m, 1, width, true);
  }
}

void add_ff(ParameterVector& params, const std::string& prefix, Index width, Index hidden) {
  params.add(prefix + ".W1", width, hidden);
  params.add(prefix + ".b1", 1, hidden, true);
  params.add(prefix + ".W2", hidden, width);
  params.add(prefix + ".b2", 1, width, true);
}

}  // namespace

struct Seq2SeqForecaster::Graph {
  std::vector<ad::Var> leaves;
  std::unordered_map<std::string, ad::Var> by_name;
  std::vector<Matrix>* attention = nullptr;
  ad::Var decoder_states;

  ad::Var operator[](const std::string& name) const { return by_name.at(name); }
  AttentionParams attention_params(const std::string& prefix) const {
    const Graph& g = *this;
    return {g[prefix + ".Wq"], g[prefix + ".bq"], g[prefix + ".Wk"], g[prefix + ".bk"],
            g[prefix + ".Wv"], g[prefix + ".bv"], g[prefix + ".Wo"], g[prefix + ".bo"]};
  }
};

Seq2SeqForecaster::Seq2SeqForecaster(Seq2SeqSpec spec) : spec_(spec) {
  spec_.validate();
  const Index w = spec_.model_width;
  params_.add("enc.in.W", spec_.input_dim, w);
  params_.add("enc.in.b", 1, w, true);
  for (Index l = 0; l < spec_.encoder_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l);
    add_attention(params_, pre + ".self", w);
    add_ff(params_, pre + ".ff", w, spec_.ff_width);
  }
  params_.add("dec.in.W", spec_.output_dim, w);
  params_.add("dec.in.b", 1, w, true);
  for (Index l = 0; l < spec_.decoder_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l);
    add_attention(params_, pre + ".self", w);
    add_attention(params_, pre + ".cross", w);
    add_ff(params_, pre + ".ff", w, spec_.ff_width);
  }
  params_.add("head.W1", w, spec_.ff_width);
  params_.add("head.b1", 1, spec_.ff_width, true);
  params_.add("head.W2", spec_.ff_width, spec_.output_dim);
  params_.add("head.b2", 1, spec_.output_dim, true);
}

ad::Var Seq2SeqForecaster::forward(ad::Tape& tape, const TdeWindow& window, Graph& g) const {
  check_window(window);
  for (const auto& slot : params_.layout()) {
    const ad::Var v = tape.leaf(params_.unpack(slot));
    g.leaves.push_back(v);
    g.by_name.emplace(slot.name, v);
  }
  auto ff = [&](ad::Var x, const std::string& pre) {
    const ad::Var h = tape.relu(tape.add_row(tape.matmul(x, g[pre + ".W1"]), g[pre + ".b1"]));
    return tape.add_row(tape.matmul(h, g[pre + ".W2"]), g[pre + ".b2"]);
  };
  const ad::Var pe = tape.leaf(positional_encoding(spec_.order, spec_.model_width));

  ad::Var enc = tape.add(tape.add_row(tape.matmul(tape.leaf(window.input_block), g["enc.in.W"]), g["enc.in.b"]), pe);
  for (Index l = 0; l < spec_.encoder_layers; ++l) {
    const std::string pre = "enc" + std::to_string(l);
    enc = tape.add(enc, multi_head_attention(tape, enc, enc, g.attention_params(pre + ".self"), spec_.heads, false,
                                             g.attention));
    enc = tape.add(enc, ff(enc, pre + ".ff"));
  }

  ad::Var dec =
      tape.add(tape.add_row(tape.matmul(tape.leaf(window.decoder_history), g["dec.in.W"]), g["dec.in.b"]), pe);
  for (Index l = 0; l < spec_.decoder_layers; ++l) {
    const std::string pre = "dec" + std::to_string(l);
    dec = tape.add(dec, multi_head_attention(tape, dec, dec, g.attention_params(pre + ".self"), spec_.heads, true,
                                             g.attention));
    dec = tape.add(dec, multi_head_attention(tape, dec, enc, g.attention_params(pre + ".cross"), spec_.heads, false,
                                             g.attention));
    dec = tape.add(dec, ff(dec, pre + ".ff"));
  }
  g.decoder_states = dec;
  const ad::Var last = tape.rows(dec, spec_.order - 1, 1);
  const ad::Var hidden = tape.relu(tape.add_row(tape.matmul(last, g["head.W1"]), g["head.b1"]));
  return tape.add_row(tape.matmul(hidden, g["head.W2"]), g["head.b2"]);
}

Vector Seq2SeqForecaster::predict(const TdeWindow& window) const {
  ad::Tape tape;
  Graph g;
  const ad::Var out = forward(tape, window, g);
  return tape.value(out).row(0).transpose();
}

Seq2SeqTrace Seq2SeqForecaster::trace(const TdeWindow& window) const {
  ad::Tape tape;
  Graph g;
  Seq2SeqTrace t;
  g.attention = &t.attention;
  const ad::Var out = forward(tape, window, g);
  t.prediction = tape.value(out).row(0).transpose();
  t.decoder_states = tape.value(g.decoder_states);
  return t;
}

LossGradient Seq2SeqForecaster::loss_and_gradient(std::span<const TdeWindow> windows) const {
  if (windows.empty()) throw std::invalid_argument("loss_and_gradient on an empty window list");
  LossGradient out;
  out.gradient = Vector::Zero(params_.size());
  const auto& layout = params_.layout();
  for (const auto& w : windows) {
    ad::Tape tape;
    Graph g;
    const ad::Var pred = forward(tape, w, g);
    const ad::Var target = tape.leaf(w.target.transpose());
    const ad::Var loss = tape.sum_squares(tape.sub(pred, target));
    tape.backward(loss);
    out.risk += tape.value(loss)(0, 0);
    for (std::size_t i = 0; i < layout.size(); ++i) params_.pack_gradient(layout[i], tape.grad(g.leaves[i]), out.gradient);
  }
  const double inv = 1.0 / static_cast<double>(windows.size());
  out.risk *= inv;
  out.gradient *= inv;
  return out;
}

nlohmann::json Seq2SeqForecaster::spec_json() const {
  return {{"type", "seq2seq"},
          {"window", spec_.order},
          {"encoder_layers", spec_.encoder_layers},
          {"decoder_layers", spec_.decoder_layers},
          {"heads", spec_.heads},
          {"ff_width", spec_.ff_width},
          {"model_width", spec_.model_width},
          {"input_dim", spec_.input_dim},
          {"output_dim", spec_.output_dim}};
}

std::unique_ptr<Forecaster> Seq2SeqForecaster::clone() const { return std::make_unique<Seq2SeqForecaster>(*this); }

}  // namespace emr::nn
