// SPDX-License-Identifier: Apache-2.0
#include "emreselect/json_io.hpp"

#include "emreselect/errors.hpp"

#include <cmath>
#include <limits>

namespace emr::io {

nlohmann::json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ParseError("expected a number, got " + j.dump());
}

nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number_to_json(v(i)));
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected an array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_from_json(j[i]);
  return v;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (Index r = 0; r < m.rows(); ++r) out.push_back(vector_to_json(m.row(r).transpose()));
  return out;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("expected an array of rows");
  if (j.empty()) return Matrix(0, 0);
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(static_cast<Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<Index>(j[r].size()) != cols) throw ParseError("ragged matrix rows");
    m.row(static_cast<Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

nlohmann::json scaler_to_json(const Scaler& s) {
  return {{"input_mean", vector_to_json(s.input_mean)},
          {"input_std", vector_to_json(s.input_std)},
          {"output_mean", vector_to_json(s.output_mean)},
          {"output_std", vector_to_json(s.output_std)},
          {"degenerate_channel", s.degenerate_channel}};
}

Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s;
  s.input_mean = vector_from_json(j.at("input_mean"));
  s.input_std = vector_from_json(j.at("input_std"));
  s.output_mean = vector_from_json(j.at("output_mean"));
  s.output_std = vector_from_json(j.at("output_std"));
  s.degenerate_channel = j.value("degenerate_channel", false);
  return s;
}

nlohmann::json window_to_json(const TdeWindow& w) {
  return {{"origin_index", w.origin_index},
          {"input_block", matrix_to_json(w.input_block)},
          {"decoder_history", matrix_to_json(w.decoder_history)},
          {"target", vector_to_json(w.target)}};
}

TdeWindow window_from_json(const nlohmann::json& j) {
  TdeWindow w;
  w.origin_index = j.at("origin_index").get<Index>();
  w.input_block = matrix_from_json(j.at("input_block"));
  w.decoder_history = matrix_from_json(j.at("decoder_history"));
  w.target = vector_from_json(j.at("target"));
  return w;
}

nlohmann::json memory_to_json(const MemoryBuffer& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries()) {
    entries.push_back({{"domain_id", e.domain_id}, {"priority", number_to_json(e.priority)},
                       {"window", window_to_json(e.window)}});
  }
  nlohmann::json out = {{"entries", entries}};
  out["capacity"] = m.capacity() ? nlohmann::json(*m.capacity()) : nlohmann::json(nullptr);
  return out;
}

MemoryBuffer memory_from_json(const nlohmann::json& j) {
  std::optional<std::size_t> capacity;
  if (j.contains("capacity") && !j.at("capacity").is_null()) capacity = j.at("capacity").get<std::size_t>();
  MemoryBuffer m(capacity);
  for (const auto& e : j.at("entries")) {
    m.append(MemoryEntry{window_from_json(e.at("window")), e.at("domain_id").get<std::string>(),
                         number_from_json(e.at("priority"))});
  }
  return m;
}

}  // namespace emr::io
