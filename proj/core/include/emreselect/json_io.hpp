// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "emreselect/core.hpp"

#include <nlohmann/json.hpp>

namespace emr::io {

// nlohmann::json writes the shortest decimal form that round-trips, so
// doubles serialized here reload bit-exactly. Non-finite values are written
// as the strings "inf", "-inf" and "nan".

[[nodiscard]] nlohmann::json number_to_json(double v);
[[nodiscard]] double number_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json vector_to_json(const Vector& v);
[[nodiscard]] Vector vector_from_json(const nlohmann::json& j);

/// Row-major nested arrays.
[[nodiscard]] nlohmann::json matrix_to_json(const Matrix& m);
[[nodiscard]] Matrix matrix_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json scaler_to_json(const Scaler& s);
[[nodiscard]] Scaler scaler_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json window_to_json(const TdeWindow& w);
[[nodiscard]] TdeWindow window_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json memory_to_json(const MemoryBuffer& m);
[[nodiscard]] MemoryBuffer memory_from_json(const nlohmann::json& j);

}  // namespace emr::io
