#pragma once

#include <nlohmann/json.hpp>

#include "loralab/linalg.hpp"

namespace loralab {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace loralab
