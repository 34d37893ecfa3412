#pragma once

// JSON encoding of parameter bundles and optimizer state. Doubles are written
// with round-trip precision, so decode(encode(p)) == p bit for bit.

#include "oraac/diffcore.hpp"

#include <json.hpp>

namespace oraac {

nlohmann::json encode_params(const ParamSet<double>& params);
ParamSet<double> decode_params(const nlohmann::json& doc);

nlohmann::json encode_adam(const AdamState<double>& state);
AdamState<double> decode_adam(const nlohmann::json& doc);

nlohmann::json encode_vector(const Vector& v);
Vector decode_vector(const nlohmann::json& doc);

}  // namespace oraac
