#pragma once

// NetworkSpec <-> JSON object, shared by the spec-file loader and the
// checkpoint container header.

#include <json.hpp>

#include "convfeat/net.hpp"

namespace convfeat::detail {

nlohmann::json network_to_json(const NetworkSpec& spec);
NetworkSpec network_from_json(const nlohmann::json& j);

}  // namespace convfeat::detail
