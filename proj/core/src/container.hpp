#pragma once

// Internal framing for multi-tensor files: magic "CPTC", u32 header length,
// UTF-8 JSON header, then one CPT1 block per name in header["tensors"], in
// that order. nlohmann::json dumps object keys sorted, so a load/save round
// trip is byte-identical.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "convfeat/tensor.hpp"
#include "convfeat/tensor_io.hpp"

namespace convfeat::detail {

struct Container {
    nlohmann::json header;
    std::map<std::string, Tensor> tensors;
};

void save_container(const std::filesystem::path& path, nlohmann::json header,
                    const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                    Dtype dtype);

Container load_container(const std::filesystem::path& path);

}  // namespace convfeat::detail
