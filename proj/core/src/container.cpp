#include "container.hpp"

#include <cstring>
#include <fstream>

#include "convfeat/errors.hpp"

namespace convfeat::detail {

namespace {
constexpr char kMagic[4] = {'C', 'P', 'T', 'C'};
}

void save_container(const std::filesystem::path& path, nlohmann::json header,
                    const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                    Dtype dtype) {
    auto names = nlohmann::json::array();
    for (const auto& [name, _] : tensors) names.push_back(name);
    header["tensors"] = names;
    header["dtype"] = dtype_to_string(dtype);
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    const std::uint32_t len = static_cast<std::uint32_t>(text.size());
    os.write(reinterpret_cast<const char*>(&len), sizeof(len));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, t] : tensors) write_tensor(os, *t, dtype);
    if (!os) throw IoError("failed writing container: " + path.string());
}

Container load_container(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad container magic in " + path.string());
    }
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!is) throw FormatError("truncated container header");
    std::string text(len, '\0');
    is.read(text.data(), len);
    if (!is) throw FormatError("truncated container header");

    Container c;
    try {
        c.header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("container header is not valid JSON: ") + e.what());
    }
    if (!c.header.contains("tensors") || !c.header["tensors"].is_array()) {
        throw FormatError("container header lacks tensor list");
    }
    for (const auto& name : c.header["tensors"]) {
        c.tensors[name.get<std::string>()] = read_tensor(is);
    }
    return c;
}

}  // namespace convfeat::detail
