#include "convfeat/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "convfeat/errors.hpp"

namespace convfeat {

FeatureMatrix extract(const Checkpoint& ckpt, const std::vector<LabeledImage>& images,
                      int layer_index) {
    const auto taps = feature_taps(ckpt.spec);
    if (layer_index < 0 || static_cast<std::size_t>(layer_index) >= taps.size()) {
        throw LayerOutOfRange("feature layer " + std::to_string(layer_index) +
                              " outside [0, " + std::to_string(taps.size() - 1) + "]");
    }
    const std::size_t tap = taps[static_cast<std::size_t>(layer_index)];
    const std::size_t d = feature_dim(ckpt.spec, layer_index);

    FeatureMatrix m;
    m.values = Tensor({images.size(), d});
    m.layer_index = layer_index;
    m.source_epoch = ckpt.epoch;
    m.spec_name = ckpt.spec.name;
    m.labels.reserve(images.size());
    for (const LabeledImage& img : images) {
        m.labels.push_back(img.class_id);
        m.n_classes = std::max(m.n_classes, img.class_id + 1);
    }

    constexpr std::size_t kChunk = 256;
    for (std::size_t begin = 0; begin < images.size(); begin += kChunk) {
        const std::size_t end = std::min(begin + kChunk, images.size());
        const Tensor batch = batch_from_images(std::span(images.data() + begin, end - begin));
        const Activations acts = forward(ckpt, batch, Mode::eval, nullptr, nullptr);
        const Tensor& a = acts.layer_out[tap];
        // Per sample the tap activation flattens row-major into one row.
        std::copy(a.data(), a.data() + (end - begin) * d, m.values.data() + begin * d);
    }
    return m;
}

void save_matrix(const FeatureMatrix& m, const std::filesystem::path& path, Dtype precision) {
    save_tensor(path, m.values, precision);
    nlohmann::json j;
    j["labels"] = m.labels;
    j["layer_index"] = m.layer_index;
    j["source_epoch"] = m.source_epoch;
    j["spec_name"] = m.spec_name;
    j["n_classes"] = m.n_classes;
    const auto sidecar = path.string() + ".json";
    std::ofstream os(sidecar);
    if (!os) throw IoError("cannot write matrix sidecar: " + sidecar);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("failed writing " + sidecar);
}

FeatureMatrix load_matrix(const std::filesystem::path& path) {
    FeatureMatrix m;
    m.values = load_tensor(path);
    if (m.values.rank() != 2) {
        throw FormatError("matrix file is not rank 2: " + path.string());
    }
    const auto sidecar = path.string() + ".json";
    std::ifstream is(sidecar);
    if (!is) throw IoError("cannot read matrix sidecar: " + sidecar);
    try {
        nlohmann::json j;
        is >> j;
        m.labels = j.at("labels").get<std::vector<int>>();
        m.layer_index = j.at("layer_index").get<int>();
        m.source_epoch = j.at("source_epoch").get<int>();
        m.spec_name = j.at("spec_name").get<std::string>();
        m.n_classes = j.at("n_classes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("matrix sidecar field error in " + sidecar + ": " + e.what());
    }
    if (m.labels.size() != m.values.extent(0)) {
        throw FormatError("matrix sidecar label count disagrees with rows: " + sidecar);
    }
    return m;
}

FeatureMatrix zscore(const FeatureMatrix& m) {
    FeatureMatrix out = m;
    const std::size_t n = m.values.extent(0), d = m.values.extent(1);
    if (n == 0) return out;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += m.values(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = m.values(i, j) - mean;
            var += c * c;
        }
        const double sd = std::sqrt(var / static_cast<double>(n));
        const double scale = sd > 0.0 ? 1.0 / sd : 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.values(i, j) = (m.values(i, j) - mean) * scale;
        }
    }
    return out;
}

}  // namespace convfeat
