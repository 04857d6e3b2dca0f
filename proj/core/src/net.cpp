#include "convfeat/net.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "convfeat/errors.hpp"
#include "net_json.hpp"

namespace convfeat {

namespace {

// round((extent + 2*pad - kernel)/stride) + 1, floor or ceil.
std::size_t planned_extent(std::size_t in, int pad, int kernel, int stride, bool ceil_mode,
                           const std::string& what) {
    const long long span = static_cast<long long>(in) + 2LL * pad - kernel;
    if (kernel < 1 || stride < 1) throw ShapePlanError(what + ": kernel and stride must be >= 1");
    if (span < 0) {
        throw ShapePlanError(what + ": kernel " + std::to_string(kernel) +
                             " exceeds padded extent " + std::to_string(in + 2LL * pad));
    }
    long long out = ceil_mode ? (span + stride - 1) / stride + 1 : span / stride + 1;
    if (ceil_mode && out > 1 && (out - 1) * stride >= static_cast<long long>(in) + pad) {
        // A whole extra window inside right padding computes nothing; drop it.
        --out;
    }
    if (out < 1) throw ShapePlanError(what + ": output extent < 1");
    return static_cast<std::size_t>(out);
}

}  // namespace

std::vector<Shape> shape_plan(const NetworkSpec& spec) {
    if (spec.input_side < 1) throw ShapePlanError("input_side must be >= 1");
    if (spec.layers.empty()) throw ShapePlanError("network has no layers");

    std::vector<Shape> plan;
    plan.reserve(spec.layers.size());
    Shape cur = {1, static_cast<std::size_t>(spec.input_side),
                 static_cast<std::size_t>(spec.input_side)};

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::string what = "layer " + std::to_string(i + 1);
        if (l.dropout_rate < 0.0 || l.dropout_rate >= 1.0) {
            throw ShapePlanError(what + ": dropout_rate must lie in [0,1)");
        }
        switch (l.kind) {
            case LayerKind::conv: {
                if (cur.size() != 3) throw ShapePlanError(what + ": conv input must be C,H,W");
                if (l.filters < 1) throw ShapePlanError(what + ": conv needs filters >= 1");
                if (l.maxout_k < 1 || l.filters % l.maxout_k != 0) {
                    throw ShapePlanError(what + ": filters must be divisible by maxout_k");
                }
                if (l.activation == Activation::maxout && l.maxout_k < 2) {
                    throw ShapePlanError(what + ": maxout activation needs maxout_k >= 2");
                }
                const std::size_t oh =
                    planned_extent(cur[1], l.pad_h, l.kernel_h, l.stride_h, false, what);
                const std::size_t ow =
                    planned_extent(cur[2], l.pad_w, l.kernel_w, l.stride_w, false, what);
                const int out_c =
                    l.activation == Activation::maxout ? l.filters / l.maxout_k : l.filters;
                cur = {static_cast<std::size_t>(out_c), oh, ow};
                break;
            }
            case LayerKind::maxpool: {
                if (cur.size() != 3) throw ShapePlanError(what + ": pool input must be C,H,W");
                const std::size_t oh =
                    planned_extent(cur[1], l.pad_h, l.kernel_h, l.stride_h, l.ceil_mode, what);
                const std::size_t ow =
                    planned_extent(cur[2], l.pad_w, l.kernel_w, l.stride_w, l.ceil_mode, what);
                cur = {cur[0], oh, ow};
                break;
            }
            case LayerKind::fully_connected: {
                if (l.units < 1) throw ShapePlanError(what + ": fc needs units >= 1");
                cur = {static_cast<std::size_t>(l.units)};
                break;
            }
            case LayerKind::softmax: {
                if (i + 1 != spec.layers.size()) {
                    throw ShapePlanError(what + ": softmax must be the final layer");
                }
                if (spec.n_classes < 2) {
                    throw ShapePlanError(what + ": n_classes must be >= 2 before planning");
                }
                cur = {static_cast<std::size_t>(spec.n_classes)};
                break;
            }
        }
        plan.push_back(cur);
    }
    if (spec.layers.back().kind != LayerKind::softmax) {
        throw ShapePlanError("network must end in a softmax layer");
    }
    return plan;
}

std::vector<std::size_t> feature_taps(const NetworkSpec& spec) {
    std::vector<std::size_t> taps = {0};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerKind k = spec.layers[i].kind;
        if (k != LayerKind::conv && k != LayerKind::fully_connected) continue;
        std::size_t end = i + 1;  // activation index of this layer's output
        if (i + 1 < spec.layers.size() && spec.layers[i + 1].kind == LayerKind::maxpool) {
            ++end;
        }
        taps.push_back(end);
    }
    return taps;
}

std::size_t feature_dim(const NetworkSpec& spec, int tap) {
    const auto taps = feature_taps(spec);
    if (tap < 0 || static_cast<std::size_t>(tap) >= taps.size()) {
        throw LayerOutOfRange("feature tap " + std::to_string(tap) + " out of range [0, " +
                              std::to_string(taps.size() - 1) + "]");
    }
    if (tap == 0) {
        return static_cast<std::size_t>(spec.input_side) * static_cast<std::size_t>(spec.input_side);
    }
    const auto plan = shape_plan(spec);
    return shape_volume(plan[taps[static_cast<std::size_t>(tap)] - 1]);
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::fully_connected: return "fully_connected";
        default: return "softmax";
    }
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::maxout: return "maxout";
        default: return "none";
    }
}

namespace detail {

using nlohmann::json;

namespace {

// "kernel": 5 means square; "kernel": [3,5] means (h,w).
std::pair<int, int> read_pair(const json& j, const char* key, std::pair<int, int> fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_number_integer()) return {v.get<int>(), v.get<int>()};
    if (v.is_array() && v.size() == 2) return {v[0].get<int>(), v[1].get<int>()};
    throw FormatError(std::string("network json: ") + key + " must be an int or [h,w]");
}

LayerKind parse_kind(const std::string& s) {
    if (s == "conv") return LayerKind::conv;
    if (s == "maxpool") return LayerKind::maxpool;
    if (s == "fully_connected" || s == "fc") return LayerKind::fully_connected;
    if (s == "softmax") return LayerKind::softmax;
    throw FormatError("network json: unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "maxout") return Activation::maxout;
    if (s == "none") return Activation::none;
    throw FormatError("network json: unknown activation '" + s + "'");
}

}  // namespace

NetworkSpec network_from_json(const json& j) {
    try {
        NetworkSpec spec;
        spec.name = j.at("name").get<std::string>();
        spec.input_side = j.at("input_side").get<int>();
        spec.n_classes = j.value("n_classes", 0);
        spec.notes = j.value("notes", std::string());
        for (const auto& jl : j.at("layers")) {
            LayerSpec l;
            l.kind = parse_kind(jl.at("kind").get<std::string>());
            l.filters = jl.value("filters", 0);
            std::tie(l.kernel_h, l.kernel_w) = read_pair(jl, "kernel", {0, 0});
            std::tie(l.stride_h, l.stride_w) = read_pair(jl, "stride", {1, 1});
            std::tie(l.pad_h, l.pad_w) = read_pair(jl, "padding", {0, 0});
            l.ceil_mode = jl.value("ceil_mode", false);
            l.units = jl.value("units", 0);
            l.activation = parse_activation(jl.value("activation", std::string("none")));
            l.maxout_k = jl.value("maxout_k", 1);
            l.dropout_rate = jl.value("dropout_rate", 0.0);
            spec.layers.push_back(l);
        }
        return spec;
    } catch (const json::exception& e) {
        throw FormatError(std::string("network json field error: ") + e.what());
    }
}

json network_to_json(const NetworkSpec& spec) {
    json j;
    j["name"] = spec.name;
    j["input_side"] = spec.input_side;
    if (spec.n_classes > 0) j["n_classes"] = spec.n_classes;
    if (!spec.notes.empty()) j["notes"] = spec.notes;
    j["layers"] = json::array();
    for (const LayerSpec& l : spec.layers) {
        json jl;
        jl["kind"] = layer_kind_name(l.kind);
        if (l.kind == LayerKind::conv) {
            jl["filters"] = l.filters;
            if (l.maxout_k != 1) jl["maxout_k"] = l.maxout_k;
        }
        if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool) {
            jl["kernel"] = {l.kernel_h, l.kernel_w};
            jl["stride"] = {l.stride_h, l.stride_w};
            jl["padding"] = {l.pad_h, l.pad_w};
        }
        if (l.kind == LayerKind::maxpool && l.ceil_mode) jl["ceil_mode"] = true;
        if (l.kind == LayerKind::fully_connected) jl["units"] = l.units;
        if (l.activation != Activation::none) jl["activation"] = activation_name(l.activation);
        if (l.dropout_rate != 0.0) jl["dropout_rate"] = l.dropout_rate;
        j["layers"].push_back(jl);
    }
    return j;
}

}  // namespace detail

NetworkSpec load_network(const std::filesystem::path& json_path) {
    std::ifstream is(json_path);
    if (!is) throw IoError("cannot read network spec: " + json_path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("network json parse failure in " + json_path.string() + ": " + e.what());
    }
    return detail::network_from_json(j);
}

void save_network(const NetworkSpec& spec, const std::filesystem::path& json_path) {
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot write network spec: " + json_path.string());
    os << detail::network_to_json(spec).dump(2) << "\n";
    if (!os) throw IoError("failed writing " + json_path.string());
}

}  // namespace convfeat
