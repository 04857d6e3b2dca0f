#include <algorithm>
#include <cmath>
#include <string>

#include "convfeat/errors.hpp"
#include "container.hpp"
#include "engine_detail.hpp"
#include "net_json.hpp"

namespace convfeat {

namespace detail {

std::vector<Shape> layer_input_shapes(const NetworkSpec& spec) {
    const auto plan = shape_plan(spec);
    std::vector<Shape> in;
    in.reserve(spec.layers.size());
    in.push_back({1, static_cast<std::size_t>(spec.input_side),
                  static_cast<std::size_t>(spec.input_side)});
    for (std::size_t i = 0; i + 1 < plan.size(); ++i) in.push_back(plan[i]);
    return in;
}

Tensor flatten_rows(const Tensor& t) {
    if (t.rank() == 2) return t;
    return reshape(t, {t.extent(0), t.size() / t.extent(0)});
}

}  // namespace detail

Checkpoint init_weights(const NetworkSpec& spec, Rng& rng) {
    const auto inputs = detail::layer_input_shapes(spec);
    Checkpoint ckpt;
    ckpt.spec = spec;
    ckpt.params.resize(spec.layers.size());
    ckpt.momentum.resize(spec.layers.size());

    auto glorot_fill = [&rng](Tensor& t, std::size_t fan_in, std::size_t fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-a, a);
    };

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        LayerParams& p = ckpt.params[i];
        switch (l.kind) {
            case LayerKind::conv: {
                const std::size_t in_c = inputs[i][0];
                p.w = Tensor({static_cast<std::size_t>(l.filters), in_c,
                              static_cast<std::size_t>(l.kernel_h),
                              static_cast<std::size_t>(l.kernel_w)});
                p.b = Tensor({static_cast<std::size_t>(l.filters)});
                const std::size_t taps = static_cast<std::size_t>(l.kernel_h) * l.kernel_w;
                glorot_fill(p.w, in_c * taps, static_cast<std::size_t>(l.filters) * taps);
                break;
            }
            case LayerKind::fully_connected:
            case LayerKind::softmax: {
                const std::size_t in_dim = shape_volume(inputs[i]);
                const std::size_t units =
                    l.kind == LayerKind::softmax ? static_cast<std::size_t>(spec.n_classes)
                                                 : static_cast<std::size_t>(l.units);
                p.w = Tensor({units, in_dim});
                p.b = Tensor({units});
                glorot_fill(p.w, in_dim, units);
                break;
            }
            case LayerKind::maxpool:
                break;  // no parameters
        }
        if (!p.w.empty()) {
            ckpt.momentum[i].w = Tensor(p.w.shape());
            ckpt.momentum[i].b = Tensor(p.b.shape());
        }
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path, Dtype precision) {
    nlohmann::json header;
    header["kind"] = "checkpoint";
    header["spec"] = detail::network_to_json(ckpt.spec);
    header["epoch"] = ckpt.epoch;
    header["run_seed"] = ckpt.run_seed;
    header["dropout_state"] = ckpt.dropout_state;

    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
        if (ckpt.params[i].w.empty()) continue;
        const std::string base = "layer" + std::to_string(i);
        tensors.emplace_back(base + ".b", &ckpt.params[i].b);
        tensors.emplace_back(base + ".vb", &ckpt.momentum[i].b);
        tensors.emplace_back(base + ".vw", &ckpt.momentum[i].w);
        tensors.emplace_back(base + ".w", &ckpt.params[i].w);
    }
    std::sort(tensors.begin(), tensors.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    detail::save_container(path, std::move(header), tensors, precision);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    detail::Container c = detail::load_container(path);
    if (c.header.value("kind", std::string()) != "checkpoint") {
        throw FormatError("not a checkpoint file: " + path.string());
    }
    Checkpoint ckpt;
    try {
        ckpt.spec = detail::network_from_json(c.header.at("spec"));
        ckpt.epoch = c.header.at("epoch").get<int>();
        ckpt.run_seed = c.header.at("run_seed").get<std::uint64_t>();
        ckpt.dropout_state = c.header.at("dropout_state").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint header field error: " + std::string(e.what()));
    }
    ckpt.params.resize(ckpt.spec.layers.size());
    ckpt.momentum.resize(ckpt.spec.layers.size());
    for (std::size_t i = 0; i < ckpt.spec.layers.size(); ++i) {
        const std::string base = "layer" + std::to_string(i);
        auto take = [&](const std::string& name, Tensor& dst) {
            auto it = c.tensors.find(name);
            if (it == c.tensors.end()) {
                throw FormatError("checkpoint missing tensor " + name + " in " + path.string());
            }
            dst = std::move(it->second);
        };
        if (c.tensors.count(base + ".w")) {
            take(base + ".w", ckpt.params[i].w);
            take(base + ".b", ckpt.params[i].b);
            take(base + ".vw", ckpt.momentum[i].w);
            take(base + ".vb", ckpt.momentum[i].b);
        }
    }
    return ckpt;
}

}  // namespace convfeat
