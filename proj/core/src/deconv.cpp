#include "convfeat/deconv.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "convfeat/errors.hpp"
#include "convfeat/image_io.hpp"
#include "engine_detail.hpp"

namespace convfeat {

ForwardRecord record_forward(const Checkpoint& ckpt, const LabeledImage& image, int sample_id) {
    ForwardRecord rec;
    rec.sample_id = sample_id;
    Tensor batch({1, 1, image.pixels.extent(0), image.pixels.extent(1)});
    std::copy(image.pixels.data(), image.pixels.data() + image.pixels.size(), batch.data());
    rec.acts = forward(ckpt, batch, Mode::eval, nullptr, &rec.trace);
    return rec;
}

namespace {

// Tap number -> activation index, rejecting tap 0 (the raw input has nothing
// below it to invert).
std::size_t projectable_tap(const NetworkSpec& spec, int layer_index) {
    const auto taps = feature_taps(spec);
    if (layer_index < 1 || static_cast<std::size_t>(layer_index) >= taps.size()) {
        throw LayerOutOfRange("tap " + std::to_string(layer_index) + " is not projectable");
    }
    return taps[static_cast<std::size_t>(layer_index)];
}

// Channel count of a tap output: channels for rank-4 maps, units for rows.
std::size_t tap_channels(const Tensor& t) {
    return t.rank() == 4 ? t.extent(1) : t.extent(t.rank() - 1);
}

}  // namespace

Projection project(const Checkpoint& ckpt, const ForwardRecord& record, int layer_index,
                   int feature_index) {
    const NetworkSpec& spec = ckpt.spec;
    const std::size_t act_idx = projectable_tap(spec, layer_index);
    const Tensor& tap_out = record.acts.layer_out[act_idx];
    const std::size_t channels = tap_channels(tap_out);
    if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= channels) {
        throw FeatureOutOfRange("feature " + std::to_string(feature_index) + " outside [0, " +
                                std::to_string(channels) + ")");
    }

    // Seed: the tap output with every channel but the chosen one zeroed.
    Tensor d(tap_out.shape());
    double peak = 0.0;
    if (tap_out.rank() == 4) {
        const std::size_t hw = tap_out.extent(2) * tap_out.extent(3);
        const double* src = tap_out.data() + static_cast<std::size_t>(feature_index) * hw;
        double* dst = d.data() + static_cast<std::size_t>(feature_index) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
            dst[i] = src[i];
            peak = std::max(peak, src[i]);
        }
    } else {
        const std::size_t f = static_cast<std::size_t>(feature_index);
        d[f] = tap_out[f];
        peak = tap_out[f];
    }

    // Invert every layer below the tap, newest first.
    for (std::size_t j = act_idx; j >= 1; --j) {
        const LayerSpec& l = spec.layers[j - 1];
        const Shape in_shape = record.acts.layer_out[j - 1].shape();
        switch (l.kind) {
            case LayerKind::maxpool:
                d = pool_scatter(d, in_shape, record.trace.switches[j]);
                break;
            case LayerKind::conv: {
                if (l.activation == Activation::maxout) {
                    d = detail::maxout_route(d, record.trace.maxout_arg[j], l.maxout_k,
                                             record.trace.pre[j].shape());
                } else if (l.activation == Activation::relu) {
                    detail::gate_relu(d, record.trace.pre[j]);
                }
                d = conv2d_input_adjoint(ckpt.params[j - 1].w, d, in_shape,
                                         detail::conv_geom(l));
                break;
            }
            case LayerKind::fully_connected:
            case LayerKind::softmax: {
                if (l.activation == Activation::relu) {
                    detail::gate_relu(d, record.trace.pre[j]);
                }
                d = reshape(matmul(d, ckpt.params[j - 1].w), in_shape);
                break;
            }
        }
    }

    Projection p;
    p.image = reshape(d, {d.extent(2), d.extent(3)});
    p.layer_index = layer_index;
    p.feature_index = feature_index;
    p.source_sample = record.sample_id;
    p.activation_value = peak;
    return p;
}

std::vector<std::pair<int, double>> top_activating_samples(
    const Checkpoint& ckpt, const std::vector<LabeledImage>& images, int layer_index,
    int feature_index, int k) {
    if (k < 1) throw BadParam("k must be >= 1");
    const std::size_t act_idx = projectable_tap(ckpt.spec, layer_index);

    std::vector<double> peaks(images.size(), 0.0);
    const std::size_t chunk = 64;
    for (std::size_t at = 0; at < images.size(); at += chunk) {
        const std::size_t n = std::min(chunk, images.size() - at);
        const Tensor batch = batch_from_images(std::span(images.data() + at, n));
        const Activations acts = forward(ckpt, batch, Mode::eval, nullptr, nullptr);
        const Tensor& out = acts.layer_out[act_idx];
        const std::size_t channels = tap_channels(out);
        if (feature_index < 0 || static_cast<std::size_t>(feature_index) >= channels) {
            throw FeatureOutOfRange("feature " + std::to_string(feature_index) +
                                    " outside [0, " + std::to_string(channels) + ")");
        }
        for (std::size_t i = 0; i < n; ++i) {
            double peak = -std::numeric_limits<double>::infinity();
            if (out.rank() == 4) {
                const std::size_t hw = out.extent(2) * out.extent(3);
                const double* src =
                    out.data() + (i * channels + static_cast<std::size_t>(feature_index)) * hw;
                for (std::size_t s = 0; s < hw; ++s) peak = std::max(peak, src[s]);
            } else {
                peak = out(i, static_cast<std::size_t>(feature_index));
            }
            peaks[at + i] = peak;
        }
    }

    std::vector<int> ids(images.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return peaks[static_cast<std::size_t>(a)] > peaks[static_cast<std::size_t>(b)];
    });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), ids.size());

    std::vector<std::pair<int, double>> ranked;
    ranked.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        ranked.emplace_back(ids[i], peaks[static_cast<std::size_t>(ids[i])]);
    }
    return ranked;
}

void export_projection_pgm(const Projection& p, const std::filesystem::path& path) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < p.image.size(); ++i) {
        lo = std::min(lo, p.image[i]);
        hi = std::max(hi, p.image[i]);
    }
    Tensor norm(p.image.shape());
    if (hi > lo) {
        const double inv = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = (p.image[i] - lo) * inv;
    }
    write_pgm(path, norm);

    nlohmann::json side;
    side["layer"] = p.layer_index;
    side["feature"] = p.feature_index;
    side["sample"] = p.source_sample;
    side["activation"] = p.activation_value;
    std::ofstream os(path.string() + ".json");
    if (!os) throw IoError("cannot write sidecar for " + path.string());
    os << side.dump(2) << "\n";
}

}  // namespace convfeat
