#include <algorithm>
#include <cmath>

#include "convfeat/errors.hpp"
#include "engine_detail.hpp"

namespace convfeat {

namespace {

// Channelwise max over groups of `k` consecutive linear filters:
// out(n, oc, y, x) = max_p lin(n, oc*k + p, y, x). argmax (first winner on
// ties) goes to `arg` for backward routing.
Tensor maxout_reduce(const Tensor& lin, int k, std::vector<std::uint8_t>& arg) {
    const std::size_t n = lin.extent(0), f = lin.extent(1);
    const std::size_t hw = lin.extent(2) * lin.extent(3);
    const std::size_t out_c = f / static_cast<std::size_t>(k);
    Tensor out({n, out_c, lin.extent(2), lin.extent(3)});
    arg.assign(out.size(), 0);
    const double* pl = lin.data();
    double* po = out.data();
    std::size_t oi = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oc = 0; oc < out_c; ++oc) {
            const double* group = pl + (ni * f + oc * k) * hw;
            for (std::size_t i = 0; i < hw; ++i, ++oi) {
                double best = group[i];
                std::uint8_t best_p = 0;
                for (int p = 1; p < k; ++p) {
                    const double v = group[p * hw + i];
                    if (v > best) {
                        best = v;
                        best_p = static_cast<std::uint8_t>(p);
                    }
                }
                po[oi] = best;
                arg[oi] = best_p;
            }
        }
    }
    return out;
}

void relu_inplace(Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::max(t[i], 0.0);
}

Tensor softmax_rows(const Tensor& logits) {
    const std::size_t n = logits.extent(0), c = logits.extent(1);
    Tensor probs({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data() + i * c;
        double* p = probs.data() + i * c;
        double zmax = z[0];
        for (std::size_t j = 1; j < c; ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p[j] = std::exp(z[j] - zmax);
            sum += p[j];
        }
        for (std::size_t j = 0; j < c; ++j) p[j] /= sum;
    }
    return probs;
}

// Inverted dropout on a layer input: zero with probability `rate`, survivors
// scaled by 1/(1-rate). Mask values are the scale factors so backward is a
// plain elementwise product.
Tensor draw_dropout_mask(const Shape& shape, double rate, Rng& rng) {
    Tensor mask(shape);
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.next_unit() < rate ? 0.0 : scale;
    }
    return mask;
}

Tensor apply_mask(const Tensor& x, const Tensor& mask) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
    return y;
}

}  // namespace

Activations forward(const Checkpoint& ckpt, const Tensor& batch, Mode mode, Rng* dropout_rng,
                    ForwardTrace* trace) {
    const NetworkSpec& spec = ckpt.spec;
    Tensor input = batch;
    if (input.rank() == 3) {
        input = reshape(input, {input.extent(0), 1, input.extent(1), input.extent(2)});
    }
    if (input.rank() != 4 || input.extent(1) != 1 ||
        input.extent(2) != static_cast<std::size_t>(spec.input_side) ||
        input.extent(3) != static_cast<std::size_t>(spec.input_side)) {
        throw ShapeMismatch("forward: batch shape " + shape_string(batch.shape()) +
                            " does not match input side " + std::to_string(spec.input_side));
    }
    require_finite(input, "forward input");

    const std::size_t n_layers = spec.layers.size();
    Activations acts;
    acts.layer_out.reserve(n_layers + 1);
    acts.layer_out.push_back(std::move(input));
    if (trace) {
        trace->pre.assign(n_layers + 1, Tensor());
        trace->switches.assign(n_layers + 1, {});
        trace->maxout_arg.assign(n_layers + 1, {});
        trace->dropout_mask.assign(n_layers + 1, Tensor());
    }

    for (std::size_t i = 0; i < n_layers; ++i) {
        const LayerSpec& l = spec.layers[i];
        const std::size_t li = i + 1;  // activation index
        const Tensor* in = &acts.layer_out.back();

        Tensor dropped;
        if (l.dropout_rate > 0.0 && mode == Mode::train && dropout_rng) {
            Tensor mask = draw_dropout_mask(in->shape(), l.dropout_rate, *dropout_rng);
            dropped = apply_mask(*in, mask);
            if (trace) trace->dropout_mask[li] = std::move(mask);
            in = &dropped;
        }

        Tensor out;
        switch (l.kind) {
            case LayerKind::conv: {
                Tensor lin = conv2d(*in, ckpt.params[i].w, ckpt.params[i].b,
                                    detail::conv_geom(l));
                if (l.activation == Activation::maxout) {
                    std::vector<std::uint8_t> arg;
                    out = maxout_reduce(lin, l.maxout_k, arg);
                    if (trace) trace->maxout_arg[li] = std::move(arg);
                } else {
                    out = lin;
                    if (l.activation == Activation::relu) relu_inplace(out);
                }
                if (trace) trace->pre[li] = std::move(lin);
                break;
            }
            case LayerKind::maxpool: {
                std::vector<std::uint32_t> sw;
                out = maxpool2d(*in, detail::pool_geom(l), trace ? &sw : nullptr);
                if (trace) trace->switches[li] = std::move(sw);
                break;
            }
            case LayerKind::fully_connected:
            case LayerKind::softmax: {
                const Tensor rows = detail::flatten_rows(*in);
                if (rows.extent(1) != ckpt.params[i].w.extent(1)) {
                    throw ShapeMismatch("forward: layer " + std::to_string(li) +
                                        " input width " + std::to_string(rows.extent(1)) +
                                        " vs weight width " +
                                        std::to_string(ckpt.params[i].w.extent(1)));
                }
                Tensor lin = matmul_nt(rows, ckpt.params[i].w);
                const Tensor& b = ckpt.params[i].b;
                for (std::size_t r = 0; r < lin.extent(0); ++r) {
                    double* row = lin.data() + r * lin.extent(1);
                    for (std::size_t j = 0; j < lin.extent(1); ++j) row[j] += b[j];
                }
                if (l.kind == LayerKind::softmax) {
                    out = softmax_rows(lin);
                } else {
                    out = lin;
                    if (l.activation == Activation::relu) relu_inplace(out);
                }
                if (trace) trace->pre[li] = std::move(lin);
                break;
            }
        }
        require_finite(out, "forward layer output");
        acts.layer_out.push_back(std::move(out));
    }
    return acts;
}

double loss_cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    if (probs.rank() != 2 || probs.extent(0) != labels.size()) {
        throw ShapeMismatch("loss: probs " + shape_string(probs.shape()) + " vs " +
                            std::to_string(labels.size()) + " labels");
    }
    const std::size_t n = probs.extent(0), c = probs.extent(1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw LabelOutOfRange("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(c) + ")");
        }
        total += -std::log(std::max(probs(i, static_cast<std::size_t>(y)), 1e-12));
    }
    return total / static_cast<double>(n);
}

}  // namespace convfeat
