#include <cmath>

#include "convfeat/errors.hpp"
#include "engine_detail.hpp"

namespace convfeat {

namespace {

// Gradient wrt softmax logits for mean cross-entropy: (p - onehot)/N.
Tensor cross_entropy_logit_grad(const Tensor& probs, const std::vector<int>& labels) {
    const std::size_t n = probs.extent(0), c = probs.extent(1);
    Tensor d = probs;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw LabelOutOfRange("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(c) + ")");
        }
        d(i, static_cast<std::size_t>(y)) -= 1.0;
        for (std::size_t j = 0; j < c; ++j) d(i, j) *= inv_n;
    }
    return d;
}

Tensor column_sums(const Tensor& d) {
    Tensor s({d.extent(1)});
    for (std::size_t i = 0; i < d.extent(0); ++i) {
        const double* row = d.data() + i * d.extent(1);
        for (std::size_t j = 0; j < d.extent(1); ++j) s[j] += row[j];
    }
    return s;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    Tensor y(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
    return y;
}

}  // namespace

Gradients backward(const Checkpoint& ckpt, const Activations& acts, const ForwardTrace& trace,
                   const std::vector<int>& labels) {
    const NetworkSpec& spec = ckpt.spec;
    const std::size_t n_layers = spec.layers.size();
    if (acts.layer_out.size() != n_layers + 1 || trace.pre.size() != n_layers + 1) {
        throw ShapeMismatch("backward: activations/trace do not match the network");
    }

    Gradients grads;
    grads.layers.resize(n_layers);

    // Gradient wrt the current layer's output; starts as the logit gradient,
    // which the softmax case below consumes directly.
    Tensor d = cross_entropy_logit_grad(acts.probs(), labels);

    for (std::size_t i = n_layers; i-- > 0;) {
        const LayerSpec& l = spec.layers[i];
        const std::size_t li = i + 1;

        // The value the layer actually consumed (dropout applied if traced).
        const bool has_mask = !trace.dropout_mask[li].empty();
        const Tensor& clean_in = acts.layer_out[i];
        const Tensor fed_in = has_mask ? hadamard(clean_in, trace.dropout_mask[li]) : clean_in;

        switch (l.kind) {
            case LayerKind::softmax:
            case LayerKind::fully_connected: {
                if (l.kind == LayerKind::fully_connected && l.activation == Activation::relu) {
                    detail::gate_relu(d, trace.pre[li]);
                }
                const Tensor rows = detail::flatten_rows(fed_in);
                grads.layers[i].w = matmul_tn(d, rows);
                grads.layers[i].b = column_sums(d);
                d = reshape(matmul(d, ckpt.params[i].w), fed_in.shape());
                break;
            }
            case LayerKind::conv: {
                Tensor dlin;
                if (l.activation == Activation::maxout) {
                    dlin = detail::maxout_route(d, trace.maxout_arg[li], l.maxout_k,
                                                trace.pre[li].shape());
                } else {
                    dlin = std::move(d);
                    if (l.activation == Activation::relu) detail::gate_relu(dlin, trace.pre[li]);
                }
                Tensor dx;
                conv2d_backward(fed_in, ckpt.params[i].w, dlin, detail::conv_geom(l), &dx,
                                &grads.layers[i].w, &grads.layers[i].b);
                d = std::move(dx);
                break;
            }
            case LayerKind::maxpool: {
                d = pool_scatter(d, fed_in.shape(), trace.switches[li]);
                break;
            }
        }

        if (has_mask) d = hadamard(d, trace.dropout_mask[li]);
    }
    return grads;
}

}  // namespace convfeat
