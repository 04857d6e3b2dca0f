#pragma once

// Helpers shared by the forward/backward/training translation units.

#include "convfeat/conv_ops.hpp"
#include "convfeat/engine.hpp"

namespace convfeat::detail {

// Input shape of every layer: entry i (0-based over spec.layers) is what
// layer i+1 consumes. Entry 0 is {1, side, side}.
std::vector<Shape> layer_input_shapes(const NetworkSpec& spec);

inline ConvGeom conv_geom(const LayerSpec& l) {
    return ConvGeom{l.kernel_h, l.kernel_w, l.stride_h, l.stride_w, l.pad_h, l.pad_w};
}

inline PoolGeom pool_geom(const LayerSpec& l) {
    return PoolGeom{l.kernel_h, l.kernel_w, l.stride_h, l.stride_w, l.pad_h, l.pad_w, l.ceil_mode};
}

// (N, D) view of a batch activation, copying only when the tensor is not
// already rank 2.
Tensor flatten_rows(const Tensor& t);

// Shared by gradient backprop and feature back-projection: both descend
// through the same gates.
inline void gate_relu(Tensor& d, const Tensor& pre) {
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (pre[i] <= 0.0) d[i] = 0.0;
    }
}

// Route values on the maxout output into the winning linear filter of each
// group; the losing pieces get zero.
inline Tensor maxout_route(const Tensor& d_out, const std::vector<std::uint8_t>& arg, int k,
                           const Shape& lin_shape) {
    const std::size_t n = d_out.extent(0), out_c = d_out.extent(1);
    const std::size_t hw = d_out.extent(2) * d_out.extent(3);
    Tensor dlin(lin_shape);
    const std::size_t f = lin_shape[1];
    const double* pd = d_out.data();
    double* pl = dlin.data();
    std::size_t oi = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t oc = 0; oc < out_c; ++oc) {
            double* group = pl + (ni * f + oc * static_cast<std::size_t>(k)) * hw;
            for (std::size_t i = 0; i < hw; ++i, ++oi) {
                group[arg[oi] * hw + i] = pd[oi];
            }
        }
    }
    return dlin;
}

}  // namespace convfeat::detail
