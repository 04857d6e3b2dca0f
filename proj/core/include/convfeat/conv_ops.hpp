#pragma once

#include <cstdint>
#include <vector>

#include "convfeat/tensor.hpp"

namespace convfeat {

struct ConvGeom {
    int kh = 1, kw = 1;
    int sh = 1, sw = 1;
    int ph = 0, pw = 0;
};

struct PoolGeom {
    int kh = 2, kw = 2;
    int sh = 2, sw = 2;
    int ph = 0, pw = 0;
    bool ceil_mode = false;
};

// 2-D cross-correlation (no kernel flip) with zero padding over a batch:
// x (N,C,H,W), w (F,C,kh,kw), b (F) -> (N,F,oh,ow). Pass an empty b to skip
// the bias. Implemented as im2col + matmul; oracle tests pin it to naive
// nested loops.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeom& g);

// Gradients of a scalar loss through conv2d given d_out (N,F,oh,ow). Null
// output pointers skip that gradient.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& d_out, const ConvGeom& g,
                     Tensor* d_x, Tensor* d_w, Tensor* d_b);

// Adjoint of x -> conv2d(x, w, no bias): satisfies <conv2d(x), y> = <x,
// adjoint(y)> exactly. This is the input gradient, exposed on its own
// because feature back-projection descends through it.
Tensor conv2d_input_adjoint(const Tensor& w, const Tensor& d_out, const Shape& x_shape,
                            const ConvGeom& g);

// Max pooling over x (N,C,H,W) -> (N,C,oh,ow). The output extent uses
// floor((in+2p-k)/s)+1, or ceil with g.ceil_mode; windows are clipped to the
// input so padding never contributes values. If `switches` is non-null it
// receives, per output cell in flat output order, the argmax position as a
// flat h*W+w index into the cell's input plane (first cell wins ties).
Tensor maxpool2d(const Tensor& x, const PoolGeom& g, std::vector<std::uint32_t>* switches);

// Scatter-add of values (N,C,oh,ow) into a zero tensor of shape x_shape at
// the recorded switch positions. This is both the max-pool gradient and the
// deconv unpooling step.
Tensor pool_scatter(const Tensor& values, const Shape& x_shape,
                    const std::vector<std::uint32_t>& switches);

}  // namespace convfeat
