#include "convfeat/conv_ops.hpp"

#include <algorithm>
#include <limits>

#include "convfeat/errors.hpp"

namespace convfeat {

namespace {

std::size_t out_extent(std::size_t in, int kernel, int stride, int pad, bool ceil_mode,
                       const char* what) {
    const long long span = static_cast<long long>(in) + 2LL * pad - kernel;
    if (span < 0) {
        throw ShapeMismatch(std::string(what) + ": kernel exceeds padded input extent");
    }
    long long out = ceil_mode ? (span + stride - 1) / stride + 1 : span / stride + 1;
    if (ceil_mode && out > 1 && (out - 1) * static_cast<long long>(stride) >=
                                    static_cast<long long>(in) + pad) {
        --out;
    }
    return static_cast<std::size_t>(out);
}

void check_rank4(const Tensor& t, const char* what) {
    if (t.rank() != 4) {
        throw ShapeMismatch(std::string(what) + " must be rank 4 (N,C,H,W), got " +
                            shape_string(t.shape()));
    }
}

// Patch matrix over the whole batch: row = (c,ky,kx), column = (n,oy,ox).
// Out-of-image taps (padding) stay zero.
Tensor im2col(const Tensor& x, const ConvGeom& g, std::size_t oh, std::size_t ow) {
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t k_rows = c * static_cast<std::size_t>(g.kh) * g.kw;
    const std::size_t cols_per_sample = oh * ow;
    Tensor cols({k_rows, n * cols_per_sample});
    double* pc = cols.data();
    const double* px = x.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                double* row = pc + (((ci * g.kh) + ky) * g.kw + kx) * (n * cols_per_sample);
                for (std::size_t ni = 0; ni < n; ++ni) {
                    const double* plane = px + (ni * c + ci) * h * w;
                    double* dst = row + ni * cols_per_sample;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const long long iy =
                            static_cast<long long>(oy) * g.sh - g.ph + ky;
                        if (iy < 0 || iy >= static_cast<long long>(h)) {
                            dst += ow;
                            continue;
                        }
                        const double* src_row = plane + static_cast<std::size_t>(iy) * w;
                        for (std::size_t ox = 0; ox < ow; ++ox, ++dst) {
                            const long long ix =
                                static_cast<long long>(ox) * g.sw - g.pw + kx;
                            if (ix >= 0 && ix < static_cast<long long>(w)) {
                                *dst = src_row[static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                }
            }
        }
    }
    return cols;
}

// Adjoint of im2col: accumulate patch-matrix values back into image layout.
Tensor col2im(const Tensor& cols, const Shape& x_shape, const ConvGeom& g, std::size_t oh,
              std::size_t ow) {
    const std::size_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
    const std::size_t cols_per_sample = oh * ow;
    Tensor x(x_shape);
    double* px = x.data();
    const double* pc = cols.data();
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                const double* row =
                    pc + (((ci * g.kh) + ky) * g.kw + kx) * (n * cols_per_sample);
                for (std::size_t ni = 0; ni < n; ++ni) {
                    double* plane = px + (ni * c + ci) * h * w;
                    const double* src = row + ni * cols_per_sample;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const long long iy =
                            static_cast<long long>(oy) * g.sh - g.ph + ky;
                        if (iy < 0 || iy >= static_cast<long long>(h)) {
                            src += ow;
                            continue;
                        }
                        double* dst_row = plane + static_cast<std::size_t>(iy) * w;
                        for (std::size_t ox = 0; ox < ow; ++ox, ++src) {
                            const long long ix =
                                static_cast<long long>(ox) * g.sw - g.pw + kx;
                            if (ix >= 0 && ix < static_cast<long long>(w)) {
                                dst_row[static_cast<std::size_t>(ix)] += *src;
                            }
                        }
                    }
                }
            }
        }
    }
    return x;
}

// (F, N*oh*ow) product matrix -> (N,F,oh,ow) batch layout, plus bias.
Tensor gather_output(const Tensor& prod, std::size_t n, std::size_t f, std::size_t oh,
                     std::size_t ow, const Tensor& b) {
    Tensor out({n, f, oh, ow});
    const std::size_t hw = oh * ow;
    const double* pp = prod.data();
    double* po = out.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t fi = 0; fi < f; ++fi) {
            const double* src = pp + fi * (n * hw) + ni * hw;
            double* dst = po + (ni * f + fi) * hw;
            const double bias = b.empty() ? 0.0 : b[fi];
            for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
        }
    }
    return out;
}

// (N,F,oh,ow) -> (F, N*oh*ow), the layout the matmuls want.
Tensor spread_grad(const Tensor& d_out) {
    const std::size_t n = d_out.extent(0), f = d_out.extent(1);
    const std::size_t hw = d_out.extent(2) * d_out.extent(3);
    Tensor prod({f, n * hw});
    const double* pd = d_out.data();
    double* pp = prod.data();
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t fi = 0; fi < f; ++fi) {
            const double* src = pd + (ni * f + fi) * hw;
            double* dst = pp + fi * (n * hw) + ni * hw;
            std::copy(src, src + hw, dst);
        }
    }
    return prod;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvGeom& g) {
    check_rank4(x, "conv2d input");
    check_rank4(w, "conv2d weights");
    if (x.extent(1) != w.extent(1)) {
        throw ShapeMismatch("conv2d channel mismatch: input " + shape_string(x.shape()) +
                            " vs weights " + shape_string(w.shape()));
    }
    if (w.extent(2) != static_cast<std::size_t>(g.kh) ||
        w.extent(3) != static_cast<std::size_t>(g.kw)) {
        throw ShapeMismatch("conv2d weight kernel differs from geometry");
    }
    const std::size_t f = w.extent(0);
    if (!b.empty() && (b.rank() != 1 || b.extent(0) != f)) {
        throw ShapeMismatch("conv2d bias must be rank 1 of length filters");
    }
    const std::size_t oh = out_extent(x.extent(2), g.kh, g.sh, g.ph, false, "conv2d");
    const std::size_t ow = out_extent(x.extent(3), g.kw, g.sw, g.pw, false, "conv2d");

    const Tensor cols = im2col(x, g, oh, ow);
    const Tensor wmat = reshape(w, {f, w.extent(1) * g.kh * g.kw});
    const Tensor prod = matmul(wmat, cols);
    return gather_output(prod, x.extent(0), f, oh, ow, b);
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& d_out, const ConvGeom& g,
                     Tensor* d_x, Tensor* d_w, Tensor* d_b) {
    check_rank4(x, "conv2d_backward input");
    check_rank4(d_out, "conv2d_backward output gradient");
    const std::size_t f = w.extent(0);
    const std::size_t oh = d_out.extent(2), ow = d_out.extent(3);
    if (d_out.extent(0) != x.extent(0) || d_out.extent(1) != f) {
        throw ShapeMismatch("conv2d_backward gradient shape disagrees with weights/batch");
    }

    if (d_b) {
        Tensor db({f});
        const std::size_t hw = oh * ow;
        for (std::size_t ni = 0; ni < x.extent(0); ++ni) {
            for (std::size_t fi = 0; fi < f; ++fi) {
                const double* src = d_out.data() + (ni * f + fi) * hw;
                double s = 0.0;
                for (std::size_t i = 0; i < hw; ++i) s += src[i];
                db[fi] += s;
            }
        }
        *d_b = std::move(db);
    }
    if (!d_x && !d_w) return;

    const Tensor prod = spread_grad(d_out);
    const Tensor wmat = reshape(w, {f, w.extent(1) * g.kh * g.kw});
    if (d_w) {
        const Tensor cols = im2col(x, g, oh, ow);
        *d_w = reshape(matmul_nt(prod, cols), w.shape());
    }
    if (d_x) {
        const Tensor dcols = matmul_tn(wmat, prod);
        *d_x = col2im(dcols, x.shape(), g, oh, ow);
    }
}

Tensor conv2d_input_adjoint(const Tensor& w, const Tensor& d_out, const Shape& x_shape,
                            const ConvGeom& g) {
    if (x_shape.size() != 4) throw ShapeMismatch("conv2d_input_adjoint needs an N,C,H,W shape");
    const std::size_t f = w.extent(0);
    const Tensor prod = spread_grad(d_out);
    const Tensor wmat = reshape(w, {f, w.extent(1) * g.kh * g.kw});
    const Tensor dcols = matmul_tn(wmat, prod);
    return col2im(dcols, x_shape, g, d_out.extent(2), d_out.extent(3));
}

Tensor maxpool2d(const Tensor& x, const PoolGeom& g, std::vector<std::uint32_t>* switches) {
    check_rank4(x, "maxpool2d input");
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
    const std::size_t oh = out_extent(h, g.kh, g.sh, g.ph, g.ceil_mode, "maxpool2d");
    const std::size_t ow = out_extent(w, g.kw, g.sw, g.pw, g.ceil_mode, "maxpool2d");
    Tensor out({n, c, oh, ow});
    if (switches) switches->assign(out.size(), 0);

    const double* px = x.data();
    double* po = out.data();
    std::size_t oi = 0;
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double* plane = px + (ni * c + ci) * h * w;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const long long y0 = static_cast<long long>(oy) * g.sh - g.ph;
                const std::size_t ys = static_cast<std::size_t>(std::max(y0, 0LL));
                const std::size_t ye = static_cast<std::size_t>(
                    std::min(y0 + g.kh, static_cast<long long>(h)));
                for (std::size_t ox = 0; ox < ow; ++ox, ++oi) {
                    const long long x0 = static_cast<long long>(ox) * g.sw - g.pw;
                    const std::size_t xs = static_cast<std::size_t>(std::max(x0, 0LL));
                    const std::size_t xe = static_cast<std::size_t>(
                        std::min(x0 + g.kw, static_cast<long long>(w)));
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_pos = ys * w + xs;
                    for (std::size_t y = ys; y < ye; ++y) {
                        for (std::size_t xq = xs; xq < xe; ++xq) {
                            const double v = plane[y * w + xq];
                            if (v > best) {
                                best = v;
                                best_pos = y * w + xq;
                            }
                        }
                    }
                    po[oi] = best;
                    if (switches) (*switches)[oi] = static_cast<std::uint32_t>(best_pos);
                }
            }
        }
    }
    return out;
}

Tensor pool_scatter(const Tensor& values, const Shape& x_shape,
                    const std::vector<std::uint32_t>& switches) {
    check_rank4(values, "pool_scatter values");
    if (x_shape.size() != 4) throw ShapeMismatch("pool_scatter needs an N,C,H,W target shape");
    if (switches.size() != values.size()) {
        throw ShapeMismatch("pool_scatter switch count differs from value count");
    }
    const std::size_t n = values.extent(0), c = values.extent(1);
    const std::size_t hw = x_shape[2] * x_shape[3];
    const std::size_t out_hw = values.extent(2) * values.extent(3);
    if (n != x_shape[0] || c != x_shape[1]) {
        throw ShapeMismatch("pool_scatter batch/channel mismatch");
    }
    Tensor x(x_shape);
    double* px = x.data();
    const double* pv = values.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        double* dst = px + plane * hw;
        const double* src = pv + plane * out_hw;
        const std::uint32_t* sw = switches.data() + plane * out_hw;
        for (std::size_t i = 0; i < out_hw; ++i) dst[sw[i]] += src[i];
    }
    return x;
}

}  // namespace convfeat
