#include <doctest.h>

#include <cmath>
#include <vector>

#include "convfeat/conv_ops.hpp"
#include "convfeat/rng.hpp"
#include "oracles.hpp"

using namespace convfeat;

TEST_CASE("conv2d matches the naive nested-loop oracle") {
    Rng rng(101);
    struct Case {
        std::size_t n, c, h, w, f;
        ConvGeom g;
    };
    const std::vector<Case> cases = {
        {1, 1, 5, 5, 1, {3, 3, 1, 1, 0, 0}},
        {2, 3, 8, 7, 4, {3, 3, 1, 1, 0, 0}},
        {2, 2, 9, 9, 3, {3, 3, 2, 2, 0, 0}},
        {1, 2, 6, 6, 2, {3, 3, 1, 1, 1, 1}},
        {2, 1, 7, 5, 2, {5, 3, 2, 1, 2, 1}},  // rectangular kernel, mixed stride/pad
        {1, 4, 4, 4, 6, {4, 4, 1, 1, 0, 0}},  // full-extent kernel
        {3, 1, 5, 5, 2, {1, 1, 1, 1, 0, 0}},  // 1x1
    };
    for (const Case& tc : cases) {
        Tensor x = oracles::random_tensor({tc.n, tc.c, tc.h, tc.w}, rng);
        Tensor w = oracles::random_tensor(
            {tc.f, tc.c, static_cast<std::size_t>(tc.g.kh), static_cast<std::size_t>(tc.g.kw)},
            rng);
        Tensor b = oracles::random_tensor({tc.f}, rng);
        Tensor got = conv2d(x, w, b, tc.g);
        Tensor want = oracles::naive_conv2d(x, w, b, tc.g);
        REQUIRE(got.shape() == want.shape());
        CHECK(oracles::max_abs_diff(got, want) < 1e-12);

        Tensor no_bias = conv2d(x, w, Tensor(), tc.g);
        CHECK(oracles::max_abs_diff(no_bias, oracles::naive_conv2d(x, w, Tensor(), tc.g)) <
              1e-12);
    }
}

TEST_CASE("conv2d validates shapes") {
    Tensor x({1, 2, 5, 5});
    Tensor w({3, 2, 3, 3});
    ConvGeom g{3, 3, 1, 1, 0, 0};
    CHECK_THROWS_AS(conv2d(Tensor({5, 5}), w, Tensor(), g), ShapeMismatch);
    CHECK_THROWS_AS(conv2d(x, Tensor({3, 4, 3, 3}), Tensor(), g), ShapeMismatch);  // channels
    CHECK_THROWS_AS(conv2d(x, w, Tensor({2}), g), ShapeMismatch);                  // bias length
    ConvGeom wrong = g;
    wrong.kh = 2;
    CHECK_THROWS_AS(conv2d(x, w, Tensor(), wrong), ShapeMismatch);  // geometry vs weights
    ConvGeom huge{9, 9, 1, 1, 0, 0};
    CHECK_THROWS_AS(conv2d(x, Tensor({3, 2, 9, 9}), Tensor(), huge), ShapeMismatch);
}

TEST_CASE("conv2d_backward gradients satisfy exact bilinear identities") {
    Rng rng(202);
    ConvGeom g{3, 3, 2, 2, 1, 1};
    Tensor x = oracles::random_tensor({2, 3, 7, 6}, rng);
    Tensor w = oracles::random_tensor({4, 3, 3, 3}, rng);
    Tensor y = conv2d(x, w, Tensor(), g);
    Tensor d_out = oracles::random_tensor(y.shape(), rng);

    Tensor d_x, d_w, d_b;
    conv2d_backward(x, w, d_out, g, &d_x, &d_w, &d_b);
    REQUIRE(d_x.shape() == x.shape());
    REQUIRE(d_w.shape() == w.shape());
    REQUIRE(d_b.shape() == Shape{4});

    // d/dw of <conv(x,w), d_out> probed along a random direction w2:
    // <conv(x,w2), d_out> must equal <w2, d_w> since conv is linear in w.
    Tensor w2 = oracles::random_tensor(w.shape(), rng);
    const double lhs_w = oracles::dot_all(conv2d(x, w2, Tensor(), g), d_out);
    const double rhs_w = oracles::dot_all(w2, d_w);
    CHECK(std::abs(lhs_w - rhs_w) < 1e-8 * std::max(1.0, std::abs(lhs_w)));

    // Same probe in x: <conv(x2,w), d_out> == <x2, d_x>.
    Tensor x2 = oracles::random_tensor(x.shape(), rng);
    const double lhs_x = oracles::dot_all(conv2d(x2, w, Tensor(), g), d_out);
    const double rhs_x = oracles::dot_all(x2, d_x);
    CHECK(std::abs(lhs_x - rhs_x) < 1e-8 * std::max(1.0, std::abs(lhs_x)));

    // Bias gradient is the per-filter sum of the upstream gradient.
    for (std::size_t f = 0; f < 4; ++f) {
        double s = 0.0;
        for (std::size_t n = 0; n < d_out.extent(0); ++n)
            for (std::size_t oy = 0; oy < d_out.extent(2); ++oy)
                for (std::size_t ox = 0; ox < d_out.extent(3); ++ox)
                    s += d_out(n, f, oy, ox);
        CHECK(d_b[f] == doctest::Approx(s).epsilon(1e-12));
    }

    // Null out-params skip that gradient; the rest still computes.
    Tensor only_dx;
    conv2d_backward(x, w, d_out, g, &only_dx, nullptr, nullptr);
    CHECK(oracles::max_abs_diff(only_dx, d_x) == 0.0);
}

TEST_CASE("conv2d_input_adjoint is the exact adjoint of the conv map") {
    Rng rng(303);
    for (const ConvGeom& g : {ConvGeom{3, 3, 1, 1, 0, 0}, ConvGeom{5, 3, 2, 1, 2, 1},
                              ConvGeom{2, 2, 2, 2, 0, 0}}) {
        const Shape xs{2, 2, 8, 7};
        Tensor x = oracles::random_tensor(xs, rng);
        Tensor w = oracles::random_tensor(
            {3, 2, static_cast<std::size_t>(g.kh), static_cast<std::size_t>(g.kw)}, rng);
        Tensor y = conv2d(x, w, Tensor(), g);
        Tensor v = oracles::random_tensor(y.shape(), rng);

        const double lhs = oracles::dot_all(y, v);
        const double rhs = oracles::dot_all(x, conv2d_input_adjoint(w, v, xs, g));
        CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(lhs)));

        // And it coincides with the d_x path of the full backward.
        Tensor d_x;
        conv2d_backward(x, w, v, g, &d_x, nullptr, nullptr);
        CHECK(oracles::max_abs_diff(conv2d_input_adjoint(w, v, xs, g), d_x) == 0.0);
    }
}

TEST_CASE("maxpool2d matches the naive oracle across modes") {
    Rng rng(404);
    struct Case {
        std::size_t n, c, h, w;
        PoolGeom g;
    };
    const std::vector<Case> cases = {
        {2, 3, 8, 8, {2, 2, 2, 2, 0, 0, false}},
        {1, 2, 5, 5, {2, 2, 2, 2, 0, 0, true}},   // ceil leaves a clipped last window
        {2, 1, 21, 21, {4, 4, 2, 2, 0, 0, true}},
        {1, 1, 6, 7, {3, 2, 2, 3, 1, 1, false}},  // rectangular, padded
        {1, 2, 9, 9, {4, 4, 2, 2, 0, 0, false}},
        {1, 1, 4, 4, {4, 4, 4, 4, 0, 0, true}},   // single window
    };
    for (const Case& tc : cases) {
        Tensor x = oracles::random_tensor({tc.n, tc.c, tc.h, tc.w}, rng);
        Tensor got = maxpool2d(x, tc.g, nullptr);
        Tensor want = oracles::naive_maxpool(x, tc.g);
        REQUIRE(got.shape() == want.shape());
        CHECK(oracles::max_abs_diff(got, want) == 0.0);
    }
    CHECK_THROWS_AS(maxpool2d(Tensor({4, 4}), PoolGeom{}, nullptr), ShapeMismatch);
}

TEST_CASE("pool switches record the argmax and ties take the first cell") {
    // Values chosen so each 2x2 window has a unique max at a known spot.
    Tensor x({1, 1, 4, 4}, {1, 2, 0, 0,
                            3, 0, 0, 4,
                            0, 9, 8, 0,
                            7, 0, 0, 6});
    std::vector<std::uint32_t> sw;
    PoolGeom g{2, 2, 2, 2, 0, 0, false};
    Tensor out = maxpool2d(x, g, &sw);
    REQUIRE(out.shape() == Shape{1, 1, 2, 2});
    CHECK(out(0, 0, 0, 0) == 3.0);
    CHECK(out(0, 0, 0, 1) == 4.0);
    CHECK(out(0, 0, 1, 0) == 9.0);
    CHECK(out(0, 0, 1, 1) == 8.0);
    REQUIRE(sw.size() == 4);
    CHECK(sw[0] == 1 * 4 + 0);  // flat y*W+x within the input plane
    CHECK(sw[1] == 1 * 4 + 3);
    CHECK(sw[2] == 2 * 4 + 1);
    CHECK(sw[3] == 2 * 4 + 2);

    // Constant plane: every switch points at its window's top-left cell.
    Tensor flat = Tensor::full({1, 1, 4, 4}, 5.0);
    maxpool2d(flat, g, &sw);
    CHECK(sw[0] == 0 * 4 + 0);
    CHECK(sw[1] == 0 * 4 + 2);
    CHECK(sw[2] == 2 * 4 + 0);
    CHECK(sw[3] == 2 * 4 + 2);

    // Clipped ceil windows point inside the image.
    Rng odd_rng(7);
    Tensor odd = oracles::random_tensor({1, 1, 5, 5}, odd_rng);
    PoolGeom gc{2, 2, 2, 2, 0, 0, true};
    Tensor oc = maxpool2d(odd, gc, &sw);
    REQUIRE(oc.shape() == Shape{1, 1, 3, 3});
    for (std::uint32_t s : sw) CHECK(s < 25);
    CHECK(oc(0, 0, 2, 2) == odd(0, 0, 4, 4));  // bottom-right window is the single cell (4,4)
    CHECK(sw[8] == 4 * 5 + 4);
}

TEST_CASE("pool_scatter is the exact adjoint of switch selection") {
    Rng rng(505);
    Tensor x = oracles::random_tensor({2, 3, 7, 6}, rng);
    PoolGeom g{3, 3, 2, 2, 1, 1, false};
    std::vector<std::uint32_t> sw;
    Tensor out = maxpool2d(x, g, &sw);

    // Gather through the recorded switches: a linear map S on any input.
    auto gather = [&](const Tensor& t) {
        Tensor r(out.shape());
        const std::size_t hw = t.extent(2) * t.extent(3);
        const std::size_t ohw = out.extent(2) * out.extent(3);
        for (std::size_t plane = 0; plane < t.extent(0) * t.extent(1); ++plane) {
            for (std::size_t i = 0; i < ohw; ++i) {
                r[plane * ohw + i] = t[plane * hw + sw[plane * ohw + i]];
            }
        }
        return r;
    };

    Tensor x2 = oracles::random_tensor(x.shape(), rng);
    Tensor v = oracles::random_tensor(out.shape(), rng);
    const double lhs = oracles::dot_all(gather(x2), v);
    const double rhs = oracles::dot_all(x2, pool_scatter(v, x.shape(), sw));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

    // Scattering the pooled values reproduces x exactly at argmax positions
    // and zero elsewhere; overlapping windows may accumulate, so check via
    // the ones-scatter: each output cell contributes exactly once.
    Tensor ones = Tensor::full(out.shape(), 1.0);
    Tensor counts = pool_scatter(ones, x.shape(), sw);
    double total = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) total += counts[i];
    CHECK(total == static_cast<double>(out.size()));

    CHECK_THROWS_AS(pool_scatter(v, Shape{2, 3, 7}, sw), ShapeMismatch);
    std::vector<std::uint32_t> short_sw(sw.begin(), sw.end() - 1);
    CHECK_THROWS_AS(pool_scatter(v, x.shape(), short_sw), ShapeMismatch);
}
