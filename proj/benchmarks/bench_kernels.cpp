#include <benchmark/benchmark.h>

#include "convfeat/conv_ops.hpp"
#include "convfeat/rng.hpp"
#include "convfeat/tensor.hpp"

using namespace convfeat;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-1.0, 1.0);
    return t;
}

void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = random_tensor({n, n}, rng);
    const Tensor b = random_tensor({n, n}, rng);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(2 * n * n * n));
}

// The first convolution of the 28x28 architecture over one mini-batch.
void bm_conv2d_forward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(2);
    const Tensor x = random_tensor({batch, 1, 28, 28}, rng);
    const Tensor w = random_tensor({32, 1, 5, 5}, rng);
    const Tensor b = random_tensor({32}, rng);
    ConvGeom g;
    g.kh = g.kw = 5;
    for (auto _ : state) {
        Tensor y = conv2d(x, w, b, g);
        benchmark::DoNotOptimize(y.data());
    }
}

void bm_conv2d_backward(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(3);
    const Tensor x = random_tensor({batch, 1, 28, 28}, rng);
    const Tensor w = random_tensor({32, 1, 5, 5}, rng);
    ConvGeom g;
    g.kh = g.kw = 5;
    const Tensor d_out = random_tensor({batch, 32, 24, 24}, rng);
    Tensor d_x, d_w, d_b;
    for (auto _ : state) {
        conv2d_backward(x, w, d_out, g, &d_x, &d_w, &d_b);
        benchmark::DoNotOptimize(d_x.data());
    }
}

void bm_maxpool(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    Rng rng(4);
    const Tensor x = random_tensor({batch, 32, 24, 24}, rng);
    PoolGeom g;
    std::vector<std::uint32_t> switches;
    for (auto _ : state) {
        Tensor y = maxpool2d(x, g, &switches);
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(bm_matmul)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_conv2d_forward)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_conv2d_backward)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_maxpool)->Arg(64)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
